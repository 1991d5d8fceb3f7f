"""Optional real-model handlers: open-vocabulary detection and box-prompted
segmentation via transformers checkpoints.

Imports are lazy so the mock server never needs torch. These handlers are
exercised only by the gated live smoke test (TGS_LIVE_SMOKE=1) with
checkpoints configured; they are not part of CI.
"""

from __future__ import annotations

import base64
import io
from pathlib import Path

from .schemas import (
    Candidate,
    GroundRequest,
    GroundResponse,
    RleMask,
    SegmentRequest,
    SegmentResponse,
)


def _load_image(payload, media_root: Path | None):
    from PIL import Image

    if payload.frame_b64:
        return Image.open(io.BytesIO(base64.b64decode(payload.frame_b64))).convert("RGB")
    if media_root is not None and (media_root / payload.frame).exists():
        return Image.open(media_root / payload.frame).convert("RGB")
    raise ValueError(f"cannot load pixels for frame {payload.frame!r}")


def _mask_to_rle(mask) -> RleMask:
    import numpy as np

    arr = np.asarray(mask, dtype=bool)
    h, w = arr.shape
    flat = arr.ravel()
    runs = []
    current = False
    count = 0
    for v in flat:
        if bool(v) == current:
            count += 1
        else:
            runs.append(count)
            current = not current
            count = 1
    runs.append(count)
    return RleMask(w=w, h=h, runs=runs)


class GroundingDetector:
    """Zero-shot text-conditioned detector behind /v1/ground.

    Emits every raw candidate with its box and text-match scores; threshold
    filtering stays with the client.
    """

    def __init__(self, model_id: str, device: str = "cpu",
                 media_root: Path | None = None):
        import torch
        from transformers import AutoModelForZeroShotObjectDetection, AutoProcessor

        self.device = device
        self.media_root = media_root
        self.processor = AutoProcessor.from_pretrained(model_id)
        self.model = AutoModelForZeroShotObjectDetection.from_pretrained(
            model_id).to(device)
        self.torch = torch

    def __call__(self, request: GroundRequest) -> GroundResponse:
        image = _load_image(request.frame, self.media_root)
        text = request.query_text.strip().rstrip(".") + "."
        inputs = self.processor(images=image, text=text,
                                return_tensors="pt").to(self.device)
        with self.torch.no_grad():
            outputs = self.model(**inputs)
        processed = self.processor.post_process_grounded_object_detection(
            outputs, inputs.input_ids,
            threshold=0.0, text_threshold=0.0,
            target_sizes=[image.size[::-1]])[0]
        w, h = image.size
        candidates = []
        for score, box in zip(processed["scores"], processed["boxes"]):
            x1, y1, x2, y2 = (int(round(float(v))) for v in box)
            x1, y1 = max(0, x1), max(0, y1)
            x2, y2 = min(w, x2), min(h, y2)
            if x2 <= x1 or y2 <= y1:
                continue
            s = min(1.0, max(0.0, float(score)))
            # the processor folds text matching into one score; report it on
            # both channels so client-side thresholds stay meaningful
            candidates.append(Candidate(x1=x1, y1=y1, x2=x2, y2=y2,
                                        box_score=s, text_score=s))
        return GroundResponse(candidates=candidates)


class BoxSegmenter:
    """Box-prompted segmentation behind /v1/segment."""

    def __init__(self, model_id: str, device: str = "cpu",
                 media_root: Path | None = None):
        import torch
        from transformers import AutoProcessor

        try:
            from transformers import Sam2Model as SamModel
        except ImportError:
            from transformers import SamModel

        self.device = device
        self.media_root = media_root
        self.processor = AutoProcessor.from_pretrained(model_id)
        self.model = SamModel.from_pretrained(model_id).to(device)
        self.torch = torch

    def __call__(self, request: SegmentRequest) -> SegmentResponse:
        import numpy as np

        image = _load_image(request.frame, self.media_root)
        box = [[list(map(float, request.box.as_tuple()))]]
        inputs = self.processor(images=image, input_boxes=box,
                                return_tensors="pt").to(self.device)
        with self.torch.no_grad():
            outputs = self.model(**inputs)
        masks = self.processor.image_processor.post_process_masks(
            outputs.pred_masks.cpu(), inputs["original_sizes"].cpu(),
            inputs["reshaped_input_sizes"].cpu())[0]
        scores = outputs.iou_scores.cpu().numpy().ravel()
        best = int(np.argmax(scores))
        mask = np.asarray(masks[0][best].cpu().numpy(), dtype=bool)
        return SegmentResponse(mask=_mask_to_rle(mask))
