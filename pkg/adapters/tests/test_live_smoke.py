"""Gated live smoke test against real checkpoints. Not part of CI.

Enable with:
    TGS_LIVE_SMOKE=1 \
    TGS_SMOKE_GDINO=<grounding checkpoint id/path> \
    TGS_SMOKE_SAM=<sam checkpoint id/path> \
    TGS_SMOKE_IMAGE=<path to an image containing a dog> \
    pytest adapters/tests/test_live_smoke.py

Sanity only: one box above the default thresholds and a mask confined to the
frame; no benchmark-number claims.
"""

from __future__ import annotations

import os

import pytest

_ENABLED = os.environ.get("TGS_LIVE_SMOKE") == "1"
_REQUIRED = ("TGS_SMOKE_GDINO", "TGS_SMOKE_SAM", "TGS_SMOKE_IMAGE")

pytestmark = pytest.mark.skipif(
    not _ENABLED or any(not os.environ.get(k) for k in _REQUIRED),
    reason="live smoke test disabled (set TGS_LIVE_SMOKE=1 and TGS_SMOKE_* vars)")


def test_dog_query_yields_box_and_mask():
    torch = pytest.importorskip("torch")
    pytest.importorskip("transformers")
    from pathlib import Path

    from tgs_adapters.real import BoxSegmenter, GroundingDetector
    from tgs_adapters.schemas import BoxCoords, FramePayload, GroundRequest, \
        SegmentRequest

    image_path = Path(os.environ["TGS_SMOKE_IMAGE"])
    media_root = image_path.parent
    frame = FramePayload(mode="ref", frame=image_path.name)

    detector = GroundingDetector(os.environ["TGS_SMOKE_GDINO"], "cpu", media_root)
    response = detector(GroundRequest(frame=frame, query_text="dog"))
    winners = [c for c in response.candidates
               if c.box_score >= 0.1 and c.text_score >= 0.25]
    assert winners, "no candidate above the default thresholds"
    best = max(winners, key=lambda c: c.box_score)

    segmenter = BoxSegmenter(os.environ["TGS_SMOKE_SAM"], "cpu", media_root)
    seg = segmenter(SegmentRequest(frame=frame, box=BoxCoords(
        x1=best.x1, y1=best.y1, x2=best.x2, y2=best.y2)))
    mask = seg.mask
    area = sum(mask.runs[1::2])
    box_area = (best.x2 - best.x1) * (best.y2 - best.y1)
    assert 0 < area <= mask.w * mask.h
    assert area <= 1.5 * box_area  # mask roughly confined to the prompt box
