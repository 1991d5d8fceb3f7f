"""Shared data model: samples, detections, masks, and pipeline traces.

Everything here is immutable after construction and safe to share across
concurrent workers. Mask rasters are read-only numpy bool arrays.
"""

from __future__ import annotations

import base64
import enum
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Mapping

import numpy as np

if TYPE_CHECKING:
    from .refchain import ReasoningChain


class Split(enum.Enum):
    """Evaluation split a sample belongs to."""

    SEEN = "seen"
    UNSEEN = "unseen"
    NULL = "null"

    @classmethod
    def parse(cls, value: str) -> "Split":
        try:
            return cls(value.lower())
        except ValueError:
            raise ValueError(f"unknown split {value!r} (expected seen/unseen/null)") from None


class PromptType(enum.Enum):
    """Which text drives the grounding stage."""

    F_OBJECT = "f"
    S_OBJECT = "s"
    RAW_REFERENCE = "ref"

    @classmethod
    def parse(cls, value: str) -> "PromptType":
        try:
            return cls(value.lower())
        except ValueError:
            raise ValueError(f"unknown prompt type {value!r} (expected f/s/ref)") from None


class MaskFormat(enum.Enum):
    PORTABLE_PNG = "png"
    RLE_JSON = "rle_json"


class MaskCodecError(ValueError):
    """Malformed mask payload. Carries the byte offset or run index when known."""

    def __init__(self, message: str, *, byte_offset: int | None = None,
                 run_index: int | None = None):
        super().__init__(message)
        self.byte_offset = byte_offset
        self.run_index = run_index


# ---------------------------------------------------------------------------
# Masks
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FrameMask:
    """Binary per-frame segmentation raster.

    ``bits`` is a read-only bool array of shape (height, width), row-major,
    True = foreground.
    """

    width: int
    height: int
    bits: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"mask dimensions must be positive, got {self.width}x{self.height}")
        bits = np.asarray(self.bits, dtype=bool)
        if bits.shape != (self.height, self.width):
            if bits.size == self.width * self.height:
                bits = bits.reshape(self.height, self.width)
            else:
                raise ValueError(
                    f"bits length {bits.size} != width*height {self.width * self.height}")
        bits = np.ascontiguousarray(bits)
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "FrameMask":
        arr = np.asarray(arr)
        if arr.ndim != 2:
            raise ValueError(f"mask array must be 2-D, got shape {arr.shape}")
        h, w = arr.shape
        return cls(width=w, height=h, bits=arr.astype(bool))

    def to_array(self) -> np.ndarray:
        return self.bits

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FrameMask):
            return NotImplemented
        return (self.width == other.width and self.height == other.height
                and np.array_equal(self.bits, other.bits))

    def __hash__(self) -> int:
        return hash((self.width, self.height, self.bits.tobytes()))


def mask_area(mask: FrameMask) -> int:
    """Number of foreground pixels."""
    return int(np.count_nonzero(mask.bits))


def all_background(width: int, height: int) -> FrameMask:
    """The default mask when no object is found: zero foreground pixels."""
    if width < 1 or height < 1:
        raise ValueError(f"dimensions must be positive, got {width}x{height}")
    return FrameMask(width=width, height=height, bits=np.zeros((height, width), dtype=bool))


def mask_from_box(width: int, height: int, coords: tuple[int, int, int, int]) -> FrameMask:
    """Mask whose foreground is the half-open box interior [x1,x2) x [y1,y2)."""
    x1, y1, x2, y2 = coords
    if not (0 <= x1 < x2 <= width and 0 <= y1 < y2 <= height):
        raise ValueError(f"box {coords} does not fit a {width}x{height} frame")
    bits = np.zeros((height, width), dtype=bool)
    bits[y1:y2, x1:x2] = True
    return FrameMask(width=width, height=height, bits=bits)


def rle_encode(mask: FrameMask) -> dict:
    """Row-major run-length encoding ``{"w", "h", "runs"}``.

    Runs alternate background/foreground starting with a background run,
    which may be length 0. Only the leading run may be zero.
    """
    flat = mask.bits.ravel()
    runs: list[int] = []
    current = False  # encoding starts in background
    count = 0
    for value in flat:
        if bool(value) == current:
            count += 1
        else:
            runs.append(count)
            current = not current
            count = 1
    runs.append(count)
    return {"w": mask.width, "h": mask.height, "runs": runs}


def rle_decode(payload: Mapping) -> FrameMask:
    for key in ("w", "h", "runs"):
        if key not in payload:
            raise MaskCodecError(f"RLE payload missing key {key!r}")
    w, h, runs = payload["w"], payload["h"], payload["runs"]
    if not (isinstance(w, int) and isinstance(h, int)) or w < 1 or h < 1:
        raise MaskCodecError(f"RLE dimensions must be positive integers, got w={w!r} h={h!r}")
    if not isinstance(runs, (list, tuple)):
        raise MaskCodecError("RLE runs must be a list")
    flat = np.zeros(w * h, dtype=bool)
    pos = 0
    current = False
    for i, run in enumerate(runs):
        if not isinstance(run, int) or run < 0:
            raise MaskCodecError(f"RLE run {run!r} is not a non-negative integer", run_index=i)
        if pos + run > w * h:
            raise MaskCodecError(
                f"RLE runs overflow {w}x{h} raster at run {i}", run_index=i)
        if current:
            flat[pos:pos + run] = True
        pos += run
        current = not current
    if pos != w * h:
        raise MaskCodecError(
            f"RLE runs cover {pos} pixels, expected {w * h}", run_index=len(runs))
    return FrameMask(width=w, height=h, bits=flat.reshape(h, w))


def encode_mask(mask: FrameMask, fmt: MaskFormat) -> bytes | str:
    """Serialize a mask. PNG yields bytes, RLE-JSON yields text."""
    if fmt is MaskFormat.RLE_JSON:
        return json.dumps(rle_encode(mask), separators=(",", ":"))
    if fmt is MaskFormat.PORTABLE_PNG:
        from PIL import Image

        img = Image.fromarray(np.where(mask.bits, 255, 0).astype(np.uint8), mode="L")
        buf = io.BytesIO()
        img.save(buf, format="PNG")
        return buf.getvalue()
    raise ValueError(f"unknown mask format {fmt!r}")


def decode_mask(payload: bytes | str, fmt: MaskFormat) -> FrameMask:
    """Inverse of :func:`encode_mask`. Raises :class:`MaskCodecError` on bad payloads."""
    if fmt is MaskFormat.RLE_JSON:
        if isinstance(payload, bytes):
            payload = payload.decode("utf-8", errors="replace")
        try:
            obj = json.loads(payload)
        except json.JSONDecodeError as e:
            raise MaskCodecError(f"RLE payload is not valid JSON: {e.msg}",
                                 byte_offset=e.pos) from e
        if not isinstance(obj, dict):
            raise MaskCodecError("RLE payload must be a JSON object")
        return rle_decode(obj)
    if fmt is MaskFormat.PORTABLE_PNG:
        from PIL import Image

        if isinstance(payload, str):
            payload = payload.encode("utf-8")
        try:
            img = Image.open(io.BytesIO(payload))
            img.load()
        except Exception as e:
            raise MaskCodecError(f"PNG payload unreadable: {e}", byte_offset=0) from e
        if img.mode != "L":
            img = img.convert("L")
        arr = np.asarray(img)
        # tolerant read: any nonzero value counts as foreground, so 0/1 and
        # 0/255 third-party masks both load
        return FrameMask.from_array(arr > 0)
    raise ValueError(f"unknown mask format {fmt!r}")


def save_mask(mask: FrameMask, path: str | Path) -> None:
    path = Path(path)
    fmt = MaskFormat.RLE_JSON if path.suffix == ".json" else MaskFormat.PORTABLE_PNG
    payload = encode_mask(mask, fmt)
    if isinstance(payload, str):
        path.write_text(payload, encoding="utf-8")
    else:
        path.write_bytes(payload)


def load_mask(path: str | Path) -> FrameMask:
    path = Path(path)
    if path.suffix == ".json":
        return decode_mask(path.read_text(encoding="utf-8"), MaskFormat.RLE_JSON)
    return decode_mask(path.read_bytes(), MaskFormat.PORTABLE_PNG)


# ---------------------------------------------------------------------------
# Boxes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GroundedBox:
    """One detection: half-open pixel box [x1,x2) x [y1,y2) plus scores.

    Invariants are rejected at construction, never clamped.
    """

    x1: int
    y1: int
    x2: int
    y2: int
    box_score: float
    text_score: float

    def __post_init__(self):
        for name in ("x1", "y1", "x2", "y2"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or isinstance(v, bool):
                raise ValueError(f"box coordinate {name}={v!r} must be an integer")
            object.__setattr__(self, name, int(v))
        if not (0 <= self.x1 < self.x2):
            raise ValueError(f"box requires 0 <= x1 < x2, got x1={self.x1} x2={self.x2}")
        if not (0 <= self.y1 < self.y2):
            raise ValueError(f"box requires 0 <= y1 < y2, got y1={self.y1} y2={self.y2}")
        for name in ("box_score", "text_score"):
            s = float(getattr(self, name))
            if not (0.0 <= s <= 1.0):
                raise ValueError(f"{name}={s} outside [0, 1]")
            object.__setattr__(self, name, s)

    @property
    def coords(self) -> tuple[int, int, int, int]:
        return (self.x1, self.y1, self.x2, self.y2)

    def fits(self, width: int, height: int) -> bool:
        return self.x2 <= width and self.y2 <= height

    def to_json(self) -> dict:
        return {"x1": self.x1, "y1": self.y1, "x2": self.x2, "y2": self.y2,
                "box_score": self.box_score, "text_score": self.text_score}

    @classmethod
    def from_json(cls, obj: Mapping) -> "GroundedBox":
        try:
            return cls(x1=obj["x1"], y1=obj["y1"], x2=obj["x2"], y2=obj["y2"],
                       box_score=obj["box_score"], text_score=obj["text_score"])
        except KeyError as e:
            raise ValueError(f"box payload missing key {e.args[0]!r}") from None


# ---------------------------------------------------------------------------
# Frames and samples
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FrameRef:
    """Reference to one video frame.

    Either a path to an image on disk, or an in-memory frame (synthetic
    dimensions and optionally raw pixels). ``frame_id`` is the stable identity
    used by scripted mocks and traces.
    """

    frame_id: str
    path: str | None = None
    width: int | None = None
    height: int | None = None
    pixels: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if not self.frame_id:
            raise ValueError("frame_id must be non-empty")
        if self.pixels is not None:
            px = np.asarray(self.pixels)
            px.setflags(write=False)
            object.__setattr__(self, "pixels", px)
            h, w = px.shape[:2]
            object.__setattr__(self, "width", w)
            object.__setattr__(self, "height", h)
        if self.path is None and (self.width is None or self.height is None):
            raise ValueError(f"frame {self.frame_id!r} needs a path or explicit dimensions")

    @classmethod
    def from_path(cls, path: str | Path, frame_id: str | None = None) -> "FrameRef":
        path = str(path)
        return cls(frame_id=frame_id or path, path=path)

    @classmethod
    def synthetic(cls, frame_id: str, width: int, height: int) -> "FrameRef":
        return cls(frame_id=frame_id, width=width, height=height)

    def size(self) -> tuple[int, int]:
        """(width, height), loading the image header when only a path is known."""
        if self.width is not None and self.height is not None:
            return (self.width, self.height)
        from PIL import Image

        with Image.open(self.path) as img:
            return img.size

    def resolved(self) -> "FrameRef":
        """Copy with width/height filled in, so later stages never touch disk."""
        if self.width is not None and self.height is not None:
            return self
        w, h = self.size()
        return FrameRef(frame_id=self.frame_id, path=self.path, width=w, height=h,
                        pixels=self.pixels)

    def png_bytes(self) -> bytes:
        """Raw PNG bytes for inline transport; needs a path or pixel data."""
        if self.path is not None:
            return Path(self.path).read_bytes()
        if self.pixels is not None:
            from PIL import Image

            buf = io.BytesIO()
            Image.fromarray(np.asarray(self.pixels)).save(buf, format="PNG")
            return buf.getvalue()
        raise ValueError(f"frame {self.frame_id!r} has no pixel source for inline transport")

    def to_payload(self, mode: str = "ref") -> dict:
        """Wire-format frame payload; ``mode`` is "ref" or "b64"."""
        w, h = (self.width, self.height)
        payload: dict = {"mode": mode, "frame": self.frame_id, "width": w, "height": h}
        if mode == "b64":
            payload["frame_b64"] = base64.b64encode(self.png_bytes()).decode("ascii")
        elif mode != "ref":
            raise ValueError(f"unknown frame payload mode {mode!r}")
        return payload


@dataclass(frozen=True)
class ReferenceSample:
    """One evaluation unit: frames, optional audio, reference text, split."""

    uid: str
    frames: tuple[FrameRef, ...]
    reference: str
    split: Split
    audio: str | None = None
    gt_masks: tuple[FrameMask, ...] | None = None
    gt_category: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))
        if not self.uid:
            raise ValueError("uid must be non-empty")
        if not self.frames:
            raise ValueError(f"sample {self.uid!r}: frames list is empty")
        if not self.reference or not self.reference.strip():
            raise ValueError(f"sample {self.uid!r}: reference text is empty")
        dims = {(f.width, f.height) for f in self.frames if f.width is not None}
        if len(dims) > 1:
            raise ValueError(f"sample {self.uid!r}: frames have mixed dimensions {sorted(dims)}")
        if self.gt_masks is not None:
            object.__setattr__(self, "gt_masks", tuple(self.gt_masks))
            if len(self.gt_masks) != len(self.frames):
                raise ValueError(
                    f"sample {self.uid!r}: {len(self.gt_masks)} gt masks for "
                    f"{len(self.frames)} frames")
            mask_dims = {(m.width, m.height) for m in self.gt_masks}
            if len(mask_dims) > 1:
                raise ValueError(f"sample {self.uid!r}: gt masks have mixed dimensions")
            if self.split is Split.NULL and any(mask_area(m) > 0 for m in self.gt_masks):
                raise ValueError(
                    f"sample {self.uid!r}: null-split ground truth must be all background")

    def frame_sizes(self) -> list[tuple[int, int]]:
        return [f.size() for f in self.frames]


@dataclass(frozen=True)
class PipelineTrace:
    """Explainability record for one pipeline run over one sample."""

    uid: str
    reasoning: str
    parsed: "ReasoningChain | None"
    prompt_used: PromptType
    boxes: tuple[GroundedBox | None, ...]
    timings: Mapping[str, float]
    tool_ids: Mapping[str, str]
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "boxes", tuple(self.boxes))
        object.__setattr__(self, "timings", dict(self.timings))
        object.__setattr__(self, "tool_ids", dict(self.tool_ids))
        object.__setattr__(self, "flags", tuple(self.flags))

    def to_json(self) -> dict:
        parsed = self.parsed
        return {
            "uid": self.uid,
            "reasoning": self.reasoning,
            "f_object": None if parsed is None else parsed.f_object,
            "s_object": None if parsed is None else parsed.s_object,
            "prompt_used": self.prompt_used.value,
            "boxes": [None if b is None else b.to_json() for b in self.boxes],
            "timings": {k: round(v, 6) for k, v in sorted(self.timings.items())},
            "tool_ids": dict(sorted(self.tool_ids.items())),
            "flags": list(self.flags),
        }
