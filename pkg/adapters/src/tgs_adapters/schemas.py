"""Pydantic models for the wire protocol; every egress message validates here.

The shapes mirror docs/wire_protocol.md in the main repository. Invariants
(box ordering, score ranges, run sums) are enforced by validators so a
conformant server cannot emit an invalid message.
"""

from __future__ import annotations

import base64
import io
from typing import Literal

from pydantic import BaseModel, field_validator, model_validator


class FramePayload(BaseModel):
    mode: Literal["ref", "b64"]
    frame: str
    width: int | None = None
    height: int | None = None
    frame_b64: str | None = None

    @model_validator(mode="after")
    def _b64_needs_bytes(self):
        if self.mode == "b64" and not self.frame_b64:
            raise ValueError("mode b64 requires frame_b64")
        return self

    def dims(self, media_root=None) -> tuple[int, int] | None:
        """Resolve (width, height): declared dims, inline image, or media file."""
        if self.width is not None and self.height is not None:
            return (self.width, self.height)
        from PIL import Image

        if self.frame_b64:
            with Image.open(io.BytesIO(base64.b64decode(self.frame_b64))) as img:
                return img.size
        if media_root is not None:
            path = media_root / self.frame
            if path.exists():
                with Image.open(path) as img:
                    return img.size
        return None


class Candidate(BaseModel):
    x1: int
    y1: int
    x2: int
    y2: int
    box_score: float
    text_score: float

    @model_validator(mode="after")
    def _box_invariants(self):
        if not (0 <= self.x1 < self.x2):
            raise ValueError(f"requires 0 <= x1 < x2, got {self.x1}, {self.x2}")
        if not (0 <= self.y1 < self.y2):
            raise ValueError(f"requires 0 <= y1 < y2, got {self.y1}, {self.y2}")
        for name in ("box_score", "text_score"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name}={v} outside [0, 1]")
        return self


class BoxCoords(BaseModel):
    x1: int
    y1: int
    x2: int
    y2: int

    @model_validator(mode="after")
    def _ordered(self):
        if not (0 <= self.x1 < self.x2 and 0 <= self.y1 < self.y2):
            raise ValueError(f"degenerate box ({self.x1},{self.y1},{self.x2},{self.y2})")
        return self

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.x1, self.y1, self.x2, self.y2)


class RleMask(BaseModel):
    w: int
    h: int
    runs: list[int]

    @field_validator("w", "h")
    @classmethod
    def _positive(cls, v: int) -> int:
        if v < 1:
            raise ValueError("mask dimensions must be positive")
        return v

    @model_validator(mode="after")
    def _runs_cover_raster(self):
        if any(r < 0 for r in self.runs):
            raise ValueError("runs must be non-negative")
        if sum(self.runs) != self.w * self.h:
            raise ValueError(f"runs sum {sum(self.runs)} != {self.w * self.h}")
        return self


class ThinkRequest(BaseModel):
    uid: str
    rendered_prompt: str
    frame_refs: list[FramePayload] = []
    audio_ref: str | None = None


class ThinkResponse(BaseModel):
    raw_text: str


class GroundRequest(BaseModel):
    frame: FramePayload
    query_text: str


class GroundResponse(BaseModel):
    candidates: list[Candidate]


class SegmentRequest(BaseModel):
    frame: FramePayload
    box: BoxCoords


class SegmentResponse(BaseModel):
    mask: RleMask


class GenerateRequest(BaseModel):
    uid: str
    prompt: str


class GenerateResponse(BaseModel):
    text: str
