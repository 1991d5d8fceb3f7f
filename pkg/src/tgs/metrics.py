"""Evaluation metrics: region Jaccard, boundary F-measure, null-split S.

Conventions, stated explicitly because they differ between codebases:

- A foreground pixel is a boundary pixel if any 4-neighbor is background or
  out of frame.
- Boundary precision/recall match pixels within a Chebyshev distance
  ``tolerance_px``; the default tolerance is round(0.8% of the frame
  diagonal), but at least 1 px.
- Jaccard of two empty masks is 1 (correct rejection is not penalized).
- Split aggregation averages per frame, then per sample, then per split;
  the mixed split pools seen+unseen samples rather than averaging the two
  split means. A pooled-frames variant is available behind a switch.
"""

from __future__ import annotations

import csv
import enum
import io
import math
import re
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .core import FrameMask, Split, mask_area


# ---------------------------------------------------------------------------
# Per-frame metrics
# ---------------------------------------------------------------------------


def _check_dims(pred: FrameMask, gt: FrameMask) -> None:
    if (pred.width, pred.height) != (gt.width, gt.height):
        raise ValueError(
            f"mask dimension mismatch: pred {pred.width}x{pred.height} "
            f"vs gt {gt.width}x{gt.height}")


def jaccard(pred: FrameMask, gt: FrameMask) -> float:
    """|pred & gt| / |pred | gt|; 1.0 when both masks are empty."""
    _check_dims(pred, gt)
    inter = int(np.count_nonzero(pred.bits & gt.bits))
    union = int(np.count_nonzero(pred.bits | gt.bits))
    if union == 0:
        return 1.0
    return inter / union


def boundary_pixels(mask: FrameMask) -> np.ndarray:
    """Bool raster of boundary pixels (4-connectivity, frame border counts)."""
    m = mask.bits
    padded = np.pad(m, 1, constant_values=False)
    interior = (padded[:-2, 1:-1] & padded[2:, 1:-1]
                & padded[1:-1, :-2] & padded[1:-1, 2:])
    return m & ~interior


def default_tolerance(width: int, height: int) -> int:
    return max(1, round(0.008 * math.hypot(width, height)))


def _chebyshev_dilate(b: np.ndarray, tol: int) -> np.ndarray:
    if tol == 0:
        return b
    h, w = b.shape
    out = np.zeros_like(b)
    for dy in range(-tol, tol + 1):
        ys = slice(max(0, dy), min(h, h + dy))
        yd = slice(max(0, -dy), min(h, h - dy))
        for dx in range(-tol, tol + 1):
            xs = slice(max(0, dx), min(w, w + dx))
            xd = slice(max(0, -dx), min(w, w - dx))
            out[yd, xd] |= b[ys, xs]
    return out


def boundary_f(pred: FrameMask, gt: FrameMask, tolerance_px: int | None = None) -> float:
    """Boundary F-measure: harmonic mean of boundary precision and recall."""
    _check_dims(pred, gt)
    if tolerance_px is None:
        tolerance_px = default_tolerance(pred.width, pred.height)
    if tolerance_px < 0:
        raise ValueError(f"tolerance_px must be >= 0, got {tolerance_px}")
    pb = boundary_pixels(pred)
    gb = boundary_pixels(gt)
    n_pb = int(np.count_nonzero(pb))
    n_gb = int(np.count_nonzero(gb))
    if n_pb == 0 and n_gb == 0:
        return 1.0
    precision = (int(np.count_nonzero(pb & _chebyshev_dilate(gb, tolerance_px))) / n_pb
                 if n_pb else 0.0)
    recall = (int(np.count_nonzero(gb & _chebyshev_dilate(pb, tolerance_px))) / n_gb
              if n_gb else 0.0)
    if precision + recall == 0.0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def null_s(pred: FrameMask) -> float:
    """Predicted foreground area over the background (full-frame) area.

    On the null split the ground truth has no foreground, so the background
    area is the whole frame; lower is better.
    """
    return mask_area(pred) / (pred.width * pred.height)


# ---------------------------------------------------------------------------
# Category matching
# ---------------------------------------------------------------------------


class CategoryMatch(enum.Enum):
    EXACT = "exact"
    NORMALIZED = "normalized"
    MISS = "miss"


def _normalize_category(text: str) -> str:
    text = text.casefold().replace("-", " ")
    text = re.sub(r"\s+", " ", text).strip()
    if text.endswith("s") and len(text) > 1:
        text = text[:-1]
    return text


def match_category(s_object: str, gt_category: str) -> CategoryMatch:
    """String-level agreement between a predicted category and the label."""
    if not s_object or not gt_category:
        raise ValueError("both category strings must be non-empty")
    if s_object.strip().casefold() == gt_category.strip().casefold():
        return CategoryMatch.EXACT
    if _normalize_category(s_object) == _normalize_category(gt_category):
        return CategoryMatch.NORMALIZED
    return CategoryMatch.MISS


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EvalUnit:
    """One sample's predictions paired with its split and ground truth."""

    uid: str
    split: Split
    pred: tuple[FrameMask, ...]
    gt: tuple[FrameMask, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "pred", tuple(self.pred))
        if self.gt is not None:
            object.__setattr__(self, "gt", tuple(self.gt))
            if len(self.gt) != len(self.pred):
                raise ValueError(
                    f"{self.uid!r}: {len(self.pred)} predictions vs {len(self.gt)} gt masks")


@dataclass(frozen=True)
class SampleScores:
    uid: str
    split: Split
    frame_j: tuple[float, ...] = ()
    frame_f: tuple[float, ...] = ()
    frame_s: tuple[float, ...] = ()

    @property
    def j(self) -> float:
        return float(np.mean(self.frame_j))

    @property
    def f(self) -> float:
        return float(np.mean(self.frame_f))

    @property
    def s(self) -> float:
        return float(np.mean(self.frame_s))

    def to_json(self) -> dict:
        row: dict = {"uid": self.uid, "split": self.split.value}
        if self.split is Split.NULL:
            row["S"] = self.s
            row["frame_S"] = list(self.frame_s)
        else:
            row.update(J=self.j, F=self.f)
            row["frame_J"] = list(self.frame_j)
            row["frame_F"] = list(self.frame_f)
        return row


@dataclass(frozen=True)
class SplitScores:
    j: float | None
    f: float | None
    jf: float | None
    count: int


@dataclass(frozen=True)
class EvalReport:
    per_split: dict[str, SplitScores]  # keys: seen, unseen, mix
    null_s: float | None
    null_count: int
    per_sample: tuple[SampleScores, ...]
    tolerance_px: int | None
    frame_pooling: str  # "per_sample" | "pooled"

    def to_json(self) -> dict:
        splits = {
            name: {"J": s.j, "F": s.f, "JF": s.jf, "count": s.count}
            for name, s in self.per_split.items()
        }
        return {
            "splits": splits,
            "null": {"S": self.null_s, "count": self.null_count},
            "per_sample": [s.to_json() for s in self.per_sample],
            "config": {"tolerance_px": self.tolerance_px,
                       "frame_pooling": self.frame_pooling},
        }

    def to_table(self) -> str:
        """Aligned grid mirroring the usual J / F / J&F reporting layout."""
        def fmt(v: float | None) -> str:
            return "     -" if v is None else f"{v:.4f}"

        rows = [f"{'Split':<10}{'J':>8}{'F':>8}{'J&F':>8}{'n':>6}"]
        for name, label in (("seen", "Seen"), ("unseen", "Unseen"), ("mix", "Mix")):
            s = self.per_split[name]
            rows.append(f"{label:<10}{fmt(s.j):>8}{fmt(s.f):>8}{fmt(s.jf):>8}{s.count:>6}")
        rows.append(f"{'Null (S)':<10}{fmt(self.null_s):>8}{'':>8}{'':>8}{self.null_count:>6}")
        return "\n".join(rows)

    def per_sample_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["uid", "split", "J", "F", "S"])
        for s in self.per_sample:
            if s.split is Split.NULL:
                writer.writerow([s.uid, s.split.value, "", "", repr(s.s)])
            else:
                writer.writerow([s.uid, s.split.value, repr(s.j), repr(s.f), ""])
        return buf.getvalue()


def score_sample(unit: EvalUnit, tolerance_px: int | None = None) -> SampleScores:
    if unit.split is Split.NULL:
        return SampleScores(
            uid=unit.uid, split=unit.split,
            frame_s=tuple(null_s(p) for p in unit.pred))
    if unit.gt is None:
        raise ValueError(f"sample {unit.uid!r} in split {unit.split.value} has no ground truth")
    return SampleScores(
        uid=unit.uid, split=unit.split,
        frame_j=tuple(jaccard(p, g) for p, g in zip(unit.pred, unit.gt)),
        frame_f=tuple(boundary_f(p, g, tolerance_px) for p, g in zip(unit.pred, unit.gt)))


def _mean_scores(samples: list[SampleScores], pooled: bool) -> SplitScores:
    if not samples:
        return SplitScores(j=None, f=None, jf=None, count=0)
    if pooled:
        js = [v for s in samples for v in s.frame_j]
        fs = [v for s in samples for v in s.frame_f]
    else:
        js = [s.j for s in samples]
        fs = [s.f for s in samples]
    j = float(np.mean(js))
    f = float(np.mean(fs))
    return SplitScores(j=j, f=f, jf=(j + f) / 2, count=len(samples))


def aggregate(units: Iterable[EvalUnit], *, tolerance_px: int | None = None,
              frame_pooling: str = "per_sample") -> EvalReport:
    """Score every unit and fold into per-split aggregates.

    ``frame_pooling`` selects how a split mean is formed: "per_sample"
    (default) averages each sample's frame mean, "pooled" averages over all
    frames of the split directly.
    """
    if frame_pooling not in ("per_sample", "pooled"):
        raise ValueError(f"unknown frame_pooling {frame_pooling!r}")
    pooled = frame_pooling == "pooled"
    per_sample = [score_sample(u, tolerance_px) for u in units]
    by_split: dict[Split, list[SampleScores]] = defaultdict(list)
    for s in per_sample:
        by_split[s.split].append(s)

    seen = by_split.get(Split.SEEN, [])
    unseen = by_split.get(Split.UNSEEN, [])
    nulls = by_split.get(Split.NULL, [])
    per_split = {
        "seen": _mean_scores(seen, pooled),
        "unseen": _mean_scores(unseen, pooled),
        "mix": _mean_scores(seen + unseen, pooled),
    }
    if nulls:
        if pooled:
            s_value = float(np.mean([v for s in nulls for v in s.frame_s]))
        else:
            s_value = float(np.mean([s.s for s in nulls]))
    else:
        s_value = None
    return EvalReport(
        per_split=per_split,
        null_s=s_value,
        null_count=len(nulls),
        per_sample=tuple(per_sample),
        tolerance_px=tolerance_px,
        frame_pooling=frame_pooling,
    )
