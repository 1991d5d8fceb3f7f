"""Scripted mock responses loaded from the shared mock-spec JSON file.

Self-contained on purpose: the adapter speaks to clients only through the
wire protocol, so it re-implements the tiny bits it needs (RLE runs for box
interiors) rather than importing client code.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .schemas import Candidate, RleMask


class UndeclaredLookup(Exception):
    """The mock spec does not cover this request; never fabricate data."""


def box_interior_rle(w: int, h: int, x1: int, y1: int, x2: int, y2: int) -> RleMask:
    """Canonical RLE of a half-open box interior on a w x h raster."""
    if not (0 <= x1 < x2 <= w and 0 <= y1 < y2 <= h):
        raise ValueError(f"box ({x1},{y1},{x2},{y2}) does not fit {w}x{h}")
    segments: list[tuple[int, bool]] = [(y1 * w + x1, False)]
    for row in range(y1, y2):
        segments.append((x2 - x1, True))
        if row < y2 - 1:
            segments.append(((w - x2) + x1, False))
    segments.append(((h - y2) * w + (w - x2), False))

    runs = [0]
    fg = False
    for length, is_fg in segments:
        if length == 0:
            continue
        if is_fg == fg:
            runs[-1] += length
        else:
            runs.append(length)
            fg = is_fg
    return RleMask(w=w, h=h, runs=runs)


@dataclass(frozen=True)
class MockSpec:
    think: dict[str, str] = field(default_factory=dict)
    ground: dict[str, dict[str, list[Candidate]]] = field(default_factory=dict)
    segment_rule: str = "box_interior"
    segment_cases: dict[str, dict[str, RleMask]] = field(default_factory=dict)
    generate: dict[str, str] = field(default_factory=dict)

    @classmethod
    def load(cls, path: str | Path) -> "MockSpec":
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
        seg = obj.get("segment", {"rule": "box_interior"})
        rule = seg.get("rule", "box_interior")
        if rule not in ("box_interior", "cases"):
            raise ValueError(f"unknown segment rule {rule!r}")
        cases = {}
        if rule == "cases":
            cases = {
                frame: {key: RleMask.model_validate(payload)
                        for key, payload in by_box.items()}
                for frame, by_box in seg.get("cases", {}).items()
            }
        return cls(
            think=dict(obj.get("think", {})),
            ground={
                frame: {query: [Candidate.model_validate(c) for c in cands]
                        for query, cands in by_query.items()}
                for frame, by_query in obj.get("ground", {}).items()
            },
            segment_rule=rule,
            segment_cases=cases,
            generate=dict(obj.get("generate", {})),
        )

    def think_text(self, uid: str) -> str:
        if uid not in self.think:
            raise UndeclaredLookup(f"no think text declared for uid {uid!r}")
        return self.think[uid]

    def candidates(self, frame_id: str, query: str) -> list[Candidate]:
        by_query = self.ground.get(frame_id)
        if by_query is None or query not in by_query:
            raise UndeclaredLookup(
                f"no candidates declared for frame {frame_id!r} query {query!r}")
        return by_query[query]

    def mask(self, frame_id: str, box: tuple[int, int, int, int],
             dims: tuple[int, int] | None) -> RleMask:
        if self.segment_rule == "box_interior":
            if dims is None:
                raise ValueError(
                    f"frame {frame_id!r} has no resolvable dimensions for the "
                    f"box-interior rule")
            w, h = dims
            return box_interior_rle(w, h, *box)
        key = ",".join(str(v) for v in box)
        by_box = self.segment_cases.get(frame_id, {})
        if key not in by_box:
            raise UndeclaredLookup(
                f"no mask declared for frame {frame_id!r} box {key}")
        return by_box[key]

    def generated(self, uid: str) -> str:
        if uid not in self.generate:
            raise UndeclaredLookup(f"no generation declared for uid {uid!r}")
        return self.generate[uid]
