"""Brute-force reference implementations used to check the metric code.

Deliberately naive: python sets and O(n^2) distance scans, sharing no code
with the implementations under test.
"""

from __future__ import annotations

from tgs.core import FrameMask


def pixel_set(mask: FrameMask) -> set[tuple[int, int]]:
    out = set()
    arr = mask.bits
    for r in range(mask.height):
        for c in range(mask.width):
            if arr[r, c]:
                out.add((r, c))
    return out


def oracle_jaccard(pred: FrameMask, gt: FrameMask) -> float:
    p, g = pixel_set(pred), pixel_set(gt)
    union = p | g
    if not union:
        return 1.0
    return len(p & g) / len(union)


def oracle_boundary(mask: FrameMask) -> set[tuple[int, int]]:
    arr = mask.bits
    h, w = mask.height, mask.width
    out = set()
    for r in range(h):
        for c in range(w):
            if not arr[r, c]:
                continue
            for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                rr, cc = r + dr, c + dc
                if not (0 <= rr < h and 0 <= cc < w) or not arr[rr, cc]:
                    out.add((r, c))
                    break
    return out


def oracle_boundary_f(pred: FrameMask, gt: FrameMask, tol: int) -> float:
    pb, gb = oracle_boundary(pred), oracle_boundary(gt)
    if not pb and not gb:
        return 1.0

    def matched(src: set, dst: set) -> int:
        n = 0
        for (r, c) in src:
            if any(max(abs(r - r2), abs(c - c2)) <= tol for (r2, c2) in dst):
                n += 1
        return n

    precision = matched(pb, gb) / len(pb) if pb else 0.0
    recall = matched(gb, pb) / len(gb) if gb else 0.0
    if precision + recall == 0.0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def oracle_filter(candidates, tau_bbox: float, tau_text: float, use_product: bool):
    """Exhaustive scan version of threshold filtering + selection."""
    best = None
    best_key = None
    for c in candidates:
        if c.box_score < tau_bbox or c.text_score < tau_text:
            continue
        score = c.box_score * c.text_score if use_product else c.box_score
        key = (-score, c.x1, c.y1, c.x2, c.y2)
        if best_key is None or key < best_key:
            best, best_key = c, key
    return best
