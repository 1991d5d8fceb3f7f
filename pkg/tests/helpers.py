from __future__ import annotations

import numpy as np

from tgs.core import FrameMask


def mask_of(rows: list[str]) -> FrameMask:
    """Build a mask from strings of 0/1 characters, one per row."""
    bits = np.array([[ch == "1" for ch in row] for row in rows], dtype=bool)
    return FrameMask.from_array(bits)


def random_mask(rng: np.random.Generator, width: int, height: int,
                p: float = 0.5) -> FrameMask:
    return FrameMask.from_array(rng.random((height, width)) < p)
