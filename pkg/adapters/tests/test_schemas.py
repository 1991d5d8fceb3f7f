from __future__ import annotations

import pytest
from pydantic import ValidationError

from tgs_adapters.mockspec import box_interior_rle
from tgs_adapters.schemas import Candidate, FramePayload, RleMask


class TestCandidate:
    def test_valid(self):
        c = Candidate(x1=1, y1=2, x2=3, y2=4, box_score=0.5, text_score=0.5)
        assert c.x2 == 3

    @pytest.mark.parametrize("patch", [
        {"x2": 1},            # x2 == x1
        {"x1": -1},           # negative
        {"y2": 2},            # y2 == y1
        {"box_score": 1.5},
        {"text_score": -0.1},
    ])
    def test_invariants_rejected(self, patch):
        base = dict(x1=1, y1=2, x2=3, y2=4, box_score=0.5, text_score=0.5)
        base.update(patch)
        with pytest.raises(ValidationError):
            Candidate(**base)


class TestRleMask:
    def test_sum_must_cover_raster(self):
        with pytest.raises(ValidationError):
            RleMask(w=2, h=2, runs=[3])

    def test_negative_run_rejected(self):
        with pytest.raises(ValidationError):
            RleMask(w=2, h=2, runs=[5, -1])

    def test_valid(self):
        assert RleMask(w=3, h=3, runs=[9]).runs == [9]


class TestFramePayload:
    def test_b64_requires_bytes(self):
        with pytest.raises(ValidationError):
            FramePayload(mode="b64", frame="f0")

    def test_declared_dims_win(self):
        p = FramePayload(mode="ref", frame="f0", width=8, height=6)
        assert p.dims() == (8, 6)

    def test_unresolvable_dims_none(self):
        assert FramePayload(mode="ref", frame="ghost.png").dims() is None


class TestBoxInteriorRle:
    def test_full_frame(self):
        m = box_interior_rle(4, 4, 0, 0, 4, 4)
        assert m.runs == [0, 16]

    def test_interior_box(self):
        m = box_interior_rle(8, 8, 2, 2, 6, 6)
        assert sum(m.runs) == 64
        assert m.runs == [18, 4, 4, 4, 4, 4, 4, 4, 18]

    def test_matches_reference_codec(self):
        # decoded raster must equal the client-side box mask
        from tgs.core import mask_from_box, rle_decode

        for box in [(0, 0, 1, 1), (2, 2, 6, 6), (0, 3, 8, 8), (7, 0, 8, 8)]:
            ours = rle_decode(box_interior_rle(8, 8, *box).model_dump())
            assert ours == mask_from_box(8, 8, box)

    def test_does_not_fit_rejected(self):
        with pytest.raises(ValueError):
            box_interior_rle(4, 4, 0, 0, 5, 2)
