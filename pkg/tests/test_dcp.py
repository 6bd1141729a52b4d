import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uwrestore import dcp


class TestDcpMap:
    def test_constant_gray(self):
        img = np.full((3, 8, 8), 0.37)
        assert np.all(dcp.dcp_map(img) == 0.37)

    def test_single_pixel_min(self):
        img = np.zeros((3, 1, 1))
        img[:, 0, 0] = [0.9, 0.2, 0.5]
        assert dcp.dcp_map(img)[0, 0, 0] == 0.2

    def test_matches_bruteforce_min(self, rng):
        img = rng.uniform(0, 1, size=(3, 17, 13))
        out = dcp.dcp_map(img)
        for y in range(17):
            for x in range(13):
                assert out[0, y, x] == min(img[0, y, x], img[1, y, x], img[2, y, x])

    def test_rejects_bad_shape(self):
        with pytest.raises(ValueError):
            dcp.dcp_map(np.zeros((4, 4)))


class TestDarkestMask:
    def test_default_count_at_256(self, rng):
        mask = dcp.darkest_mask(rng.uniform(0, 1, size=(1, 256, 256)))
        assert mask.sum() == 656  # ceil(0.01 * 65536)

    def test_constant_input_row_major_prefix(self):
        mask = dcp.darkest_mask(np.full((1, 10, 10), 0.5), fraction=0.05)
        flat = mask.ravel()
        assert flat.sum() == 5
        assert np.all(flat[:5] == 1) and np.all(flat[5:] == 0)

    def test_exact_zero_pixels_selected(self, rng):
        arr = np.ones((1, 20, 20))
        zeros = rng.choice(400, size=4, replace=False)
        arr.ravel()[zeros] = 0.0
        mask = dcp.darkest_mask(arr, fraction=0.01)  # k = 4
        assert mask.sum() == 4
        assert set(np.flatnonzero(mask.ravel())) == set(zeros)

    def test_order_correctness(self, rng):
        values = rng.uniform(0, 1, size=(1, 31, 17))
        mask = dcp.darkest_mask(values, fraction=0.03).astype(bool)
        selected = values[mask]
        unselected = values[~mask]
        assert selected.max() <= unselected.min()

    def test_deterministic(self, rng):
        values = rng.choice([0.1, 0.2, 0.3], size=(1, 40, 40))
        a = dcp.darkest_mask(values)
        b = dcp.darkest_mask(values.copy())
        assert np.array_equal(a, b)

    def test_fraction_validation(self):
        with pytest.raises(ValueError):
            dcp.darkest_mask(np.zeros((1, 4, 4)), fraction=0.0)
        with pytest.raises(ValueError):
            dcp.darkest_mask(np.zeros((1, 4, 4)), fraction=1.5)

    @settings(max_examples=60, deadline=None)
    @given(
        h=st.integers(2, 80),
        w=st.integers(2, 80),
        fraction=st.floats(0.001, 1.0),
        cap=st.integers(1, 20000),
        seed=st.integers(0, 2**16),
    )
    def test_cardinality_exact(self, h, w, fraction, cap, seed):
        values = np.random.default_rng(seed).uniform(0, 1, size=(1, h, w))
        mask = dcp.darkest_mask(values, fraction=fraction, cap=cap)
        assert int(mask.sum()) == min(math.ceil(fraction * h * w), cap)
        assert set(np.unique(mask)) <= {0, 1}
