import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import max_rel_error, numeric_grad
from mspyrpool.errors import DomainError, ShapeError
from mspyrpool.pyrpool import (
    feature_layout,
    level_set,
    pool_level,
    pyr_backward,
    pyr_forward,
    pyr_output_dim,
    scatter_level,
    tile_bounds,
)


def brute_force_pyramid(x, levels):
    """Per-tile, per-map loops over explicit pixel lists."""
    H, W, K = x.shape
    out = []
    for l in levels:
        for tr in range(l):
            for tc in range(l):
                rows = range(tr * H // l, (tr + 1) * H // l)
                cols = range(tc * W // l, (tc + 1) * W // l)
                for m in range(K):
                    out.append(max(x[r, c, m] for r in rows for c in cols))
    return np.array(out)


def test_tile_bounds_examples():
    assert tile_bounds(4, 4, 2) == [(0, 2, 0, 2), (0, 2, 2, 4), (2, 4, 0, 2), (2, 4, 2, 4)]
    rows = sorted({(r0, r1) for r0, r1, _, _ in tile_bounds(5, 5, 2)})
    assert rows == [(0, 2), (2, 5)]
    with pytest.raises(ShapeError):
        tile_bounds(3, 8, 4)


def test_tile_bounds_partition_exhaustive():
    for H, W in itertools.product(range(1, 13), repeat=2):
        for l in range(1, min(4, H, W) + 1):
            cover = np.zeros((H, W), dtype=int)
            for r0, r1, c0, c1 in tile_bounds(H, W, l):
                assert r1 > r0 and c1 > c0
                cover[r0:r1, c0:c1] += 1
            assert np.all(cover == 1)


def test_level_set_validation():
    assert level_set([1, 2, 4]) == (1, 2, 4)
    for bad in ([], [0, 1], [2, 1], [1, 1]):
        with pytest.raises(DomainError):
            level_set(bad)


def test_global_max_and_constant_image(rng):
    x = rng.normal(size=(7, 9, 1))
    y, _ = pyr_forward(x, [1])
    assert y.tolist() == [x.max()]
    y, _ = pyr_forward(np.full((6, 5, 3), 2.5), [1, 2, 3])
    assert np.all(y == 2.5)


def test_matches_brute_force(rng):
    x = rng.normal(size=(4, 4, 2))
    y, _ = pyr_forward(x, [1, 2])
    assert y.shape == (10,)
    assert np.array_equal(y, brute_force_pyramid(x, [1, 2]))
    x = rng.normal(size=(17, 31, 3))
    assert np.array_equal(pyr_forward(x, [1, 2, 3, 4])[0], brute_force_pyramid(x, [1, 2, 3, 4]))


def test_layout_order(rng):
    x = rng.normal(size=(6, 6, 2))
    y, _ = pyr_forward(x, [1, 3])
    layout = feature_layout(2, [1, 3])
    assert len(layout) == y.size
    l, tr, tc, m = layout[2 + 4 * 2 + 1]  # level 3, tile 4 (centre), map 1
    assert (l, tr, tc, m) == (3, 1, 1, 1)
    assert y[2 + 4 * 2 + 1] == x[2:4, 2:4, 1].max()


def test_oversized_level():
    with pytest.raises(ShapeError):
        pyr_forward(np.zeros((3, 8, 1)), [1, 4])


def test_backward_single_level():
    x = np.arange(12.0).reshape(3, 4, 1)
    y, rec = pyr_forward(x, [1])
    dx = pyr_backward(rec, np.array([3.0]))
    assert dx[2, 3, 0] == 3.0 and np.count_nonzero(dx) == 1


def test_backward_accumulates_across_levels():
    x = np.array([[1.0, 4.0], [2.0, 3.0]])[:, :, None]
    y, rec = pyr_forward(x, [1, 2])
    delta = np.array([10.0, 1.0, 2.0, 3.0, 4.0])
    dx = pyr_backward(rec, delta)[:, :, 0]
    assert np.array_equal(dx, [[1.0, 12.0], [3.0, 4.0]])
    with pytest.raises(ShapeError):
        pyr_backward(rec, np.zeros(4))


@pytest.mark.parametrize("seed", range(10))
def test_backward_finite_difference(seed):
    rng = np.random.default_rng(seed)
    H, W = rng.integers(4, 12, size=2)
    K = int(rng.integers(1, 4))
    x = rng.permutation(np.arange(H * W * K, dtype=float)).reshape(H, W, K) * 0.01
    levels = [1, 2, 3, 4][: int(rng.integers(1, 5))]
    y, rec = pyr_forward(x, levels)
    delta = rng.normal(size=y.size)
    numeric = numeric_grad(lambda: pyr_forward(x, levels)[0] @ delta, x)
    assert max_rel_error(pyr_backward(rec, delta), numeric) < 1e-6


@pytest.mark.parametrize("seed", range(5))
def test_backward_is_sum_of_level_scatters(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(13, 10, 3))
    levels = (1, 2, 4)
    y, rec = pyr_forward(x, levels)
    delta = rng.normal(size=y.size)
    total = np.zeros_like(x)
    offset = 0
    for l in levels:
        _, rows, cols = pool_level(x, l)
        n = l * l * 3
        total += scatter_level(x.shape, rows, cols, delta[offset : offset + n].reshape(l * l, 3))
        offset += n
    assert np.array_equal(pyr_backward(rec, delta), total)


def test_output_dim_examples():
    assert pyr_output_dim(100, [(1, 2, 4)]) == 2100
    assert pyr_output_dim(1024, [(1, 2, 4)]) == 21504
    assert pyr_output_dim(100, [(1, 2, 4), (1, 2, 3)]) == 3500
    assert pyr_output_dim(1, [(1,)]) == 1


@pytest.mark.parametrize("size", [(8, 8), (17, 31), (100, 77)])
def test_size_invariance(size, rng):
    x = rng.normal(size=(*size, 3))
    y, _ = pyr_forward(x, (1, 2, 4, 8))
    assert y.size == pyr_output_dim(3, [(1, 2, 4, 8)])


def test_identity_when_grid_matches_input(rng):
    x = rng.normal(size=(3, 3, 2))
    y, _ = pyr_forward(x, [3])
    for m in range(2):
        assert np.array_equal(y[m::2], x[:, :, m].ravel())


@settings(max_examples=60, deadline=None)
@given(
    st.integers(4, 10), st.integers(4, 10), st.integers(1, 3),
    st.integers(0, 2**31 - 1), st.floats(0.0, 5.0),
)
def test_monotone_in_each_pixel(H, W, K, seed, bump):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(H, W, K))
    y, _ = pyr_forward(x, (1, 2, 4))
    r, c, m = rng.integers(H), rng.integers(W), rng.integers(K)
    x[r, c, m] += bump
    y2, _ = pyr_forward(x, (1, 2, 4))
    assert np.all(y2 >= y)
