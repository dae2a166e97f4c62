"""Pyramidal max pooling: any-size maps in, fixed-length vector out.

At level ``l`` the input is cut into an ``l x l`` grid of tiles and each map
is max-pooled inside each tile. Levels are concatenated in ascending order,
tiles in row-major order, and maps in index order within a tile, so the
output length is ``maps * sum(l**2)`` no matter how large the input is.
"""
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ShapeError
from .tensor import DTYPE


def level_set(levels):
    """Validate a level set and return it as a tuple of ints."""
    levels = tuple(int(l) for l in levels)
    if not levels:
        raise DomainError("level set must not be empty")
    if levels[0] < 1:
        raise DomainError(f"levels must be positive, got {levels}")
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise DomainError(f"levels must be strictly increasing, got {levels}")
    return levels


def tile_bounds(H, W, l):
    """Return the ``l*l`` tiles of an ``H x W`` grid as ``(r0, r1, c0, c1)``.

    Tile ``(r, c)`` spans rows ``[r*H//l, (r+1)*H//l)`` and the analogous
    columns; the tiles partition the grid and none is empty.
    """
    if l < 1:
        raise DomainError(f"level must be positive, got {l}")
    if l > H or l > W:
        raise ShapeError(f"level {l} exceeds spatial extent {H}x{W}")
    rb = [r * H // l for r in range(l + 1)]
    cb = [c * W // l for c in range(l + 1)]
    return [(rb[r], rb[r + 1], cb[c], cb[c + 1]) for r in range(l) for c in range(l)]


@dataclass
class PoolRecord:
    input_shape: tuple
    levels: tuple
    # one (rows, cols) pair per level, each of shape [l*l, maps]
    argmax: list


def pool_level(x, l):
    """Max-pool ``x`` over the ``l x l`` tile grid of a single level.

    Returns ``(values, rows, cols)``, each shaped ``[l*l, maps]``; ties go to
    the first row-major position inside the tile.
    """
    H, W, K = x.shape
    tiles = tile_bounds(H, W, l)
    values = np.empty((len(tiles), K), dtype=DTYPE)
    rows = np.empty((len(tiles), K), dtype=np.intp)
    cols = np.empty((len(tiles), K), dtype=np.intp)
    maps = np.arange(K)
    for t, (r0, r1, c0, c1) in enumerate(tiles):
        block = x[r0:r1, c0:c1].reshape(-1, K)
        idx = block.argmax(axis=0)
        values[t] = block[idx, maps]
        rows[t] = r0 + idx // (c1 - c0)
        cols[t] = c0 + idx % (c1 - c0)
    return values, rows, cols


def scatter_level(input_shape, rows, cols, delta):
    """Backward of :func:`pool_level` for one level; ``delta`` is ``[l*l, maps]``."""
    delta_x = np.zeros(input_shape, dtype=DTYPE)
    maps = np.broadcast_to(np.arange(input_shape[2]), rows.shape)
    delta_x[rows, cols, maps] = delta
    return delta_x


def pyr_forward(x, levels):
    levels = level_set(levels)
    H, W, K = x.shape
    if levels[-1] > min(H, W):
        raise ShapeError(f"level {levels[-1]} exceeds spatial extent {H}x{W}")
    parts, argmax = [], []
    for l in levels:
        values, rows, cols = pool_level(x, l)
        parts.append(values.ravel())
        argmax.append((rows, cols))
    return np.concatenate(parts), PoolRecord(x.shape, levels, argmax)


def pyr_backward(rec, delta_y):
    """Sum over levels of routing each tile delta to its recorded argmax.

    A pixel selected at several levels accumulates every matching delta.
    """
    K = rec.input_shape[2]
    expected = K * sum(l * l for l in rec.levels)
    if delta_y.shape != (expected,):
        raise ShapeError(f"delta of shape {delta_y.shape} does not match feature length {expected}")
    delta_x = np.zeros(rec.input_shape, dtype=DTYPE)
    maps = np.arange(K)
    offset = 0
    for l, (rows, cols) in zip(rec.levels, rec.argmax):
        n = l * l * K
        # Tiles are disjoint, so indices within a level never repeat.
        delta_x[rows, cols, maps] += delta_y[offset : offset + n].reshape(l * l, K)
        offset += n
    return delta_x


def pyr_output_dim(maps, level_sets):
    """Total feature length for ``maps`` maps pooled by each level set."""
    if maps < 1:
        raise DomainError(f"map count must be positive, got {maps}")
    return sum(maps * sum(l * l for l in level_set(ls)) for ls in level_sets)


def feature_layout(maps, levels):
    """List ``(level, tile_row, tile_col, map)`` for each output position."""
    return [
        (l, t // l, t % l, m)
        for l in level_set(levels)
        for t in range(l * l)
        for m in range(maps)
    ]
