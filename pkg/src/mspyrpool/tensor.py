"""Dense 3-D tensors indexed as ``[row, col, map]``.

Tensors are plain ``float64`` numpy arrays of shape ``(rows, cols, maps)``.
The *logical* element order used for reshaping and serialization is
map-major: each map is a contiguous row-major plane. Reshaping the tensor
into a ``(pixels, maps)`` matrix is then a free view, see :func:`as_matrix`.
"""
from typing import NamedTuple

import numpy as np

from .errors import DomainError, ShapeError, SizeError

DTYPE = np.float64
_INDEX_MAX = np.iinfo(np.intp).max


class Shape(NamedTuple):
    rows: int
    cols: int
    maps: int

    @property
    def size(self):
        return self.rows * self.cols * self.maps


def check_shape(shape):
    """Validate and normalize a ``(rows, cols, maps)`` triple into a Shape."""
    try:
        rows, cols, maps = (int(v) for v in shape)
    except (TypeError, ValueError):
        raise ShapeError(f"shape must be a (rows, cols, maps) triple, got {shape!r}")
    if min(rows, cols, maps) < 1:
        raise ShapeError(f"all extents must be >= 1, got {(rows, cols, maps)}")
    # Python ints do not overflow; compare against the numpy index limit.
    if rows * cols * maps > _INDEX_MAX:
        raise SizeError(f"element count of {(rows, cols, maps)} overflows the index type")
    return Shape(rows, cols, maps)


def new_tensor(shape, fill=0.0):
    shape = check_shape(shape)
    return np.full(shape, fill, dtype=DTYPE)


def as_tensor(x):
    """Coerce ``x`` to a float64 tensor; 2-D input gains a single map axis."""
    x = np.asarray(x, dtype=DTYPE)
    if x.ndim == 2:
        x = x[:, :, None]
    if x.ndim != 3:
        raise ShapeError(f"expected a 2-D or 3-D array, got ndim={x.ndim}")
    check_shape(x.shape)
    return x


def to_planes(t):
    """Flatten ``t`` in map-major order (plane by plane, row-major inside)."""
    return np.ascontiguousarray(np.moveaxis(t, 2, 0)).ravel()


def from_planes(data, shape):
    """Inverse of :func:`to_planes`."""
    shape = check_shape(shape)
    data = np.asarray(data, dtype=DTYPE)
    if data.size != shape.size:
        raise ShapeError(f"buffer of length {data.size} does not fit shape {tuple(shape)}")
    return np.moveaxis(data.reshape(shape.maps, shape.rows, shape.cols), 0, 2).copy()


def reshape(t, new_shape):
    """Reinterpret ``t`` with ``new_shape`` preserving map-major element order.

    For a ``4x4x2`` tensor reshaped to ``16x1x2``, element ``(r, c, m)`` lands
    at ``(4*r + c, 0, m)``.
    """
    new_shape = check_shape(new_shape)
    if new_shape.size != t.size:
        raise ShapeError(
            f"cannot reshape {t.shape} ({t.size} elements) to "
            f"{tuple(new_shape)} ({new_shape.size} elements)"
        )
    return from_planes(to_planes(t), new_shape)


def as_matrix(t):
    """View ``t`` as a ``(rows*cols, maps)`` matrix, one row per pixel."""
    return t.reshape(-1, t.shape[2])


def normalize_zmuv(t):
    """Shift and scale ``t`` to zero mean and unit population variance.

    A constant input has no scale to normalize, so it maps to all zeros.
    """
    t = np.asarray(t, dtype=DTYPE)
    if t.size < 2:
        raise DomainError("normalization needs at least two elements")
    centered = t - t.mean()
    std = np.sqrt(np.mean(centered**2))
    if std == 0.0 or std < 1e-300:
        return np.zeros_like(t)
    out = centered / std
    # One refinement pass removes the rounding left by the first.
    out -= out.mean()
    return out / np.sqrt(np.mean(out**2))
