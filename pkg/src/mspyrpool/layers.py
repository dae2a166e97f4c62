"""Differentiable building blocks with exact backward passes.

Every layer is a pair of pure functions. Forward passes return whatever the
matching backward pass needs (a record or nothing at all), and backward
passes return the delta with respect to the layer input followed, for
parametric layers, by a parameter-gradient object of the same type as the
parameters.
"""
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DomainError, ShapeError
from .tensor import DTYPE


@dataclass
class ConvParams:
    filters: np.ndarray  # [fh, fw, in_maps, out_maps]
    bias: np.ndarray  # [out_maps]


@dataclass
class FcParams:
    weights: np.ndarray  # [in_dim, out_dim]
    bias: np.ndarray  # [out_dim]


@dataclass
class MaxSubRecord:
    """Absolute (row, col) of the selected input cell for each output cell."""

    rows: np.ndarray
    cols: np.ndarray
    input_shape: tuple


def uniform_fan_in(rng, shape, fan_in):
    s = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-s, s, size=shape).astype(DTYPE)


def init_conv(rng, fh, fw, in_maps, out_maps):
    filters = uniform_fan_in(rng, (fh, fw, in_maps, out_maps), fh * fw * in_maps)
    return ConvParams(filters, np.zeros(out_maps, dtype=DTYPE))


def init_fc(rng, in_dim, out_dim):
    return FcParams(uniform_fan_in(rng, (in_dim, out_dim), in_dim), np.zeros(out_dim, dtype=DTYPE))


# -- convolution ------------------------------------------------------------

def _check_conv(x, p):
    if x.ndim != 3:
        raise ShapeError(f"conv input must be 3-D, got shape {x.shape}")
    fh, fw, din, _ = p.filters.shape
    if x.shape[2] != din:
        raise ShapeError(f"conv expects {din} input maps, got {x.shape[2]}")
    if x.shape[0] < fh or x.shape[1] < fw:
        raise ShapeError(f"input {x.shape[:2]} is smaller than the {fh}x{fw} filter")


def _correlate(x, filters):
    fh, fw = filters.shape[:2]
    win = sliding_window_view(x, (fh, fw), axis=(0, 1))  # [Ho, Wo, Din, fh, fw]
    return np.tensordot(win, filters, axes=([3, 4, 2], [0, 1, 2]))


def conv_forward(x, p):
    """Valid-mode, stride-1 cross-correlation plus per-map bias.

    ``out[r, c, o] = bias[o] + sum_{i,j,m} x[r+i, c+j, m] * filters[i, j, m, o]``
    """
    _check_conv(x, p)
    return _correlate(x, p.filters) + p.bias


def conv_backward(x, p, delta_out):
    _check_conv(x, p)
    fh, fw = p.filters.shape[:2]
    expected = (x.shape[0] - fh + 1, x.shape[1] - fw + 1, p.filters.shape[3])
    if delta_out.shape != expected:
        raise ShapeError(f"delta shape {delta_out.shape} does not match conv output {expected}")
    win = sliding_window_view(x, (fh, fw), axis=(0, 1))
    grad_filters = np.tensordot(win, delta_out, axes=([0, 1], [0, 1]))  # [Din, fh, fw, Dout]
    grad_filters = grad_filters.transpose(1, 2, 0, 3)
    grad_bias = delta_out.sum(axis=(0, 1))
    padded = np.pad(delta_out, ((fh - 1, fh - 1), (fw - 1, fw - 1), (0, 0)))
    flipped = p.filters[::-1, ::-1].transpose(0, 1, 3, 2)  # [fh, fw, Dout, Din]
    delta_x = _correlate(padded, flipped)
    return delta_x, ConvParams(np.ascontiguousarray(grad_filters), grad_bias)


# -- activation -------------------------------------------------------------

def tanh_forward(x):
    return np.tanh(x)


def tanh_backward(y, delta):
    """Backward of tanh expressed through its output ``y``."""
    return delta * (1.0 - y * y)


# -- max subsampling --------------------------------------------------------

def maxsub_forward(x, p):
    """Non-overlapping ``p x p`` max pooling.

    Trailing rows and columns that do not fill a whole window are ignored.
    Ties go to the first cell in row-major window order.
    """
    H, W, K = x.shape
    if p < 1:
        raise DomainError(f"pooling size must be positive, got {p}")
    if p > H or p > W:
        raise ShapeError(f"pooling size {p} exceeds input extent {H}x{W}")
    Ho, Wo = H // p, W // p
    blocks = x[: Ho * p, : Wo * p].reshape(Ho, p, Wo, p, K).transpose(0, 2, 4, 1, 3)
    blocks = blocks.reshape(Ho, Wo, K, p * p)
    idx = blocks.argmax(axis=3)
    out = np.take_along_axis(blocks, idx[..., None], axis=3)[..., 0]
    di, dj = np.divmod(idx, p)
    rows = np.arange(Ho)[:, None, None] * p + di
    cols = np.arange(Wo)[None, :, None] * p + dj
    return out, MaxSubRecord(rows, cols, x.shape)


def maxsub_backward(record, delta_out):
    if delta_out.shape != record.rows.shape:
        raise ShapeError(f"delta shape {delta_out.shape} does not match record {record.rows.shape}")
    delta_x = np.zeros(record.input_shape, dtype=DTYPE)
    maps = np.broadcast_to(np.arange(delta_out.shape[2]), delta_out.shape)
    delta_x[record.rows, record.cols, maps] = delta_out
    return delta_x


# -- fully connected --------------------------------------------------------

def fc_forward(x, p):
    if x.ndim != 1 or x.shape[0] != p.weights.shape[0]:
        raise ShapeError(f"fc expects a vector of length {p.weights.shape[0]}, got shape {x.shape}")
    return x @ p.weights + p.bias


def fc_backward(x, p, delta):
    if x.shape != (p.weights.shape[0],) or delta.shape != (p.weights.shape[1],):
        raise ShapeError(
            f"fc backward got x {x.shape} and delta {delta.shape} for weights {p.weights.shape}"
        )
    return p.weights @ delta, FcParams(np.outer(x, delta), delta.copy())


# -- classifier output ------------------------------------------------------

def softmax(logits):
    z = logits - np.max(logits)
    e = np.exp(z)
    return e / e.sum()


def softmax_xent(logits, label):
    """Cross-entropy of softmax(logits) against ``label``.

    Returns ``(loss, delta_logits)`` where ``delta_logits = softmax - onehot``.
    """
    n = logits.shape[0]
    if not 0 <= label < n:
        raise DomainError(f"label {label} out of range for {n} classes")
    z = logits - np.max(logits)
    log_norm = np.log(np.sum(np.exp(z)))
    loss = log_norm - z[label]
    delta = np.exp(z - log_norm)
    delta[label] -= 1.0
    return float(loss), delta
