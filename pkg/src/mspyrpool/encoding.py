"""MLPDict: a learnable per-pixel dictionary encoding.

Each pixel of a ``D``-map tensor is treated as a ``D``-dimensional
descriptor and projected onto the ``D'`` columns of a weight matrix. Keeping
only the strongest response per pixel turns the projection into a
differentiable stand-in for hard-assignment vector quantization: when all
columns share the same norm, the largest correlation picks the same atom as
the nearest-centroid rule.
"""
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ShapeError
from .layers import uniform_fan_in
from .tensor import DTYPE, as_matrix

ACTIVATIONS = ("linear", "tanh")


@dataclass
class MlpDictParams:
    weights: np.ndarray  # [D, D'], one dictionary atom per column
    bias: np.ndarray  # [D']
    activation: str = "linear"
    sparsify: bool = True

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise DomainError(f"activation must be one of {ACTIVATIONS}, got {self.activation!r}")


@dataclass
class MlpDictRecord:
    input_shape: tuple
    activated: np.ndarray  # [pixels, D'], before sparsification
    argmax: np.ndarray  # [pixels], winning column per pixel


def init_mlpdict(rng, in_maps, size, activation="linear", sparsify=True):
    weights = uniform_fan_in(rng, (in_maps, size), in_maps)
    return MlpDictParams(weights, np.zeros(size, dtype=DTYPE), activation, sparsify)


def _activate(z, activation):
    return np.tanh(z) if activation == "tanh" else z


def mlpdict_forward(x, p):
    """Encode every pixel of ``x`` against the dictionary in ``p``.

    The order is projection, activation, then (optionally) zeroing all but
    the maximum entry of each pixel; ties keep the lowest column index.
    """
    D = p.weights.shape[0]
    if x.ndim != 3 or x.shape[2] != D:
        raise ShapeError(f"MLPDict expects {D} input maps, got shape {x.shape}")
    H, W, _ = x.shape
    act = _activate(as_matrix(x) @ p.weights + p.bias, p.activation)
    winners = act.argmax(axis=1)
    if p.sparsify:
        out = np.zeros_like(act)
        pix = np.arange(act.shape[0])
        out[pix, winners] = act[pix, winners]
    else:
        out = act
    return out.reshape(H, W, -1), MlpDictRecord(x.shape, act, winners)


def mlpdict_backward(x, p, record, delta_out):
    """Return ``(delta_x, grads)``; gradients pass only through kept entries."""
    H, W, D = record.input_shape
    n_out = p.weights.shape[1]
    if x.shape != record.input_shape or delta_out.shape != (H, W, n_out):
        raise ShapeError(
            f"MLPDict backward got x {x.shape}, delta {delta_out.shape} "
            f"for record input {record.input_shape} and {n_out} atoms"
        )
    delta = delta_out.reshape(-1, n_out)
    if p.sparsify:
        pix = np.arange(delta.shape[0])
        masked = np.zeros_like(delta)
        masked[pix, record.argmax] = delta[pix, record.argmax]
        delta = masked
    if p.activation == "tanh":
        delta = delta * (1.0 - record.activated**2)
    X = as_matrix(x)
    grads = MlpDictParams(X.T @ delta, delta.sum(axis=0), p.activation, p.sparsify)
    delta_x = (delta @ p.weights.T).reshape(H, W, D)
    return delta_x, grads
