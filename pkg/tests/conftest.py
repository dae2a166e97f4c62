import os

import numpy as np
import pytest

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
CONFIGS = os.path.join(ROOT, "configs")

MICRO_SPEC = """\
classes 3
input_maps 1
min_size 8 8
layer conv 3 3 2
layer tanh
layer maxsub 2
tap 2 levels 1,2 dict 4 tanh sparse
tap 3 levels 1 dict 4 tanh sparse
head
"""


def numeric_grad(f, x, eps=1e-5):
    """Central differences of the scalar ``f()`` w.r.t. ``x``, perturbed in place."""
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        plus = f()
        flat[i] = orig - eps
        minus = f()
        flat[i] = orig
        gflat[i] = (plus - minus) / (2 * eps)
    return g


def max_rel_error(a, n):
    """Norm-wise relative error ``|a - n| / max(|a|, |n|)``.

    Elementwise ratios are dominated by finite-difference roundoff on
    near-zero entries, so op-level checks compare whole gradient arrays.
    """
    a, n = np.asarray(a, float).ravel(), np.asarray(n, float).ravel()
    scale = max(np.linalg.norm(a), np.linalg.norm(n))
    return 0.0 if scale == 0 else float(np.linalg.norm(a - n) / scale)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def toy_dataset(n, seed=0, size=(8, 8), classes=3, noise=0.1):
    """Three-class images: a bright 3x3 square in a class-specific corner."""
    from mspyrpool.data_io import Dataset, Sample

    rng = np.random.default_rng(seed)
    corners = [(0, 0), (0, size[1] - 3), (size[0] - 3, 0), (size[0] - 3, size[1] - 3)]
    samples = []
    for i in range(n):
        label = i % classes
        img = noise * rng.normal(size=(*size, 1))
        r, c = corners[label]
        img[r : r + 3, c : c + 3] += 1.0
        samples.append(Sample(img, label, f"toy{i}"))
    return Dataset(samples, [f"c{k}" for k in range(classes)])


# One line per acceptance criterion, repeated in the terminal summary.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
