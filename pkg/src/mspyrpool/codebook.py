"""Classical dictionary learning and encoding.

k-means dictionaries, hard vector quantization and locality-constrained
linear coding (LLC). These are reference encoders: the network's learnable
encoding layer is checked against :func:`vq_encode`, and the LLC solver is
checked against brute-force minimization of its own objective.
"""
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, FormatError, NumericError, ShapeError
from .tensor import DTYPE


@dataclass
class Codebook:
    bases: np.ndarray  # [D, N], one basis vector per column
    history: list = field(default_factory=list)  # k-means objective per iteration

    @property
    def dim(self):
        return self.bases.shape[0]

    @property
    def size(self):
        return self.bases.shape[1]


def _sq_dists(points, centers):
    # points [n, D], centers [k, D] -> [n, k], computed by explicit differences
    diff = points[:, None, :] - centers[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def _kmeanspp(points, k, rng):
    n = len(points)
    centers = [points[rng.integers(n)]]
    closest = _sq_dists(points, np.array(centers))[:, 0]
    for _ in range(1, k):
        idx = rng.choice(n, p=closest / closest.sum())
        centers.append(points[idx])
        closest = np.minimum(closest, _sq_dists(points, points[idx : idx + 1])[:, 0])
    return np.array(centers)


def kmeans_fit(points, n_clusters, max_iters=100, seed=0, init="k-means++"):
    """Lloyd's algorithm returning a Codebook of ``n_clusters`` centroids.

    Parameters
    ----------
    points : array_like, shape (n, D)
    n_clusters : int
        Must not exceed the number of distinct points.
    max_iters : int
        Upper bound on assignment/update rounds; iteration also stops once
        assignments are stable.
    seed : int
    init : {"k-means++", "random"}
        Seeding strategy; "random" draws distinct points uniformly.

    Notes
    -----
    The within-cluster sum of squares after each assignment step is stored in
    ``Codebook.history`` and never increases. A cluster that loses all its
    points is moved onto the point that is currently worst represented.
    """
    points = np.asarray(points, dtype=DTYPE)
    if points.ndim == 1:
        points = points[:, None]
    distinct = np.unique(points, axis=0)
    if not 1 <= n_clusters <= len(distinct):
        raise DomainError(
            f"cannot fit {n_clusters} clusters to {len(distinct)} distinct points"
        )
    rng = np.random.default_rng(seed)
    if init == "k-means++":
        centers = _kmeanspp(distinct, n_clusters, rng)
    elif init == "random":
        centers = distinct[rng.choice(len(distinct), n_clusters, replace=False)]
    else:
        raise DomainError(f"unknown init {init!r}")

    history = []
    labels = None
    for _ in range(max_iters):
        d2 = _sq_dists(points, centers)
        new_labels = d2.argmin(axis=1)
        history.append(float(d2[np.arange(len(points)), new_labels].sum()))
        if labels is not None and np.array_equal(labels, new_labels):
            break
        labels = new_labels
        residual = d2[np.arange(len(points)), labels]
        for j in range(n_clusters):
            members = points[labels == j]
            if len(members):
                centers[j] = members.mean(axis=0)
            else:
                worst = residual.argmax()
                centers[j] = points[worst]
                residual[worst] = -1.0
    return Codebook(np.ascontiguousarray(centers.T), history)


def kmeans_objective(points, codebook):
    points = np.asarray(points, dtype=DTYPE)
    return float(_sq_dists(points, codebook.bases.T).min(axis=1).sum())


def _as_bases(B):
    return B.bases if isinstance(B, Codebook) else np.asarray(B, dtype=DTYPE)


def vq_encode(x, B):
    """One-hot code of the nearest basis (lowest index on ties)."""
    bases = _as_bases(B)
    x = np.asarray(x, dtype=DTYPE)
    if x.shape != (bases.shape[0],):
        raise ShapeError(f"descriptor of shape {x.shape} does not match basis dimension {bases.shape[0]}")
    dist = np.sqrt(((bases - x[:, None]) ** 2).sum(axis=0))
    code = np.zeros(bases.shape[1], dtype=DTYPE)
    code[dist.argmin()] = 1.0
    return code


def default_sigma(B):
    """Mean pairwise Euclidean distance between basis vectors."""
    bases = _as_bases(B)
    n = bases.shape[1]
    if n < 2:
        return 1.0
    cols = bases.T
    d = np.sqrt(_sq_dists(cols, cols))
    return float(d[np.triu_indices(n, 1)].mean())


def locality_weights(x, B, sigma):
    """``d_j = exp(||x - b_j|| / sigma)``."""
    bases = _as_bases(B)
    dist = np.sqrt(((bases - np.asarray(x, dtype=DTYPE)[:, None]) ** 2).sum(axis=0))
    with np.errstate(over="ignore"):
        d = np.exp(dist / sigma)
    if not np.all(np.isfinite(d)):
        raise NumericError(f"locality weights overflow for sigma={sigma}")
    return d


def llc_objective(x, B, c, lam, sigma):
    bases = _as_bases(B)
    x = np.asarray(x, dtype=DTYPE)
    c = np.asarray(c, dtype=DTYPE)
    r = x - bases @ c
    d = locality_weights(x, bases, sigma)
    return float(r @ r + lam * np.sum((d * c) ** 2))


def llc_encode(x, B, lam, sigma=None, knn=None):
    """Exact minimizer of the locality-weighted ridge objective.

    Solves ``(B^T B + lam * diag(d**2)) c = B^T x``. With ``knn`` set, only
    the ``knn`` nearest bases may take nonzero coefficients.
    """
    bases = _as_bases(B)
    x = np.asarray(x, dtype=DTYPE)
    if x.shape != (bases.shape[0],):
        raise ShapeError(f"descriptor of shape {x.shape} does not match basis dimension {bases.shape[0]}")
    if lam <= 0:
        raise DomainError(f"lambda must be positive, got {lam}")
    if sigma is None:
        sigma = default_sigma(bases)
    if sigma <= 0:
        raise DomainError(f"sigma must be positive, got {sigma}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(bases))):
        raise NumericError("non-finite descriptor or basis")
    d = locality_weights(x, bases, sigma)
    active = np.arange(bases.shape[1])
    if knn is not None:
        active = np.sort(np.argsort(d, kind="stable")[:knn])
    Ba = bases[:, active]
    with np.errstate(over="ignore"):
        gram = Ba.T @ Ba + lam * np.diag(d[active] ** 2)
    if not np.all(np.isfinite(gram)):
        raise NumericError(f"locality penalty overflows for sigma={sigma}")
    try:
        sol = np.linalg.solve(gram, Ba.T @ x)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"regularized Gram matrix is singular: {exc}") from None
    c = np.zeros(bases.shape[1], dtype=DTYPE)
    c[active] = sol
    return c


# -- serialization ----------------------------------------------------------

def save_codebook(path, B):
    """Write ``D, N`` as little-endian int64 then the bases column-major."""
    bases = _as_bases(B)
    with open(path, "wb") as f:
        f.write(struct.pack("<qq", *bases.shape))
        f.write(np.asarray(bases, dtype="<f8").ravel(order="F").tobytes())


def load_codebook(path):
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 16:
        raise FormatError("codebook header truncated", offset=len(raw))
    D, N = struct.unpack_from("<qq", raw)
    if D < 1 or N < 1:
        raise FormatError(f"invalid codebook extents D={D}, N={N}", offset=0)
    need = 16 + 8 * D * N
    if len(raw) != need:
        raise FormatError(f"expected {need} bytes, found {len(raw)}", offset=min(len(raw), need))
    data = np.frombuffer(raw, dtype="<f8", offset=16).astype(DTYPE)
    return Codebook(data.reshape((D, N), order="F").copy())
