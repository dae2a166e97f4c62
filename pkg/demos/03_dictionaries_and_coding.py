"""Classical encoders next to the network's learnable dictionary layer.

k-means learns a codebook, vector quantization picks the nearest atom, LLC
spreads weight over nearby atoms, and an MLPDict layer whose atoms all have
the same norm makes exactly the VQ choice.

Run: python demos/03_dictionaries_and_coding.py
"""
import numpy as np

from mspyrpool.codebook import kmeans_fit, llc_encode, vq_encode
from mspyrpool.encoding import MlpDictParams, mlpdict_forward

rng = np.random.default_rng(2)

# Descriptors from four well separated clusters in 2-D.
centers = np.array([[0, 0], [4, 0], [0, 4], [4, 4]], dtype=float)
points = np.concatenate([c + 0.3 * rng.normal(size=(50, 2)) for c in centers])
cb = kmeans_fit(points, 4, seed=0)
print("k-means objective per iteration:", [round(h, 2) for h in cb.history])
print("centroids:\n", np.round(cb.bases.T, 2))

x = np.array([3.6, 0.5])
print("\nVQ code of", x, "->", vq_encode(x, cb))
print("LLC code (lambda 0.1)      ->", np.round(llc_encode(x, cb, 0.1), 3))
print("LLC code, 2 nearest atoms  ->", np.round(llc_encode(x, cb, 0.1, knn=2), 3))

# Equal-norm atoms: the largest projection is the nearest atom.
W = rng.normal(size=(5, 12))
W /= np.linalg.norm(W, axis=0)
pixels = rng.normal(size=(30, 30, 5))
out, rec = mlpdict_forward(pixels, MlpDictParams(W, np.zeros(12), "linear", True))
vq = [np.argmax(vq_encode(p, W)) for p in pixels.reshape(-1, 5)]
print(f"\nMLPDict winner == VQ winner on {np.sum(rec.argmax == vq)}/{len(vq)} pixels")
print("nonzeros per pixel after sparsification:", set(np.count_nonzero(out.reshape(-1, 12), axis=1)))
