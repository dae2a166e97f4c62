"""Pyramidal pooling turns any image size into one fixed-length vector.

Run: python demos/02_pyramid_pooling.py
"""
import numpy as np

from mspyrpool.pyrpool import feature_layout, pyr_backward, pyr_forward, pyr_output_dim, tile_bounds

rng = np.random.default_rng(1)
levels = (1, 2, 4)

# Level l cuts the map into an l x l grid; each tile keeps its maximum per map.
print("tiles of a 5x7 map at level 2:")
for r0, r1, c0, c1 in tile_bounds(5, 7, 2):
    print(f"  rows {r0}:{r1}  cols {c0}:{c1}")

# The output length depends only on the number of maps and the levels.
for size in [(16, 16), (37, 90), (200, 41)]:
    x = rng.normal(size=(*size, 3))
    y, _ = pyr_forward(x, levels)
    print(f"{size} x 3 maps -> {y.size} features")
print("expected:", pyr_output_dim(3, [levels]), "= 3 * (1 + 4 + 16)")

# Feature order is level, then tile (row-major), then map.
print("first entries:", feature_layout(3, levels)[:4], "...")

# Backward routes each delta to the winning pixel; levels add up where they agree.
x = np.arange(16.0).reshape(4, 4, 1)
y, rec = pyr_forward(x, (1, 2))
dx = pyr_backward(rec, np.ones(y.size))
print("\ngradient map for an increasing 4x4 ramp (all-ones delta):")
print(dx[:, :, 0])
