"""Network specs, feature dimensions and variable-size forward passes.

Run: python demos/04_multiscale_network.py
"""
import os

import numpy as np

from mspyrpool.config import load_config
from mspyrpool.netgraph import build_network, net_forward

CONFIGS = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "configs")

# Feature dimensions of the reference architectures.
for name in ("curet.cfg", "caltech_net1.cfg", "caltech_net2.cfg", "mnist_full.cfg"):
    spec = load_config(os.path.join(CONFIGS, name)).network
    print(f"{name:18s} taps {spec.tap_dims()} -> {spec.feature_dim}")

spec = load_config(os.path.join(CONFIGS, "mnist_desk.cfg")).network
print("\n" + spec.to_text())

# The same network accepts any image at least as large as min_size.
net = build_network(spec, seed=0)
rng = np.random.default_rng(3)
for size in [(28, 28), (64, 50), (150, 90)]:
    post, cache = net_forward(net, rng.uniform(size=size))
    shapes = [t.shape for t in cache.trunk]
    print(f"input {size}: trunk {shapes[1:]} features {cache.features.size} posteriors sum {post.sum():.6f}")
