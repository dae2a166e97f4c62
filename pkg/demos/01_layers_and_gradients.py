"""Trunk layers on a toy image, then a finite-difference check of a whole network.

Run: python demos/01_layers_and_gradients.py
"""
import numpy as np

from mspyrpool import layers
from mspyrpool.netgraph import build_network, parse_network_spec
from mspyrpool.training import grad_check

rng = np.random.default_rng(0)

# Tensors are plain float64 arrays shaped (rows, cols, maps).
image = rng.uniform(size=(12, 10, 1))
conv = layers.init_conv(rng, 3, 3, 1, 4)

h = layers.conv_forward(image, conv)  # valid convolution shrinks by filter size - 1
print("conv   ", image.shape, "->", h.shape)
h = layers.tanh_forward(h)
pooled, record = layers.maxsub_forward(h, 2)  # the odd last row is dropped
print("maxsub ", h.shape, "->", pooled.shape)

# Backward passes return the input delta plus parameter gradients.
delta = rng.normal(size=pooled.shape)
d_h = layers.tanh_backward(h, layers.maxsub_backward(record, delta))
d_image, grads = layers.conv_backward(image, conv, d_h)
print("d_image", d_image.shape, " d_filters", grads.filters.shape)

# A micro multi-scale net: two taps, each with a 4-atom dictionary.
spec = parse_network_spec("""
classes 3
min_size 8 8
layer conv 3 3 2
layer tanh
layer maxsub 2
tap 2 levels 1,2 dict 4 tanh sparse
tap 3 levels 1 dict 4 tanh sparse
head
""")
net = build_network(spec, seed=0)
print(f"\nmicro net: {net.n_params} parameters, feature length {spec.feature_dim}")

# Central differences at eps 1e-5 against back-propagation, on every parameter.
for seed in range(3):
    x = np.random.default_rng(seed).normal(size=(8, 8))
    err = grad_check(build_network(spec, seed), (x, seed), seed=seed)
    print(f"seed {seed}: max relative error {err:.2e}")
