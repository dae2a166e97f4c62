"""Variable-size image directories and the preprocessing policy.

Writes a small class-per-folder corpus to a temp dir, loads it back, and
applies padding, longest-edge clamping and normalization.

Run: python demos/06_image_directories.py
"""
import os
import tempfile

import numpy as np

from mspyrpool.data_io import PreprocessPolicy, apply_policy, load_image_dir, write_pgm, write_tensor

rng = np.random.default_rng(4)

with tempfile.TemporaryDirectory() as root:
    # Class indices follow the sorted folder names.
    for cls, sizes in {"scratch": [(20, 80), (64, 64)], "dent": [(900, 300)]}.items():
        os.makedirs(os.path.join(root, cls))
        for i, (h, w) in enumerate(sizes):
            img = rng.uniform(size=(h, w))
            if i % 2:
                write_tensor(os.path.join(root, cls, f"{i}.tensor"), img[:, :, None])
            else:
                write_pgm(os.path.join(root, cls, f"{i}.pgm"), img)

    ds = load_image_dir(root)
    print("classes:", ds.class_names)
    for s in ds:
        print(f"  {s.source:16s} label {s.label}  native size {s.image.shape[:2]}")

    # Small images are centered on a zero background, large ones scaled down.
    policy = PreprocessPolicy(normalize=True, min_size=100, max_edge=500)
    for s in apply_policy(ds, policy):
        img = s.image
        print(f"  {s.source:16s} -> {img.shape[:2]}  mean {img.mean():+.1e}  std {img.std():.3f}")
