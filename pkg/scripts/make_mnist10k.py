"""Convert the 10,000 MNIST digits shipped in the npm ``mnist`` package to IDX.

The official MNIST files are the preferred input for the training run; this
script builds a stand-in corpus when they cannot be downloaded.

    npm pack mnist@1.1.0 && tar xzf mnist-1.1.0.tgz
    python scripts/make_mnist10k.py package/src/digits data/mnist10k

The package stores each digit as 784 values ``byte/255`` rounded to three
decimals; rounding ``value * 255`` recovers the original bytes.
"""
import json
import os
import sys

import numpy as np

from mspyrpool.data_io import write_idx


def main(src, dst):
    images, labels = [], []
    for digit in range(10):
        with open(os.path.join(src, f"{digit}.json")) as f:
            data = np.asarray(json.load(f)["data"], dtype=np.float64)
        pix = np.clip(np.rint(data * 255.0), 0, 255).astype(np.uint8).reshape(-1, 28, 28)
        images.append(pix)
        labels.append(np.full(len(pix), digit, dtype=np.uint8))
    images = np.concatenate(images)
    labels = np.concatenate(labels)
    # Interleave classes with a fixed permutation so prefixes are balanced.
    order = np.random.default_rng(20130101).permutation(len(labels))
    images, labels = images[order], labels[order]
    os.makedirs(dst, exist_ok=True)
    # The last 1,000 digits are held out as the test split.
    for split, sl in (("train", slice(0, -1000)), ("test", slice(-1000, None))):
        write_idx(
            os.path.join(dst, f"{split}-images-idx3-ubyte.gz"),
            os.path.join(dst, f"{split}-labels-idx1-ubyte.gz"),
            images[sl],
            labels[sl],
        )
        print(f"wrote {len(labels[sl])} {split} digits to {dst}")


if __name__ == "__main__":
    main(*sys.argv[1:3])
