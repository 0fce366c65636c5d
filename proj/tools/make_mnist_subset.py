#!/usr/bin/env python3
"""Write a stratified 1000/4000 MNIST split as gzipped IDX files.

Source: the 5000-sample MNIST extract shipped inside the mlxtend wheel
(500 images per digit, sorted by label). The first 100 images of every digit
go to the training split, the remaining 400 to the test split.

    pip download --no-deps mlxtend -d /tmp/mlx
    python3 tools/make_mnist_subset.py /tmp/mlx/mlxtend-*.whl data/mnist-5k
"""
import gzip
import struct
import sys
import zipfile
from pathlib import Path

import numpy as np

TRAIN_PER_CLASS = 100


def write_idx(path, array, magic):
    header = struct.pack(">I", magic) + b"".join(struct.pack(">I", d) for d in array.shape)
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(header + array.astype(np.uint8).tobytes())


def main():
    wheel, out = sys.argv[1], Path(sys.argv[2])
    out.mkdir(parents=True, exist_ok=True)
    with zipfile.ZipFile(wheel) as z:
        raw = np.loadtxt(gzip.open(z.open("mlxtend/data/data/mnist_5k.csv.gz")), delimiter=",")
    pixels, labels = raw[:, :-1].astype(np.uint8), raw[:, -1].astype(np.uint8)
    train_idx, test_idx = [], []
    for digit in range(10):
        idx = np.flatnonzero(labels == digit)
        train_idx.extend(idx[:TRAIN_PER_CLASS])
        test_idx.extend(idx[TRAIN_PER_CLASS:])
    for name, idx in (("train", train_idx), ("t10k", test_idx)):
        idx = np.array(idx)
        write_idx(out / f"{name}-images-idx3-ubyte.gz", pixels[idx].reshape(-1, 28, 28), 0x00000803)
        write_idx(out / f"{name}-labels-idx1-ubyte.gz", labels[idx], 0x00000801)


if __name__ == "__main__":
    main()
