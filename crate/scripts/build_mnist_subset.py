#!/usr/bin/env python3
"""Assemble the desk-scale MNIST subset used by the acceptance suite.

Source: the npm package `mnist@1.1.0`, which redistributes 10,000 real
MNIST digits as src/digits/<label>.json (pixel values in [0,1], three
decimals). The digits are shuffled with a fixed seed and split into
8,000 training and 2,000 test samples. Output is gzip-compressed
big-endian IDX, the layout of the original distribution.

(The 5k MNIST sample bundled with mlxtend is a subset of the same 10k
digits, so it adds nothing.)

usage: build_mnist_subset.py <npm-package-dir> <out-dir>
"""
import gzip
import json
import struct
import sys
from pathlib import Path

import numpy as np


def write_idx(out: Path, images: np.ndarray, labels: np.ndarray, prefix: str) -> None:
    n = images.shape[0]
    img = struct.pack(">IIII", 2051, n, 28, 28) + images.astype(np.uint8).tobytes()
    lab = struct.pack(">II", 2049, n) + labels.astype(np.uint8).tobytes()
    # mtime=0 keeps the gzip bytes reproducible
    for name, payload in ((f"{prefix}-images-idx3-ubyte.gz", img), (f"{prefix}-labels-idx1-ubyte.gz", lab)):
        with open(out / name, "wb") as fh:
            with gzip.GzipFile(fileobj=fh, mode="wb", mtime=0) as gz:
                gz.write(payload)


def main() -> None:
    npm_dir, out = Path(sys.argv[1]), Path(sys.argv[2])
    out.mkdir(parents=True, exist_ok=True)

    xs, ys = [], []
    for digit in range(10):
        data = json.loads((npm_dir / "src" / "digits" / f"{digit}.json").read_text())["data"]
        arr = np.rint(np.asarray(data, dtype=np.float64).reshape(-1, 784) * 255.0)
        xs.append(arr)
        ys.append(np.full(arr.shape[0], digit))
    x = np.vstack(xs).astype(np.uint8)
    y = np.concatenate(ys).astype(np.uint8)
    order = np.random.default_rng(20190101).permutation(x.shape[0])
    x, y = x[order], y[order]

    write_idx(out, x[:8000], y[:8000], "train")
    write_idx(out, x[8000:10000], y[8000:10000], "test")
    print(f"train {min(8000, x.shape[0])}  test {max(0, min(x.shape[0], 10000) - 8000)}")


if __name__ == "__main__":
    main()
