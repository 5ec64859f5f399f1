"""Convert IDX image/label files (MNIST-style, optionally gzipped) to the flat dataset format.

    python3 scripts/convert_idx.py train-images-idx3-ubyte.gz train-labels-idx1-ubyte.gz data/fmnist_train.bin

Pixels are stored unscaled; set ``dataset.scale = 255`` in the run config.
"""
import argparse
import gzip
from pathlib import Path

import numpy as np

from drgossip.datagen import LabeledDataset, write_dataset

_DTYPES = {0x08: ">u1", 0x09: ">i1", 0x0B: ">i2", 0x0C: ">i4", 0x0D: ">f4", 0x0E: ">f8"}


def read_idx(path):
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "rb") as fh:
        raw = fh.read()
    if raw[0] != 0 or raw[1] != 0:
        raise ValueError(f"{path}: not an IDX file")
    dtype, ndim = _DTYPES[raw[2]], raw[3]
    shape = tuple(int.from_bytes(raw[4 + 4 * i:8 + 4 * i], "big") for i in range(ndim))
    return np.frombuffer(raw, dtype=dtype, offset=4 + 4 * ndim).reshape(shape)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("images")
    ap.add_argument("labels")
    ap.add_argument("out")
    ap.add_argument("--classes", type=int, default=None, help="defaults to max label + 1")
    args = ap.parse_args()

    X = read_idx(args.images)
    y = read_idx(args.labels).astype(np.int64)
    X = X.reshape(len(X), -1).astype(np.float64)
    M = args.classes or int(y.max()) + 1
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_dataset(LabeledDataset(X, y, M), args.out)
    print(f"{args.out}: {X.shape[0]} samples, {X.shape[1]} features, {M} classes")


if __name__ == "__main__":
    main()
