"""Labeled datasets, the binary dataset format and non-IID shard partitioning."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

DATASET_MAGIC = 0x44534554
_HEADER = struct.Struct("<IIII")


class DataError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    features: np.ndarray  # (n, m) float64
    labels: np.ndarray  # (n,) int64
    num_classes: int

    def __post_init__(self):
        X = np.ascontiguousarray(self.features, dtype=np.float64)
        y = np.ascontiguousarray(self.labels, dtype=np.int64)
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
            raise DataError(f"features {X.shape} and labels {y.shape} do not line up")
        if not np.all(np.isfinite(X)):
            raise DataError("features must be finite")
        if y.size and (y.min() < 0 or y.max() >= self.num_classes):
            raise DataError(f"labels must lie in [0, {self.num_classes})")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)

    def subset(self, idx) -> "LabeledDataset":
        idx = np.asarray(idx, dtype=np.int64)
        return LabeledDataset(self.features[idx], self.labels[idx], self.num_classes)


def simplex_vertices(M: int, dim: int, radius: float) -> np.ndarray:
    """Vertices of a regular simplex with circumradius ``radius``, padded to ``dim``.

    Built from Helmert rows so the layout is closed-form and platform independent.
    """
    if dim < M - 1:
        raise DataError(f"dim={dim} cannot hold a {M}-class simplex (needs >= {M - 1})")
    H = np.zeros((M - 1, M))
    for k in range(1, M):
        H[k - 1, :k] = 1.0
        H[k - 1, k] = -float(k)
        H[k - 1] /= np.sqrt(k * (k + 1.0))
    V = H.T  # (M, M-1), each row has norm sqrt((M-1)/M)
    V = V * (radius / np.sqrt((M - 1) / M))
    out = np.zeros((M, dim))
    out[:, : M - 1] = V
    return out


def gaussian_mixture(M: int, per_class, dim: int, separation: float, seed,
                     scales=None) -> LabeledDataset:
    """Isotropic blobs centred on a radius-``separation`` regular simplex.

    ``per_class`` is one count for every class or a length-``M`` sequence;
    ``scales`` optionally sets a per-class standard deviation (default 1).
    """
    if M < 2:
        raise DataError("need at least 2 classes")
    counts = np.broadcast_to(np.asarray(per_class, dtype=np.int64), (M,))
    if counts.min() < 1:
        raise DataError("every class needs at least one sample")
    if separation <= 0:
        raise DataError("separation must be positive")
    sd = np.ones(M) if scales is None else np.broadcast_to(np.asarray(scales, dtype=float), (M,))
    if sd.min() <= 0:
        raise DataError("class scales must be positive")
    centers = simplex_vertices(M, dim, separation)
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(M), counts)
    X = centers[labels] + sd[labels, None] * rng.standard_normal((labels.size, dim))
    order = rng.permutation(labels.size)
    return LabeledDataset(X[order], labels[order], M)


def write_dataset(ds: LabeledDataset, path) -> None:
    n, m = ds.features.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(DATASET_MAGIC, n, m, ds.num_classes))
        fh.write(ds.features.astype("<f4").tobytes())
        fh.write(ds.labels.astype("<u4").tobytes())


def read_dataset(path, scale: float | None = None) -> LabeledDataset:
    """Load the flat binary format; ``scale`` divides features (255 for raw pixels)."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise DataError(f"{path}: truncated header")
    magic, n, m, M = _HEADER.unpack_from(raw, 0)
    if magic != DATASET_MAGIC:
        raise DataError(f"{path}: bad magic 0x{magic:08x}")
    expected = _HEADER.size + 4 * n * m + 4 * n
    if len(raw) != expected:
        raise DataError(f"{path}: expected {expected} bytes, found {len(raw)}")
    off = _HEADER.size
    X = np.frombuffer(raw, dtype="<f4", count=n * m, offset=off).reshape(n, m).astype(np.float64)
    y = np.frombuffer(raw, dtype="<u4", count=n, offset=off + 4 * n * m).astype(np.int64)
    if scale:
        X = X / scale
    return LabeledDataset(X, y, int(M))


@dataclass(frozen=True, eq=False)
class DevicePartition:
    assignments: tuple  # K read-only int64 arrays
    shards_per_device: int

    @property
    def num_devices(self) -> int:
        return len(self.assignments)

    def device_size(self, i: int) -> int:
        return int(self.assignments[i].size)

    def class_histograms(self, labels: np.ndarray, num_classes: int) -> np.ndarray:
        return np.stack([np.bincount(labels[a], minlength=num_classes) for a in self.assignments])


def partition_pathological(ds: LabeledDataset, K: int, shards_per_device: int, seed=None) -> DevicePartition:
    """Sort by label, cut equal contiguous shards, hand each device a block of shards.

    ``seed=None`` keeps the identity shard order (useful for audits); any other
    value permutes the shards with ``default_rng(seed)`` before dealing.
    """
    if K < 1 or shards_per_device < 1:
        raise DataError("K and shards_per_device must be >= 1")
    n_shards = K * shards_per_device
    n = len(ds)
    if n_shards > n:
        raise DataError(f"{n_shards} shards requested but only {n} samples")
    order = np.argsort(ds.labels, kind="stable")
    keep = n - n % n_shards
    order = order[:keep]
    shards = order.reshape(n_shards, keep // n_shards)
    perm = np.arange(n_shards) if seed is None else np.random.default_rng(seed).permutation(n_shards)
    out = []
    for i in range(K):
        block = perm[i * shards_per_device:(i + 1) * shards_per_device]
        idx = np.concatenate([shards[s] for s in block])
        idx.setflags(write=False)
        out.append(idx)
    return DevicePartition(tuple(out), shards_per_device)


def device_stream(seed, K: int) -> list[np.random.Generator]:
    """One independent generator per device, spawned from a single seed."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(K)]


def minibatch(part: DevicePartition, i: int, B: int, rng: np.random.Generator) -> np.ndarray:
    """``B`` indices drawn uniformly with replacement from device ``i``'s list."""
    if B < 1:
        raise DataError("batch size must be >= 1")
    pool = part.assignments[i]
    return pool[rng.integers(0, pool.size, size=B)]


def histogram_csv(part: DevicePartition, labels: np.ndarray, num_classes: int) -> str:
    hist = part.class_histograms(labels, num_classes)
    head = "device_id," + ",".join(f"class_{c}" for c in range(num_classes))
    rows = [f"{i}," + ",".join(str(int(v)) for v in row) for i, row in enumerate(hist)]
    return "\n".join([head] + rows) + "\n"
