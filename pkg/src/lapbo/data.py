"""Synthetic 2-D classification data, CSV persistence and an IDX reader."""

from __future__ import annotations

import gzip
import struct
from pathlib import Path

import numpy as np

from .nn import Dataset

CSV_FORMAT_VERSION = 1
KINDS = ("two_moons", "gaussian_blobs")


def two_moons(n: int, noise: float, rng: np.random.Generator) -> Dataset:
    """Two interleaved half circles; class 0 is the upper moon."""
    n0 = n // 2 + n % 2
    n1 = n - n0
    t0 = np.pi * rng.random(n0)
    t1 = np.pi * rng.random(n1)
    x0 = np.column_stack([np.cos(t0), np.sin(t0)])
    x1 = np.column_stack([1.0 - np.cos(t1), 0.5 - np.sin(t1)])
    X = np.vstack([x0, x1]) + noise * rng.standard_normal((n, 2))
    y = np.r_[np.zeros(n0, dtype=np.int64), np.ones(n1, dtype=np.int64)]
    perm = rng.permutation(n)
    return Dataset(X[perm], y[perm])


def gaussian_blobs(n: int, noise: float, rng: np.random.Generator, n_classes: int = 2,
                   separation: float = 4.0) -> Dataset:
    """``n_classes`` isotropic clusters with stddev ``noise`` whose centres sit on a
    circle, adjacent centres ``separation`` apart."""
    if n_classes < 2:
        raise ValueError("need at least two classes")
    radius = separation / (2 * np.sin(np.pi / n_classes))
    angles = 2 * np.pi * np.arange(n_classes) / n_classes
    centers = radius * np.column_stack([np.cos(angles), np.sin(angles)])
    y = np.arange(n) % n_classes
    X = centers[y] + noise * rng.standard_normal((n, 2))
    perm = rng.permutation(n)
    return Dataset(X[perm], y[perm])


def gen_dataset(kind: str, n: int, noise: float, seed: int, **kw) -> Dataset:
    if n < 10:
        raise ValueError("n must be >= 10")
    if noise < 0:
        raise ValueError("noise must be >= 0")
    rng = np.random.default_rng(seed)
    if kind == "two_moons":
        return two_moons(n, noise, rng)
    if kind == "gaussian_blobs":
        return gaussian_blobs(n, noise, rng, **kw)
    raise ValueError(f"unknown dataset kind {kind!r}")


def split(data: Dataset, sizes) -> list[Dataset]:
    """Consecutive disjoint slices of the given sizes."""
    if sum(sizes) > len(data):
        raise ValueError("split sizes exceed dataset size")
    out, pos = [], 0
    for s in sizes:
        out.append(Dataset(data.inputs[pos:pos + s], data.labels[pos:pos + s]))
        pos += s
    return out


def write_csv(data: Dataset, path) -> None:
    """Header ``x1..xd,label`` preceded by a ``# format_version`` comment line.

    Floats are written with ``repr`` so that reading back is exact.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    d = data.inputs.shape[1]
    lines = [f"# format_version={CSV_FORMAT_VERSION}",
             ",".join([f"x{i + 1}" for i in range(d)] + ["label"])]
    for x, y in zip(data.inputs, data.labels):
        lines.append(",".join([repr(float(v)) for v in x] + [str(int(y))]))
    path.write_text("\n".join(lines) + "\n")


def read_csv(path) -> Dataset:
    with open(path) as f:
        rows = [ln.strip() for ln in f if ln.strip()]
    version = CSV_FORMAT_VERSION
    if rows and rows[0].startswith("#"):
        key, _, val = rows.pop(0).lstrip("# ").partition("=")
        if key.strip() == "format_version":
            version = int(val)
    if version != CSV_FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported format_version {version}")
    header = rows[0].split(",")
    if header[-1] != "label":
        raise ValueError(f"{path}: last column must be 'label'")
    arr = np.array([r.split(",") for r in rows[1:]], dtype=object)
    if arr.size == 0:
        raise ValueError(f"{path}: no data rows")
    return Dataset(arr[:, :-1].astype(np.float64), arr[:, -1].astype(np.int64))


def read_idx(path) -> np.ndarray:
    """Read an IDX (MNIST-style) file, optionally gzip-compressed."""
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "rb") as f:
        raw = f.read()
    zero, dtype_code, ndim = struct.unpack(">HBB", raw[:4])
    if zero != 0:
        raise ValueError(f"{path}: bad IDX magic")
    dtypes = {0x08: ">u1", 0x09: ">i1", 0x0B: ">i2", 0x0C: ">i4", 0x0D: ">f4", 0x0E: ">f8"}
    dims = struct.unpack(">" + "I" * ndim, raw[4:4 + 4 * ndim])
    data = np.frombuffer(raw, dtype=dtypes[dtype_code], offset=4 + 4 * ndim)
    return data.reshape(dims)


def load_idx_dataset(images_path, labels_path, limit: int | None = None) -> Dataset:
    """Flattened pixels scaled to [0, 1] with integer labels."""
    images = read_idx(images_path)
    labels = read_idx(labels_path)
    if limit is not None:
        images, labels = images[:limit], labels[:limit]
    X = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return Dataset(X, labels.astype(np.int64))
