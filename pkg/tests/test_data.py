import gzip
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lapbo.data import gen_dataset, load_idx_dataset, read_csv, read_idx, split, write_csv
from lapbo.nn import Dataset


def nearest_neighbour_accuracy(train: Dataset, test: Dataset) -> float:
    d = ((test.inputs[:, None, :] - train.inputs[None, :, :]) ** 2).sum(-1)
    return float(np.mean(train.labels[d.argmin(axis=1)] == test.labels))


def linear_oracle_accuracy(train: Dataset, test: Dataset) -> float:
    """One-vs-rest least-squares linear classifier."""
    def design(X):
        return np.column_stack([X, np.ones(len(X))])

    k = int(train.labels.max()) + 1
    W, *_ = np.linalg.lstsq(design(train.inputs), np.eye(k)[train.labels], rcond=None)
    return float(np.mean((design(test.inputs) @ W).argmax(axis=1) == test.labels))


def test_noiseless_moons_nearest_neighbour():
    train, test = split(gen_dataset("two_moons", 1500, 0.0, seed=0), [1000, 500])
    assert nearest_neighbour_accuracy(train, test) == 1.0
    # every point lies exactly on its half circle
    X, y = train.inputs, train.labels
    upper = X[y == 0]
    lower = X[y == 1] - np.array([1.0, 0.5])
    np.testing.assert_allclose(np.hypot(*upper.T), 1.0)
    np.testing.assert_allclose(np.hypot(*lower.T), 1.0)
    assert np.all(upper[:, 1] >= 0) and np.all(lower[:, 1] <= 0)


def test_moons_balanced_and_deterministic():
    a = gen_dataset("two_moons", 101, 0.1, seed=3)
    b = gen_dataset("two_moons", 101, 0.1, seed=3)
    assert a.inputs.tobytes() == b.inputs.tobytes()
    assert abs(int((a.labels == 0).sum()) - int((a.labels == 1).sum())) <= 1


def test_blobs_separated_linear_oracle():
    data = gen_dataset("gaussian_blobs", 2000, 1.0, seed=1, n_classes=2, separation=10.0)
    train, test = split(data, [1000, 1000])
    assert linear_oracle_accuracy(train, test) >= 0.99


def test_blobs_multiclass_centres():
    data = gen_dataset("gaussian_blobs", 3000, 0.0, seed=0, n_classes=3, separation=4.0)
    centres = np.array([data.inputs[data.labels == k][0] for k in range(3)])
    d = np.linalg.norm(centres[:, None] - centres[None], axis=-1)
    np.testing.assert_allclose(d[np.triu_indices(3, 1)], 4.0)


def test_csv_round_trip_and_bytes(tmp_path):
    data = gen_dataset("two_moons", 50, 0.2, seed=5)
    write_csv(data, tmp_path / "a.csv")
    write_csv(gen_dataset("two_moons", 50, 0.2, seed=5), tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    text = (tmp_path / "a.csv").read_text().splitlines()
    assert text[0] == "# format_version=1"
    assert text[1] == "x1,x2,label"
    back = read_csv(tmp_path / "a.csv")
    assert back.inputs.tobytes() == data.inputs.tobytes()
    np.testing.assert_array_equal(back.labels, data.labels)


def test_csv_version_check(tmp_path):
    p = tmp_path / "v.csv"
    p.write_text("# format_version=2\nx1,label\n0.5,1\n")
    with pytest.raises(ValueError):
        read_csv(p)
    p.write_text("x1,x2,label\n0.5,0.25,1\n")  # no version line: accepted as current
    assert read_csv(p).inputs.shape == (1, 2)


def test_gen_errors():
    with pytest.raises(ValueError):
        gen_dataset("two_moons", 9, 0.1, 0)
    with pytest.raises(ValueError):
        gen_dataset("two_moons", 20, -0.1, 0)
    with pytest.raises(ValueError):
        gen_dataset("spirals", 20, 0.1, 0)
    with pytest.raises(ValueError):
        split(gen_dataset("two_moons", 20, 0.1, 0), [15, 10])


@settings(max_examples=30, deadline=None)
@given(n=st.integers(10, 400), a=st.integers(1, 5), seed=st.integers(0, 2**31))
def test_split_is_disjoint_partition(n, a, seed):
    data = gen_dataset("two_moons", n, 0.1, seed)
    k = n // (a + 1)
    parts = split(data, [k, n - k])
    joined = np.vstack([p.inputs for p in parts])
    assert joined.tobytes() == data.inputs.tobytes()


def _write_idx(path, arr, code):
    header = struct.pack(">HBB", 0, code, arr.ndim) + struct.pack(">" + "I" * arr.ndim, *arr.shape)
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "wb") as f:
        f.write(header + arr.astype(arr.dtype.newbyteorder(">")).tobytes())


def test_idx_reader(tmp_path):
    imgs = np.arange(3 * 2 * 2, dtype=np.uint8).reshape(3, 2, 2) * 20
    labels = np.array([0, 2, 1], dtype=np.uint8)
    _write_idx(tmp_path / "img.idx.gz", imgs, 0x08)
    _write_idx(tmp_path / "lab.idx", labels, 0x08)
    np.testing.assert_array_equal(read_idx(tmp_path / "img.idx.gz"), imgs)
    ds = load_idx_dataset(tmp_path / "img.idx.gz", tmp_path / "lab.idx", limit=2)
    assert ds.inputs.shape == (2, 4)
    np.testing.assert_allclose(ds.inputs[1], imgs[1].ravel() / 255.0)
    np.testing.assert_array_equal(ds.labels, [0, 2])
    (tmp_path / "bad.idx").write_bytes(b"\x01\x00\x08\x01\x00\x00\x00\x00")
    with pytest.raises(ValueError):
        read_idx(tmp_path / "bad.idx")
