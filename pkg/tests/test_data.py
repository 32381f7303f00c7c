import gzip
import struct

import numpy as np
import pytest

from crossbar_sim.circuit import WeightMatrices
from crossbar_sim.config import default_config
from crossbar_sim.data import (
    Dataset,
    encode_input,
    load_dataset,
    load_weights,
    reshape_images,
    save_dataset_csv,
    save_weights,
    weights_digest,
)
from crossbar_sim.exceptions import DimensionMismatch, FormatError, RangeError


def _write_idx(path, arr):
    arr = np.asarray(arr, dtype=np.uint8)
    head = struct.pack(">BBBB", 0, 0, 0x08, arr.ndim) + struct.pack(f">{arr.ndim}I", *arr.shape)
    path.write_bytes(head + arr.tobytes())


def test_csv_round_trip(tmp_path, rng):
    ds = Dataset(rng.uniform(0, 1, (5, 4)), [0, 1, 2, 1, 0], 3)
    p = tmp_path / "d.csv"
    save_dataset_csv(ds, p)
    again = load_dataset(p, n_classes=3)
    assert np.array_equal(again.samples, ds.samples)
    assert again.digest() == ds.digest()


def test_csv_pixels_and_gzip(tmp_path):
    p = tmp_path / "d.csv.gz"
    with gzip.open(p, "wt") as fh:
        fh.write("label,a,b\n3,0,255\n1,51,102\n")
    ds = load_dataset(p)
    assert ds.labels.tolist() == [3, 1] and ds.n_classes == 4
    assert ds.samples.tolist() == [[0.0, 1.0], [0.2, 0.4]]


def test_csv_errors(tmp_path):
    with pytest.raises(FormatError):
        load_dataset(tmp_path / "missing.csv")
    p = tmp_path / "bad.csv"
    p.write_text("1,0.5\n2,0.5,0.5\n")
    with pytest.raises(FormatError):
        load_dataset(p)


def test_idx_pair_with_resize(tmp_path, rng):
    imgs = rng.integers(0, 256, size=(3, 28, 28))
    _write_idx(tmp_path / "t-images-idx3-ubyte", imgs)
    _write_idx(tmp_path / "t-labels-idx1-ubyte", [7, 0, 3])
    ds = load_dataset(tmp_path / "t-images-idx3-ubyte", "idx", n_classes=10, n_features=100)
    assert ds.samples.shape == (3, 100) and ds.labels.tolist() == [7, 0, 3]
    ref = (imgs[:, 4:24, 4:24] / 255.0).reshape(3, 10, 2, 10, 2).mean(axis=(2, 4))
    assert np.allclose(ds.samples, ref.reshape(3, 100))


def test_reshape_modes():
    imgs = np.random.default_rng(0).uniform(0, 1, (2, 28, 28))
    assert np.array_equal(reshape_images(imgs, 20), imgs[:, 4:24, 4:24])
    assert reshape_images(imgs, 10, "bilinear").shape == (2, 10, 10)
    with pytest.raises(FormatError):
        reshape_images(imgs, 40)
    with pytest.raises(FormatError):
        reshape_images(imgs, 10, "nearest")


def test_non_square_resize_rejected(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("0,0.1,0.2,0.3\n")
    with pytest.raises(DimensionMismatch):
        load_dataset(p, n_features=2)


def test_dataset_checks():
    with pytest.raises(FormatError):
        Dataset(np.zeros((2, 2)), [0], 2)
    with pytest.raises(FormatError):
        Dataset(np.full((1, 2), 1.5), [0], 2)
    with pytest.raises(FormatError):
        Dataset(np.zeros((1, 2)), [2], 2)
    ds = Dataset(np.zeros((4, 2)), [0, 1, 0, 1], 2)
    assert len(ds.head(3)) == 3
    with pytest.raises(DimensionMismatch):
        ds.check_topology(default_config([3, 2]).topology)


def test_encode_input():
    cfg = default_config([3, 2])
    assert encode_input([0.0, 0.5, 1.0], cfg).tolist() == [-0.8, 0.0, 0.8]
    with pytest.raises(RangeError):
        encode_input([1.2], cfg)
    with pytest.raises(RangeError):
        encode_input([np.nan], cfg)


def test_weights_round_trip(tmp_path, rng):
    w = WeightMatrices([rng.normal(size=(3, 4)), rng.normal(size=(2, 3))],
                       [rng.normal(size=3), rng.normal(size=2)])
    save_weights(w, tmp_path / "net" / "weights.json")
    again = load_weights(tmp_path / "net" / "weights.json")
    assert weights_digest(again) == weights_digest(w)


def test_weights_errors(tmp_path):
    p = tmp_path / "w.json"
    p.write_text("{not json")
    with pytest.raises(FormatError):
        load_weights(p)
    p.write_text('{"layers": []}')
    with pytest.raises(FormatError):
        load_weights(p)
    p.write_text('{"layers": [{"weights": "nope.csv"}]}')
    with pytest.raises(FormatError):
        load_weights(p)
