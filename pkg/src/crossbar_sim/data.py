"""Datasets, input encoding and weight files."""

from __future__ import annotations

import csv
import gzip
import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .circuit import WeightMatrices
from .exceptions import DimensionMismatch, FormatError, RangeError


@dataclass
class Dataset:
    samples: np.ndarray      # (n, n_features) in [0, 1]
    labels: np.ndarray       # (n,) integer class indices
    n_classes: int

    def __post_init__(self):
        self.samples = np.atleast_2d(np.asarray(self.samples, dtype=float))
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if self.samples.shape[0] != self.labels.shape[0]:
            raise FormatError(f"{self.samples.shape[0]} samples but {self.labels.shape[0]} labels")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise FormatError(f"labels must lie in [0, {self.n_classes})")
        if self.samples.size and (np.nanmin(self.samples) < 0 or np.nanmax(self.samples) > 1
                                  or np.isnan(self.samples).any()):
            raise FormatError("features must lie in [0, 1]")

    def __len__(self):
        return self.labels.shape[0]

    @property
    def n_features(self) -> int:
        return self.samples.shape[1]

    def head(self, n: int) -> "Dataset":
        return Dataset(self.samples[:n], self.labels[:n], self.n_classes)

    def check_topology(self, topology):
        if self.n_features != topology.n_inputs:
            raise DimensionMismatch(
                f"dataset has {self.n_features} features, network expects {topology.n_inputs}")
        if self.n_classes > topology.n_outputs:
            raise DimensionMismatch(
                f"dataset has {self.n_classes} classes, network has {topology.n_outputs} outputs")

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.samples).tobytes())
        h.update(np.ascontiguousarray(self.labels).tobytes())
        return h.hexdigest()


# --------------------------------------------------------------------------
# image reshaping

def center_crop(images: np.ndarray, size: int) -> np.ndarray:
    """Crop (n, h, w) images to (n, size, size) around the centre."""
    h, w = images.shape[1:]
    if size > min(h, w):
        raise FormatError(f"cannot crop {h}x{w} images to {size}x{size}")
    top, left = (h - size) // 2, (w - size) // 2
    return images[:, top:top + size, left:left + size]


def block_downsample(images: np.ndarray, factor: int) -> np.ndarray:
    """Average non-overlapping factor x factor blocks."""
    n, h, w = images.shape
    if h % factor or w % factor:
        raise FormatError(f"{h}x{w} is not divisible by {factor}")
    return images.reshape(n, h // factor, factor, w // factor, factor).mean(axis=(2, 4))


def bilinear_resize(images: np.ndarray, size: int) -> np.ndarray:
    from scipy.ndimage import zoom
    n, h, w = images.shape
    out = zoom(images, (1, size / h, size / w), order=1)
    return np.clip(out, 0.0, 1.0)


def reshape_images(images: np.ndarray, side: int, method: str = "crop") -> np.ndarray:
    """Bring square images to ``side`` x ``side``.

    ``crop`` centre-crops to the largest multiple of ``side`` that fits and
    block-averages down to ``side`` (28 -> 20 is a plain crop, 28 -> 10
    crops to 20 and averages 2x2 blocks).
    ``bilinear`` resizes the whole image instead.
    """
    h = images.shape[1]
    if side == h:
        return images
    if method == "bilinear":
        return bilinear_resize(images, side)
    if method != "crop":
        raise FormatError(f"unknown resize method {method!r}")
    factor = h // side
    if factor < 1:
        raise FormatError(f"cannot enlarge {h}x{h} images to {side}x{side} by cropping")
    cropped = center_crop(images, side * factor)
    return block_downsample(cropped, factor) if factor > 1 else cropped


# --------------------------------------------------------------------------
# loaders

def _open(path: Path):
    return gzip.open(path, "rb") if path.suffix == ".gz" else open(path, "rb")


def _read_idx(path: Path) -> np.ndarray:
    with _open(path) as fh:
        head = fh.read(4)
        if len(head) != 4 or head[0] or head[1]:
            raise FormatError(f"{path}: not an IDX file")
        dtype_code, ndim = head[2], head[3]
        if dtype_code != 0x08:
            raise FormatError(f"{path}: only unsigned-byte IDX data is supported")
        dims = struct.unpack(f">{ndim}I", fh.read(4 * ndim))
        data = np.frombuffer(fh.read(), dtype=np.uint8)
    if data.size != int(np.prod(dims)):
        raise FormatError(f"{path}: expected {int(np.prod(dims))} bytes, got {data.size}")
    return data.reshape(dims)


def _read_csv(path: Path, scale: float | None):
    labels, rows = [], []
    with open(path, newline="") if path.suffix != ".gz" else gzip.open(path, "rt") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if not row or row[0].startswith("#"):
                continue
            try:
                labels.append(int(float(row[0])))
                rows.append([float(x) for x in row[1:]])
            except ValueError:
                if lineno == 1:
                    continue          # header
                raise FormatError(f"{path}:{lineno}: non-numeric field") from None
    if not rows:
        return np.zeros((0, 0)), np.zeros(0, dtype=np.int64)
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise FormatError(f"{path}: rows have differing feature counts {sorted(widths)}")
    x = np.array(rows)
    if scale is None:
        scale = 255.0 if x.size and x.max() > 1.0 else 1.0
    return x / scale, np.array(labels, dtype=np.int64)


def load_dataset(path, fmt: str = "csv", n_classes: int | None = None,
                 n_features: int | None = None, resize: str = "crop",
                 labels_path=None, scale: float | None = None) -> Dataset:
    """Load a dataset with features scaled to [0, 1].

    ``fmt`` is ``csv`` (``label,f1,f2,...`` rows; 0-255 pixel values are
    detected and rescaled) or ``idx`` (an image file plus ``labels_path``;
    when omitted the label file is guessed from the image file name).
    Square images are resized to ``n_features`` pixels when given.
    """
    path = Path(path)
    fmt = fmt.lower()
    if not path.exists():
        raise FormatError(f"{path}: no such file")
    if fmt == "csv":
        x, y = _read_csv(path, scale)
    elif fmt in ("idx", "idxpair"):
        if labels_path is None:
            labels_path = Path(str(path).replace("images-idx3", "labels-idx1")
                               .replace("images.idx3", "labels.idx1"))
            if labels_path == path:
                raise FormatError("give the label file of the IDX pair")
        imgs = _read_idx(path)
        y = _read_idx(Path(labels_path)).astype(np.int64)
        if imgs.ndim != 3:
            raise FormatError(f"{path}: expected a 3-D image array")
        x = imgs.astype(float) / (255.0 if scale is None else scale)
        if len(y) != len(x):
            raise FormatError(f"{len(x)} images but {len(y)} labels")
        x = x.reshape(len(x), -1)
    else:
        raise FormatError(f"unknown dataset format {fmt!r}")

    if n_features is not None and x.shape[1] != n_features:
        side_in, side_out = int(round(np.sqrt(x.shape[1]))), int(round(np.sqrt(n_features)))
        if side_in ** 2 != x.shape[1] or side_out ** 2 != n_features:
            raise DimensionMismatch(
                f"{x.shape[1]} features cannot be resized to {n_features}")
        x = reshape_images(x.reshape(-1, side_in, side_in), side_out, resize)
        x = x.reshape(len(x), -1)
    if n_classes is None:
        n_classes = int(y.max()) + 1 if y.size else 1
    if x.size and (x.min() < 0 or x.max() > 1):
        raise FormatError("features fall outside [0, 1] after scaling")
    return Dataset(x, y, n_classes)


def save_dataset_csv(ds: Dataset, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for label, row in zip(ds.labels, ds.samples):
            w.writerow([int(label)] + [repr(float(v)) for v in row])


# --------------------------------------------------------------------------
# encoding

def encode_input(features, cfg) -> np.ndarray:
    """Affine map of [0, 1] features onto [vss, vdd]."""
    f = np.asarray(features, dtype=float)
    if f.size and (np.isnan(f).any() or f.min() < 0 or f.max() > 1):
        raise RangeError("input features must lie in [0, 1]")
    return cfg.vss + f * (cfg.vdd - cfg.vss)


# --------------------------------------------------------------------------
# weights

def _read_matrix(path: Path) -> np.ndarray:
    try:
        m = np.loadtxt(path, delimiter=",", ndmin=2)
    except (OSError, ValueError) as exc:
        raise FormatError(f"{path}: {exc}") from None
    return m


def load_weights(path) -> WeightMatrices:
    """Read a JSON manifest ``{"layers": [{"weights": f, "bias": f}, ...]}``.

    Each weight CSV is an L_{j+1} x L_j matrix, each bias CSV a single row
    or column of L_{j+1} values; paths are relative to the manifest.
    """
    path = Path(path)
    try:
        manifest = json.loads(path.read_text())
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: {exc}") from None
    layers = manifest.get("layers") if isinstance(manifest, dict) else None
    if not layers:
        raise FormatError(f"{path}: manifest needs a non-empty 'layers' list")
    ws, bs = [], []
    for j, entry in enumerate(layers):
        if "weights" not in entry:
            raise FormatError(f"{path}: layer {j + 1} has no 'weights' file")
        ws.append(_read_matrix(path.parent / entry["weights"]))
        if entry.get("bias"):
            bs.append(_read_matrix(path.parent / entry["bias"]).reshape(-1))
        else:
            bs.append(np.zeros(ws[-1].shape[0]))
    return WeightMatrices(ws, bs)


def save_weights(weights: WeightMatrices, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    layers = []
    for j, (w, b) in enumerate(zip(weights.weights, weights.biases), 1):
        wf, bf = f"w{j}.csv", f"b{j}.csv"
        np.savetxt(path.parent / wf, w, delimiter=",", fmt="%.17g")
        np.savetxt(path.parent / bf, b[None, :], delimiter=",", fmt="%.17g")
        layers.append({"weights": wf, "bias": bf})
    path.write_text(json.dumps({"layers": layers}, indent=2) + "\n")


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def weights_digest(weights: WeightMatrices) -> str:
    h = hashlib.sha256()
    for w, b in zip(weights.weights, weights.biases):
        h.update(np.ascontiguousarray(w).tobytes())
        h.update(np.ascontiguousarray(b).tobytes())
    return h.hexdigest()
