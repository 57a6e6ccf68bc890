"""MNIST IDX readers, the PIGW snapshot-store container, and CSV export."""

from __future__ import annotations

import csv
import gzip
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

IMAGE_MAGIC = 2051
LABEL_MAGIC = 2049
STORE_MAGIC = b"PIGW"
STORE_VERSION = 1


class FormatError(ValueError):
    pass


class DataError(ValueError):
    pass


@dataclass
class ImageTensor:
    count: int
    rows: int
    cols: int
    pixels: np.ndarray  # (count, rows * cols) floats in [0, 1]

    def __post_init__(self):
        if self.pixels.shape != (self.count, self.rows * self.cols):
            raise DataError("pixel array does not match declared dimensions")


@dataclass
class LabelVector:
    count: int
    labels: np.ndarray


def _read_bytes(path) -> bytes:
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as fh:
        return fh.read()


def load_idx_images(path) -> ImageTensor:
    raw = _read_bytes(path)
    if len(raw) >= 4 and struct.unpack(">I", raw[:4])[0] != IMAGE_MAGIC:
        magic = struct.unpack(">I", raw[:4])[0]
        raise FormatError(f"{path}: magic {magic} is not an IDX image file ({IMAGE_MAGIC})")
    if len(raw) < 16:
        raise OSError(f"{path}: truncated IDX header")
    _, count, rows, cols = struct.unpack(">IIII", raw[:16])
    need = count * rows * cols
    body = np.frombuffer(raw, dtype=np.uint8, offset=16)
    if body.size < need:
        raise OSError(f"{path}: truncated payload, expected {need} bytes, found {body.size}")
    pixels = body[:need].reshape(count, rows * cols) / 255.0
    return ImageTensor(count, rows, cols, pixels)


def load_idx_labels(path) -> LabelVector:
    raw = _read_bytes(path)
    if len(raw) < 8:
        raise OSError(f"{path}: truncated IDX header")
    magic, count = struct.unpack(">II", raw[:8])
    if magic != LABEL_MAGIC:
        raise FormatError(f"{path}: magic {magic} is not an IDX label file ({LABEL_MAGIC})")
    body = np.frombuffer(raw, dtype=np.uint8, offset=8)
    if body.size < count:
        raise OSError(f"{path}: truncated payload, expected {count} labels, found {body.size}")
    labels = body[:count].astype(np.int64)
    if labels.size and labels.max() > 9:
        raise DataError(f"{path}: label {labels.max()} outside 0..9")
    return LabelVector(count, labels)


def write_idx_images(path, images: np.ndarray):
    """Write raw uint8 images of shape (count, rows, cols)."""
    images = np.asarray(images, dtype=np.uint8)
    count, rows, cols = images.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack(">IIII", IMAGE_MAGIC, count, rows, cols))
        fh.write(images.tobytes())


def write_idx_labels(path, labels: Sequence[int]):
    labels = np.asarray(labels, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">II", LABEL_MAGIC, labels.size))
        fh.write(labels.tobytes())


MNIST_FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}


@dataclass
class Dataset:
    train_x: np.ndarray
    train_y: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray


def find_mnist_file(directory, stem: str) -> Path:
    directory = Path(directory)
    for name in (stem, stem + ".gz", stem.replace("-idx", ".idx")):
        p = directory / name
        if p.exists():
            return p
    raise FileNotFoundError(f"{stem} not found in {directory}")


def load_mnist(directory) -> Dataset:
    files = {k: find_mnist_file(directory, v) for k, v in MNIST_FILES.items()}
    train = load_idx_images(files["train_images"])
    train_y = load_idx_labels(files["train_labels"])
    test = load_idx_images(files["test_images"])
    test_y = load_idx_labels(files["test_labels"])
    if train.count != train_y.count or test.count != test_y.count:
        raise DataError("image and label counts differ")
    return Dataset(train.pixels, train_y.labels, test.pixels, test_y.labels)


@dataclass
class SnapshotStore:
    """Weight snapshots indexed [run, layer, epoch]; epoch 0 is the initialization."""

    scheme: str
    regularized: bool
    d: int
    layer_count: int
    epochs: int
    runs: int
    matrices: np.ndarray  # (runs, layer_count, epochs + 1, d, d)
    accuracies: np.ndarray  # (runs, epochs + 1)
    master_seed: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.matrices = np.asarray(self.matrices, dtype=np.float64).reshape(
            self.runs, self.layer_count, self.epochs + 1, self.d, self.d
        )
        self.accuracies = np.asarray(self.accuracies, dtype=np.float64).reshape(self.runs, self.epochs + 1)

    def header(self) -> dict:
        return {
            "scheme": self.scheme,
            "regularized": bool(self.regularized),
            "d": int(self.d),
            "layer_count": int(self.layer_count),
            "epochs": int(self.epochs),
            "runs": int(self.runs),
            "master_seed": int(self.master_seed),
            "meta": self.meta,
        }

    def equals(self, other: "SnapshotStore") -> bool:
        return (
            self.header() == other.header()
            and self.matrices.tobytes() == other.matrices.tobytes()
            and self.accuracies.tobytes() == other.accuracies.tobytes()
        )


def write_store(store: SnapshotStore, path):
    head = json.dumps(store.header(), sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(STORE_MAGIC)
        fh.write(struct.pack("<II", STORE_VERSION, len(head)))
        fh.write(head)
        fh.write(store.matrices.astype("<f8").tobytes())
        fh.write(store.accuracies.astype("<f8").tobytes())


def read_store(path) -> SnapshotStore:
    raw = Path(path).read_bytes()
    if raw[:4] != STORE_MAGIC:
        raise FormatError(f"{path}: not a snapshot store (magic {raw[:4]!r})")
    if len(raw) < 12:
        raise OSError(f"{path}: truncated header")
    version, head_len = struct.unpack("<II", raw[4:12])
    if version != STORE_VERSION:
        raise FormatError(f"{path}: unsupported store version {version}")
    try:
        head = json.loads(raw[12:12 + head_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: unreadable metadata") from exc
    runs, layers, epochs, d = head["runs"], head["layer_count"], head["epochs"], head["d"]
    n_mat = runs * layers * (epochs + 1) * d * d
    n_acc = runs * (epochs + 1)
    body = raw[12 + head_len:]
    if len(body) != 8 * (n_mat + n_acc):
        raise DataError(f"{path}: payload has {len(body)} bytes, header implies {8 * (n_mat + n_acc)}")
    values = np.frombuffer(body, dtype="<f8")
    return SnapshotStore(
        scheme=head["scheme"],
        regularized=head["regularized"],
        d=d,
        layer_count=layers,
        epochs=epochs,
        runs=runs,
        matrices=values[:n_mat].astype(np.float64),
        accuracies=values[n_mat:].astype(np.float64),
        master_seed=head["master_seed"],
        meta=head.get("meta", {}),
    )


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v) or math.isinf(v):
            return str(v)
        return repr(v)
    return str(value)


def export_table(rows: Iterable[Mapping], path, columns: Sequence[str] | None = None):
    """Write rows as CSV with a header; floats keep full precision."""
    rows = list(rows)
    if columns is None:
        if not rows:
            raise ValueError("columns are required for an empty table")
        columns = list(rows[0].keys())
    for r in rows:
        if list(r.keys()) != list(columns):
            raise ValueError("rows must share the same columns in the same order")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])


def read_table(path) -> list[dict]:
    """Parse a CSV written by :func:`export_table`; numeric cells come back as floats."""

    def conv(s):
        try:
            return float(s)
        except ValueError:
            return s

    with open(path, newline="") as fh:
        return [{k: conv(v) for k, v in row.items()} for row in csv.DictReader(fh)]
