"""Datasets: the two-moons toy task, IDX (MNIST) files, and splits."""
from __future__ import annotations

import csv
import gzip
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .autodiff import Rng

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801
DATASET_MAGIC = b"VATD"


class DataError(ValueError):
    pass


@dataclass
class Dataset:
    inputs: np.ndarray
    labels: np.ndarray | None = None
    name: str = ""

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        if self.inputs.ndim != 2:
            raise DataError(f"inputs must be 2-D, got shape {self.inputs.shape}")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (len(self.inputs),):
                raise DataError("labels and inputs disagree on the number of examples")
            if self.labels.size and self.labels.min() < 0:
                raise DataError("labels must be non-negative")

    def __len__(self) -> int:
        return len(self.inputs)

    @property
    def input_dim(self) -> int:
        return self.inputs.shape[1]

    def subset(self, idx, name: str | None = None, keep_labels: bool = True) -> "Dataset":
        labels = self.labels[idx] if (keep_labels and self.labels is not None) else None
        return Dataset(self.inputs[idx], labels, name or self.name)


def _moon_points(rng: Rng, n: int, cluster: int) -> np.ndarray:
    t = rng.uniform(0.0, np.pi, n)
    if cluster == 0:
        return np.stack([np.cos(t), np.sin(t)], axis=1)
    return np.stack([1.0 - np.cos(t), 0.5 - np.sin(t)], axis=1)


def gen_two_clusters(
    rng: Rng,
    n_labeled: int = 8,
    n_unlabeled: int = 1000,
    noise: float = 0.08,
) -> tuple[Dataset, Dataset, np.ndarray]:
    """Two interleaving half-moons in 2-D.

    Returns the labeled set (half from each moon), the unlabeled set, and the
    moon id of every unlabeled point. The ids are for evaluation only.
    """
    if n_labeled % 2:
        raise ValueError("n_labeled must be even so both clusters get the same count")
    pts, truth = [], []
    for cluster in (0, 1):
        n_u = n_unlabeled // 2 + (cluster < n_unlabeled % 2)
        n = n_labeled // 2 + n_u
        pts.append(_moon_points(rng, n, cluster) + noise * rng.normal((n, 2)))
        truth.append(np.full(n, cluster))
    labeled_idx = [np.arange(n_labeled // 2), len(pts[0]) + np.arange(n_labeled // 2)]
    x = np.concatenate(pts)
    y = np.concatenate(truth)
    lab = np.concatenate(labeled_idx)
    unl = np.setdiff1d(np.arange(len(x)), lab)
    unl = unl[rng.permutation(len(unl))]
    labeled = Dataset(x[lab], y[lab], "moons-labeled")
    unlabeled = Dataset(x[unl], None, "moons-unlabeled")
    return labeled, unlabeled, y[unl]


def _open(path):
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, "rb")
    return open(path, "rb")


def _read_idx(path, magic: int, ndim: int) -> np.ndarray:
    with _open(path) as fh:
        buf = fh.read()
    if len(buf) < 4:
        raise DataError(f"{path}: truncated header")
    (got,) = struct.unpack_from(">I", buf, 0)
    if got != magic:
        raise DataError(f"{path}: bad magic 0x{got:08x}, expected 0x{magic:08x}")
    if len(buf) < 4 + 4 * ndim:
        raise DataError(f"{path}: truncated header")
    dims = struct.unpack_from(f">{ndim}I", buf, 4)
    count = int(np.prod(dims))
    body = buf[4 + 4 * ndim:]
    if len(body) < count:
        raise DataError(f"{path}: truncated file ({len(body)} of {count} bytes)")
    return np.frombuffer(body, dtype=np.uint8, count=count).reshape(dims)


def load_idx(images_path, labels_path, name: str = "mnist") -> Dataset:
    """Read an IDX image/label pair, scaling pixels to [0, 1] and flattening."""
    images = _read_idx(images_path, IMAGES_MAGIC, 3)
    labels = _read_idx(labels_path, LABELS_MAGIC, 1)
    if len(images) != len(labels):
        raise DataError(f"count mismatch: {len(images)} images vs {len(labels)} labels")
    x = images.reshape(len(images), -1).astype(np.float64) / 255.0
    return Dataset(x, labels.astype(np.int64), name)


def write_idx(images_path, labels_path, images: np.ndarray, labels: np.ndarray) -> None:
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    opener = gzip.open if str(images_path).endswith(".gz") else open
    with opener(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IMAGES_MAGIC, *images.shape))
        fh.write(images.tobytes())
    opener = gzip.open if str(labels_path).endswith(".gz") else open
    with opener(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", LABELS_MAGIC, len(labels)))
        fh.write(labels.tobytes())


def data_dir() -> Path:
    """Dataset root: ``$VATLAB_DATA_DIR`` or ``data/`` in the working directory."""
    return Path(os.environ.get("VATLAB_DATA_DIR", "data"))


def load_mnist(root=None) -> Dataset:
    """Load the MNIST digits found under ``root`` (see :func:`data_dir`).

    Looks for ``mnist10k/images-idx3-ubyte.gz`` first, then the standard
    ``train-images-idx3-ubyte`` file names.
    """
    root = Path(root) if root is not None else data_dir()
    candidates = [
        (root / "mnist10k" / "images-idx3-ubyte.gz", root / "mnist10k" / "labels-idx1-ubyte.gz"),
        (root / "train-images-idx3-ubyte.gz", root / "train-labels-idx1-ubyte.gz"),
        (root / "train-images-idx3-ubyte", root / "train-labels-idx1-ubyte"),
    ]
    for images, labels in candidates:
        if images.exists() and labels.exists():
            return load_idx(images, labels)
    raise DataError(f"no MNIST IDX files found under {root}")


def split(
    dataset: Dataset, rng: Rng, n_labeled: int, n_validation: int, num_classes: int | None = None
) -> tuple[Dataset, Dataset, Dataset]:
    """Partition into class-balanced labeled, unlabeled and validation sets.

    The labeled draw takes ``n_labeled // C`` examples per class, spreading
    the remainder one each over the first classes. The unlabeled pool keeps
    no labels.
    """
    if dataset.labels is None:
        raise DataError("split needs a labeled dataset")
    n = len(dataset)
    if n_labeled + n_validation > n:
        raise DataError(f"n_labeled + n_validation = {n_labeled + n_validation} exceeds N = {n}")
    c = num_classes or int(dataset.labels.max()) + 1
    order = rng.permutation(n)
    per_class = [n_labeled // c + (k < n_labeled % c) for k in range(c)]
    labeled = []
    for k in range(c):
        members = order[dataset.labels[order] == k]
        if len(members) < per_class[k]:
            raise DataError(f"class {k} has {len(members)} examples, need {per_class[k]}")
        labeled.append(members[: per_class[k]])
    labeled = np.sort(np.concatenate(labeled)) if labeled else np.array([], dtype=int)
    rest = order[~np.isin(order, labeled)]
    validation = np.sort(rest[:n_validation])
    unlabeled = np.sort(rest[n_validation:])
    return (
        dataset.subset(labeled, f"{dataset.name}-labeled"),
        dataset.subset(unlabeled, f"{dataset.name}-unlabeled", keep_labels=False),
        dataset.subset(validation, f"{dataset.name}-validation"),
    )


def split_indices(
    dataset: Dataset, rng: Rng, n_labeled: int, n_validation: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Index form of :func:`split`, for callers that need to track provenance."""
    tagged = Dataset(np.arange(len(dataset), dtype=np.float64)[:, None], dataset.labels)
    parts = split(tagged, rng, n_labeled, n_validation)
    return tuple(p.inputs[:, 0].astype(np.int64) for p in parts)


def save_dataset(path, ds: Dataset) -> None:
    """Binary cache: magic ``VATD``, N, dim, has-labels flag, f64 inputs, i64 labels."""
    has = ds.labels is not None
    with open(path, "wb") as fh:
        fh.write(DATASET_MAGIC + struct.pack("<QQB", len(ds), ds.input_dim, has))
        name = ds.name.encode()
        fh.write(struct.pack("<H", len(name)) + name)
        fh.write(ds.inputs.astype("<f8").tobytes())
        if has:
            fh.write(ds.labels.astype("<i8").tobytes())


def load_dataset(path) -> Dataset:
    buf = Path(path).read_bytes()
    if buf[:4] != DATASET_MAGIC:
        raise DataError(f"{path}: bad magic {buf[:4]!r}")
    n, dim, has = struct.unpack_from("<QQB", buf, 4)
    off = 4 + struct.calcsize("<QQB")
    (name_len,) = struct.unpack_from("<H", buf, off)
    off += 2
    name = buf[off: off + name_len].decode()
    off += name_len
    need = 8 * n * dim + (8 * n if has else 0)
    if len(buf) - off != need:
        raise DataError(f"{path}: truncated dataset file")
    x = np.frombuffer(buf, "<f8", n * dim, off).reshape(n, dim).astype(np.float64)
    off += 8 * n * dim
    y = np.frombuffer(buf, "<i8", n, off).astype(np.int64) if has else None
    return Dataset(x, y, name)


def write_csv(path, ds: Dataset) -> None:
    """``x0,x1,...[,label]`` with one row per example."""
    cols = [f"x{i}" for i in range(ds.input_dim)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols + (["label"] if ds.labels is not None else []))
        for i, row in enumerate(ds.inputs):
            w.writerow([repr(float(v)) for v in row] + ([int(ds.labels[i])] if ds.labels is not None else []))
