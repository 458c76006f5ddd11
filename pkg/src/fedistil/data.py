"""Datasets, IDX loading, synthetic blobs and the label-skewed partition."""
from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .prng import SplitMix64, sample_indices

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class IdxError(ValueError):
    """Base class for malformed IDX input."""


class BadMagicError(IdxError):
    pass


class TruncatedFileError(IdxError):
    pass


class CountMismatchError(IdxError):
    pass


@dataclass(frozen=True)
class Dataset:
    inputs: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        if self.inputs.ndim != 2:
            raise ValueError("inputs must be a 2-D matrix")
        if self.labels.shape != (self.inputs.shape[0],):
            raise ValueError("one label per input row is required")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError(f"labels must lie in [0, {self.num_classes})")
        if not np.all(np.isfinite(self.inputs)):
            raise ValueError("inputs contain non-finite values")

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def input_dim(self) -> int:
        return self.inputs.shape[1]

    def subset(self, indices: Sequence[int]) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.inputs[idx], self.labels[idx], self.num_classes)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)


# ---------------------------------------------------------------- IDX files


def _read_bytes(path: Path) -> bytes:
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as f:
        return f.read()


def _parse_idx(raw: bytes, path: Path, magic: int) -> np.ndarray:
    if len(raw) < 4:
        raise TruncatedFileError(f"{path}: file shorter than the 4-byte magic number")
    (found,) = struct.unpack(">I", raw[:4])
    if found != magic:
        raise BadMagicError(f"{path}: magic 0x{found:08X}, expected 0x{magic:08X}")
    ndim = magic & 0xFF
    header_len = 4 + 4 * ndim
    if len(raw) < header_len:
        raise TruncatedFileError(f"{path}: header truncated")
    dims = struct.unpack(f">{ndim}I", raw[4:header_len])
    expected = int(np.prod(dims))
    if len(raw) - header_len < expected:
        raise TruncatedFileError(
            f"{path}: expected {expected} data bytes, found {len(raw) - header_len}"
        )
    data = np.frombuffer(raw, dtype=np.uint8, count=expected, offset=header_len)
    return data.reshape(dims)


def load_idx(images_path, labels_path, num_classes: int = 10) -> Dataset:
    """Read an IDX image/label file pair (optionally gzipped).

    Pixels are flattened per image and divided by 255.
    """
    images_path, labels_path = Path(images_path), Path(labels_path)
    images = _parse_idx(_read_bytes(images_path), images_path, IDX_IMAGES_MAGIC)
    labels = _parse_idx(_read_bytes(labels_path), labels_path, IDX_LABELS_MAGIC)
    if images.shape[0] != labels.shape[0]:
        raise CountMismatchError(
            f"{images.shape[0]} images in {images_path} but {labels.shape[0]} labels in {labels_path}"
        )
    if labels.size and labels.max() >= num_classes:
        raise IdxError(f"{labels_path}: label {labels.max()} >= num_classes {num_classes}")
    inputs = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return Dataset(inputs, labels.astype(np.int64), num_classes)


def write_idx(images: np.ndarray, labels: np.ndarray, images_path, labels_path) -> None:
    """Write uint8 images ``(n, rows, cols)`` and labels ``(n,)`` as IDX files."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    with open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, *images.shape))
        f.write(images.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABELS_MAGIC, labels.shape[0]))
        f.write(labels.tobytes())


# ------------------------------------------------------------ synthetic data


def class_centers(num_classes: int, input_dim: int) -> np.ndarray:
    """Unit-circle centers in the first two coordinates, zeros elsewhere."""
    angles = 2.0 * np.pi * np.arange(num_classes) / num_classes
    centers = np.zeros((num_classes, input_dim))
    centers[:, 0] = np.cos(angles)
    if input_dim > 1:
        centers[:, 1] = np.sin(angles)
    return centers


def synth_blobs(num_classes: int, per_class: int, input_dim: int, spread: float,
                rng: SplitMix64) -> Dataset:
    """Isotropic Gaussian blobs, ``per_class`` samples per class, class-major order.

    Noise is drawn class by class, row-major, from ``rng.normal_array``
    (two u64 draws per coordinate).
    """
    if min(num_classes, per_class, input_dim) < 1:
        raise ValueError("num_classes, per_class and input_dim must all be >= 1")
    if spread < 0:
        raise ValueError("spread must be non-negative")
    centers = class_centers(num_classes, input_dim)
    blocks = []
    for c in range(num_classes):
        noise = rng.normal_array(per_class * input_dim).reshape(per_class, input_dim)
        blocks.append(centers[c] + spread * noise)
    labels = np.repeat(np.arange(num_classes), per_class)
    return Dataset(np.vstack(blocks), labels, num_classes)


# ------------------------------------------------------------- partitioning


def device_labels(device: int, num_classes: int, labels_per_device: int) -> list[int]:
    return [(device + j) % num_classes for j in range(labels_per_device)]


def partition_noniid(dataset: Dataset, num_devices: int, labels_per_device: int = 2) -> list[Dataset]:
    """Give device ``i`` the classes ``i, i+1, ..., i+labels_per_device-1`` (mod C).

    Each class is split in dataset order among the devices that claim it,
    as evenly as possible; leftover samples go to the lowest device index.
    """
    C = dataset.num_classes
    if num_devices < 1 or labels_per_device < 1:
        raise ValueError("num_devices and labels_per_device must be >= 1")
    if labels_per_device > C:
        raise ValueError(f"labels_per_device={labels_per_device} exceeds num_classes={C}")
    claims: list[list[int]] = [[] for _ in range(C)]
    for i in range(num_devices):
        for c in device_labels(i, C, labels_per_device):
            claims[c].append(i)
    present = set(np.unique(dataset.labels).tolist())
    orphans = [c for c in range(C) if not claims[c] and c in present]
    if orphans:
        raise ValueError(f"infeasible partition: no device claims classes {orphans}")

    shards: list[list[np.ndarray]] = [[] for _ in range(num_devices)]
    for c in range(C):
        members = np.flatnonzero(dataset.labels == c)
        owners = claims[c]
        if not owners:
            continue
        base, extra = divmod(len(members), len(owners))
        start = 0
        for rank, dev in enumerate(owners):
            size = base + (1 if rank < extra else 0)
            shards[dev].append(members[start:start + size])
            start += size
    out = []
    for parts in shards:
        idx = np.sort(np.concatenate(parts)) if parts else np.zeros(0, dtype=np.int64)
        out.append(dataset.subset(idx))
    return out


def split_shared(dataset: Dataset, size: int, rng: SplitMix64) -> tuple[Dataset, Dataset]:
    """Draw ``size`` samples uniformly without replacement; also return the rest.

    The shared part keeps the draw order of the partial Fisher-Yates shuffle;
    the remainder keeps dataset order.
    """
    n = len(dataset)
    if size < 0 or size > n:
        raise ValueError(f"cannot draw {size} shared samples from {n}")
    picked = sample_indices(rng, n, size)
    mask = np.ones(n, dtype=bool)
    mask[picked] = False
    return dataset.subset(picked), dataset.subset(np.flatnonzero(mask))


def make_shared(dataset: Dataset, size: int, rng: SplitMix64) -> Dataset:
    return split_shared(dataset, size, rng)[0]
