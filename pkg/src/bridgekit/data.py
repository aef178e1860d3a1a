"""Synthetic paired-translation datasets, the normalization pipeline, and the
binary tensor container / checkpoint formats.

Container layout (little-endian, bit-exact round trip):

    magic  b"BRTK1\\x00"
    u32    rank
    u64[rank] dims
    u8     dtype tag (0 = float64, 1 = float32)
    payload, row-major

A checkpoint is a JSON header (canonical encoding: sorted keys, compact
separators) carrying the run configuration and the tensor name order,
followed by one container blob per named tensor:

    magic  b"BRTKCKPT"
    u64    header length
    header JSON: {"config": {...}, "tensors": [names...]}
    containers, concatenated in listed order
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import uniform_filter

MAGIC = b"BRTK1\x00"
CKPT_MAGIC = b"BRTKCKPT"
_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<f4")}
_TAGS = {np.dtype("float64"): 0, np.dtype("float32"): 1}

TASKS = ("gauss2gauss", "shapes16")

_ROTATION_DEG = 35.0
_MIX_MEANS = np.array([[-0.5, -0.2], [0.5, 0.2]])
_MIX_STD = 0.15
_SOURCE_GAIN = 1.5


class ContainerError(ValueError):
    """Malformed tensor container or checkpoint."""


@dataclass(frozen=True)
class PairedDataset:
    """Aligned (target, source) batches with disjoint split index sets."""

    task: str
    x0: np.ndarray
    y: np.ndarray
    splits: dict

    def subset(self, split: str) -> tuple[np.ndarray, np.ndarray]:
        idx = self.splits[split]
        return self.x0[idx], self.y[idx]


def source_map_gauss2gauss(x0: np.ndarray) -> np.ndarray:
    """Deterministic target-to-source map: rotation then tanh squashing.

    Invertible and nonlinear, so translating back is learnable but not
    achievable by copying."""
    theta = np.deg2rad(_ROTATION_DEG)
    rot = np.array([[np.cos(theta), -np.sin(theta)],
                    [np.sin(theta), np.cos(theta)]])
    return np.tanh(_SOURCE_GAIN * x0 @ rot.T)


def source_map_shapes16(x0: np.ndarray) -> np.ndarray:
    """Intensity inversion followed by a 3x3 box blur (reflect padding).

    The averaging cannot leave [-1, 1]; the clip only strips float dust."""
    return np.clip(uniform_filter(-x0, size=(1, 1, 3, 3), mode="reflect"), -1.0, 1.0)


def _make_gauss2gauss(n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    comp = rng.integers(0, 2, size=n)
    eps = rng.standard_normal((n, 2))
    x0 = np.clip(_MIX_MEANS[comp] + _MIX_STD * eps, -1.0, 1.0)
    return x0, source_map_gauss2gauss(x0)


def _make_shapes16(n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    imgs = np.full((n, 1, 16, 16), -1.0)
    ii, jj = np.meshgrid(np.arange(16), np.arange(16), indexing="ij")
    for k in range(n):
        kind = rng.integers(0, 2)
        intensity = rng.uniform(0.1, 1.0)
        ci, cj = rng.uniform(4, 12, 2)
        ri, rj = rng.uniform(2, 5, 2)
        if kind == 0:
            mask = (np.abs(ii - ci) <= ri) & (np.abs(jj - cj) <= rj)
        else:
            mask = ((ii - ci) / ri) ** 2 + ((jj - cj) / rj) ** 2 <= 1.0
        imgs[k, 0][mask] = intensity
    return imgs, source_map_shapes16(imgs)


def make_synthetic_pairs(task: str, n: int, seed: int) -> PairedDataset:
    """Generate n paired samples plus disjoint 80/10/10 train/val/test splits.

    The source is a known analytic function of the target in both tasks, so
    ground truth is exact and regeneration from the seed is bit-identical.
    """
    if task not in TASKS:
        raise ValueError(f"task must be one of {TASKS}, got {task!r}")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    if task == "gauss2gauss":
        x0, y = _make_gauss2gauss(n, rng)
    else:
        x0, y = _make_shapes16(n, rng)
    n_train = max(1, int(round(0.8 * n)))
    n_val = max(0, int(round(0.1 * n)))
    splits = {
        "train": np.arange(0, min(n_train, n)),
        "val": np.arange(min(n_train, n), min(n_train + n_val, n)),
        "test": np.arange(min(n_train + n_val, n), n),
    }
    return PairedDataset(task=task, x0=x0, y=y, splits=splits)


def normalize_volume(raw: np.ndarray) -> np.ndarray:
    """Two-stage intensity normalization: scale to mean 1, then map the
    global min/max affinely onto [-1, 1].

    Scale-invariant for positive scalings; rejects constant or non-finite
    input and non-positive mean intensity."""
    raw = np.asarray(raw, dtype=np.float64)
    if not np.all(np.isfinite(raw)):
        raise ValueError("input must be finite")
    mean = raw.mean()
    if mean <= 0:
        raise ValueError(f"mean intensity must be positive, got {mean:g}")
    scaled = raw / mean
    lo, hi = scaled.min(), scaled.max()
    if hi == lo:
        raise ValueError("constant input has zero range")
    return 2.0 * (scaled - lo) / (hi - lo) - 1.0


# ---------------------------------------------------------------------------
# tensor container


def save_tensor(fp_or_path, array: np.ndarray) -> None:
    """Write one array in the container format (float64 or float32 only)."""
    array = np.ascontiguousarray(array)
    if array.dtype not in _TAGS:
        raise ContainerError(f"unsupported dtype {array.dtype}; use float32/float64")
    own = isinstance(fp_or_path, (str, bytes)) or hasattr(fp_or_path, "__fspath__")
    fp = open(fp_or_path, "wb") if own else fp_or_path
    try:
        fp.write(MAGIC)
        fp.write(struct.pack("<I", array.ndim))
        fp.write(struct.pack(f"<{array.ndim}Q", *array.shape))
        fp.write(struct.pack("<B", _TAGS[array.dtype]))
        fp.write(array.astype(array.dtype.newbyteorder("<"), copy=False).tobytes())
    finally:
        if own:
            fp.close()


def load_tensor(fp_or_path) -> np.ndarray:
    """Read one array back; validates magic, dims, dtype tag, payload size."""
    own = isinstance(fp_or_path, (str, bytes)) or hasattr(fp_or_path, "__fspath__")
    fp = open(fp_or_path, "rb") if own else fp_or_path
    try:
        magic = fp.read(len(MAGIC))
        if magic != MAGIC:
            raise ContainerError(f"bad magic {magic!r}, expected {MAGIC!r}")
        (rank,) = struct.unpack("<I", _read_exact(fp, 4, "rank"))
        if rank > 32:
            raise ContainerError(f"implausible rank {rank}")
        dims = struct.unpack(f"<{rank}Q", _read_exact(fp, 8 * rank, "dims"))
        (tag,) = struct.unpack("<B", _read_exact(fp, 1, "dtype tag"))
        if tag not in _DTYPES:
            raise ContainerError(f"unknown dtype tag {tag}")
        dtype = _DTYPES[tag]
        count = int(np.prod(dims, dtype=np.int64)) if rank else 1
        payload = _read_exact(fp, count * dtype.itemsize, "payload")
        return np.frombuffer(payload, dtype=dtype).reshape(dims).copy()
    finally:
        if own:
            fp.close()


def _read_exact(fp, n: int, what: str) -> bytes:
    buf = fp.read(n)
    if len(buf) != n:
        raise ContainerError(f"truncated container while reading {what} "
                             f"({len(buf)} of {n} bytes)")
    return buf


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path, config: dict, tensors: dict) -> None:
    """Write named float arrays plus a config header; byte order of tensors
    follows the dict's insertion order."""
    names = list(tensors)
    header = json.dumps({"config": config, "tensors": names},
                        sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fp:
        fp.write(CKPT_MAGIC)
        fp.write(struct.pack("<Q", len(header)))
        fp.write(header)
        for name in names:
            save_tensor(fp, np.asarray(tensors[name]))


def load_checkpoint(path) -> tuple[dict, dict]:
    """Read back (config, tensors) from :func:`save_checkpoint`."""
    with open(path, "rb") as fp:
        magic = fp.read(len(CKPT_MAGIC))
        if magic != CKPT_MAGIC:
            raise ContainerError(f"bad checkpoint magic {magic!r}")
        (hlen,) = struct.unpack("<Q", _read_exact(fp, 8, "header length"))
        header = json.loads(_read_exact(fp, hlen, "header"))
        tensors = {name: load_tensor(fp) for name in header["tensors"]}
        return header["config"], tensors


def tensor_bytes(array: np.ndarray) -> bytes:
    """Container encoding of one array as bytes (for digesting/comparison)."""
    buf = io.BytesIO()
    save_tensor(buf, array)
    return buf.getvalue()
