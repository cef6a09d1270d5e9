"""Data sources: the 2D Gaussian ring, IDX image files, normalisation, corruption."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

IDX_IMAGES = 0x00000803
IDX_LABELS = 0x00000801


class IDXFormatError(ValueError):
    pass


@dataclass(frozen=True)
class RingSpec:
    k: int = 8
    radius: float = 2.0
    sigma: float = 0.1

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"ring needs k >= 1 modes, got {self.k}")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")
        if not self.radius > 0:
            raise ValueError(f"radius must be > 0, got {self.radius}")

    def means(self) -> np.ndarray:
        angles = 2 * np.pi * np.arange(self.k) / self.k
        return self.radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)


def sample_ring(spec: RingSpec, n: int, rng: np.random.Generator,
                dtype=np.float64) -> np.ndarray:
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    modes = rng.integers(0, spec.k, size=n)
    noise = rng.standard_normal((n, 2))
    return (spec.means()[modes] + spec.sigma * noise).astype(dtype)


class RingSampler:
    """Infinite ring data source with its own RNG."""

    def __init__(self, spec: RingSpec, rng: np.random.Generator, dtype=np.float32):
        self.spec, self.rng, self.dtype = spec, rng, dtype
        self.dim = 2

    def sample(self, n: int, rng: np.random.Generator | None = None) -> np.ndarray:
        return sample_ring(self.spec, n, rng or self.rng, self.dtype)


class ArraySampler:
    """Uniform minibatches (with replacement) from a fixed dataset."""

    def __init__(self, data: np.ndarray, rng: np.random.Generator, dtype=np.float32):
        self.data = np.asarray(data, dtype=dtype).reshape(len(data), -1)
        self.rng, self.dtype = rng, dtype
        self.dim = self.data.shape[1]

    def sample(self, n: int, rng: np.random.Generator | None = None) -> np.ndarray:
        return self.data[(rng or self.rng).integers(0, len(self.data), size=n)]


def _read_idx(path, expected_magic: int, rank: int) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 4:
        raise IDXFormatError(f"{path}: truncated IDX header")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != expected_magic:
        raise IDXFormatError(f"{path}: magic 0x{magic:08x}, expected 0x{expected_magic:08x}")
    header = 4 + 4 * rank
    if len(raw) < header:
        raise IDXFormatError(f"{path}: truncated IDX dimensions")
    dims = struct.unpack(f">{rank}I", raw[4:header])
    n = int(np.prod(dims, dtype=np.int64))
    body = raw[header:]
    if len(body) < n:
        raise IDXFormatError(f"{path}: truncated data, {len(body)} of {n} bytes")
    if len(body) > n:
        raise IDXFormatError(f"{path}: {len(body) - n} bytes beyond the declared dims {dims}")
    return np.frombuffer(body, dtype=np.uint8).reshape(dims)


def load_idx(path) -> np.ndarray:
    """(n, H, W) unsigned-byte images as float64 values in 0..255."""
    return _read_idx(path, IDX_IMAGES, 3).astype(np.float64)


def load_idx_labels(path) -> np.ndarray:
    return _read_idx(path, IDX_LABELS, 1).astype(np.int64)


def write_idx(path, array) -> None:
    arr = np.asarray(array)
    if arr.ndim == 3:
        magic = IDX_IMAGES
    elif arr.ndim == 1:
        magic = IDX_LABELS
    else:
        raise IDXFormatError(f"can only write rank-1 labels or rank-3 images, got {arr.ndim}")
    if arr.size and (arr.min() < 0 or arr.max() > 255):
        raise IDXFormatError("IDX unsigned-byte values must lie in 0..255")
    header = struct.pack(f">I{arr.ndim}I", magic, *arr.shape)
    Path(path).write_bytes(header + arr.astype(np.uint8).tobytes())


def normalize_unit_range(x, lo: float = 0.0, hi: float = 255.0) -> np.ndarray:
    """Affine map of [lo, hi] onto [-1, 1]."""
    if hi == lo:
        raise ValueError("normalisation range is empty (hi == lo)")
    if hi < lo:
        raise ValueError(f"hi ({hi}) must exceed lo ({lo})")
    x = np.asarray(x, dtype=np.float64)
    return (x - lo) * (2.0 / (hi - lo)) - 1.0


def denormalize_unit_range(x, lo: float = 0.0, hi: float = 255.0) -> np.ndarray:
    if hi <= lo:
        raise ValueError(f"hi ({hi}) must exceed lo ({lo})")
    return (np.asarray(x, dtype=np.float64) + 1.0) * ((hi - lo) / 2.0) + lo


def corrupt(x, noise_std: float, rng: np.random.Generator) -> np.ndarray:
    """Additive Gaussian corruption for the denoising autoencoder."""
    if noise_std < 0:
        raise ValueError(f"noise_std must be >= 0, got {noise_std}")
    x = np.asarray(x)
    if noise_std == 0:
        return x.copy()
    return (x + noise_std * rng.standard_normal(x.shape)).astype(x.dtype)
