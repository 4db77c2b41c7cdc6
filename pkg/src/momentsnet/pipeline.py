"""MomentsNet forward pass: patching, stage projection, hashing and pooling.

The pipeline is agnostic to where a ``KernelBank`` came from, so analytic
moment banks and learned PCA banks follow the same code path.
"""
from __future__ import annotations

import csv
import math
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, ContainerError, GeometryError, ShapeError, ThresholdSearchError
from .kernels import (
    KernelBank,
    MomentFamily,
    bank_from_orders,
    build_kernel_bank,
    descriptor_orders,
    project_patches,
)

__all__ = [
    "Image",
    "FeatureMap",
    "HashedMap",
    "NetConfig",
    "extract_patches",
    "project_map",
    "run_stage",
    "binarize",
    "hash_maps",
    "unhash",
    "block_geometry",
    "block_histogram",
    "feature_dim",
    "build_banks",
    "final_maps",
    "extract_features",
    "extract_batch",
    "ones_fraction",
    "auto_threshold",
    "moment_descriptor",
    "with_threshold",
    "write_features_csv",
    "write_features_binary",
    "read_features_binary",
]

MAX_HASH_BITS = 20


@dataclass
class Image:
    grid: np.ndarray
    label: int | None = None
    ident: str | None = None

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        if grid.ndim != 2 or 0 in grid.shape:
            raise ShapeError(f"image must be a non-empty 2-D grid, got shape {grid.shape}")
        self.grid = np.clip(grid, 0.0, 1.0)

    @property
    def shape(self):
        return self.grid.shape


@dataclass
class FeatureMap:
    grid: np.ndarray
    provenance: tuple = ()


@dataclass
class HashedMap:
    grid: np.ndarray
    L: int


@dataclass(frozen=True)
class NetConfig:
    """Network hyper-parameters; second-stage values default to the first-stage ones."""

    family: MomentFamily = field(default_factory=lambda: MomentFamily("Zernike"))
    stages: int = 1
    l1: int = 9
    k1: int = 11
    h1: int = 8
    overlap: float = 0.5
    threshold: float = 0.1
    l2: int | None = None
    k2: int | None = None
    h2: int | None = None
    input_size: tuple = (32, 32)
    complex_mode: str = "modulus"

    def __post_init__(self):
        if not isinstance(self.family, MomentFamily):
            object.__setattr__(self, "family", MomentFamily(self.family))
        for name, source in (("l2", "l1"), ("k2", "k1"), ("h2", "h1")):
            if getattr(self, name) is None:
                object.__setattr__(self, name, getattr(self, source))
        object.__setattr__(self, "input_size", tuple(int(v) for v in self.input_size))

    @classmethod
    def from_quintet(cls, family, L, k, h, R, t, stages=1, **kwargs):
        return cls(family=family, stages=stages, l1=L, k1=k, h1=h, overlap=R, threshold=t, **kwargs)

    def validate(self):
        M, N = self.input_size
        if self.stages not in (1, 2):
            raise ConfigError(f"stages must be 1 or 2, got {self.stages}", "stages")
        for name in ("l1", "l2"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}", name)
        if not 1 < self.k1 < M:
            raise GeometryError(f"patch height k1={self.k1} must satisfy 1 < k1 < {M}", "k")
        if not 1 < self.k2 < N:
            raise GeometryError(f"patch width k2={self.k2} must satisfy 1 < k2 < {N}", "k")
        if not 1 <= self.h1 <= M:
            raise GeometryError(f"block height h1={self.h1} must lie in [1, {M}]", "h")
        if not 1 <= self.h2 <= N:
            raise GeometryError(f"block width h2={self.h2} must lie in [1, {N}]", "h")
        if not 0.0 <= self.overlap < 1.0:
            raise ConfigError(f"overlap R={self.overlap} must lie in [0, 1)", "overlap")
        bits = self.hash_bits
        if bits > MAX_HASH_BITS:
            raise ConfigError(f"2^{bits} hash bins exceeds the 2^{MAX_HASH_BITS} cap", "l2" if self.stages == 2 else "l1")
        if self.complex_mode not in ("modulus", "real"):
            raise ConfigError(f"unknown complex mode {self.complex_mode!r}", "complex_mode")
        return self

    @property
    def hash_bits(self):
        return self.l2 if self.stages == 2 else self.l1

    def quintet(self):
        return (self.l1, self.k1, self.h1, self.overlap, self.threshold)


def _grid(item):
    if isinstance(item, (Image, FeatureMap, HashedMap)):
        return np.asarray(item.grid, dtype=float)
    return np.asarray(item, dtype=float)


def _patch_matrix(grid, k1, k2):
    """Zero-padded, mean-centered patches around every pixel, shape (M*N, k1*k2)."""
    top, left = (k1 - 1) // 2, (k2 - 1) // 2
    padded = np.pad(grid, ((top, k1 - 1 - top), (left, k2 - 1 - left)))
    windows = sliding_window_view(padded, (k1, k2)).reshape(-1, k1 * k2)
    return windows - windows.mean(axis=1, keepdims=True)


def extract_patches(image, k1, k2):
    """All M*N mean-centered k1 x k2 patches, one anchored at every pixel.

    Borders are zero-padded; for even sizes the anchor sits at index
    (k-1)//2 of the patch.
    """
    grid = _grid(image)
    return _patch_matrix(grid, k1, k2).reshape(-1, k1, k2)


def project_map(grid, bank: KernelBank, mode="modulus"):
    """Project every centered patch of ``grid``; returns (L, M, N)."""
    grid = _grid(grid)
    M, N = grid.shape
    values = project_patches(_patch_matrix(grid, bank.k1, bank.k2).reshape(-1, bank.k1, bank.k2), bank, mode)
    return values.T.reshape(len(bank), M, N)


def run_stage(inputs, bank, mode="modulus"):
    """Map each input to ``len(bank)`` feature maps of the same size."""
    out = []
    for i, item in enumerate(inputs):
        base = item.provenance if isinstance(item, FeatureMap) else (i,)
        for j, grid in enumerate(project_map(item, bank, mode)):
            out.append(FeatureMap(grid, base + (j,)))
    return out


def binarize(feature_map, t):
    """Modified Heaviside step: 1 where the value is >= t."""
    return (_grid(feature_map) >= t).astype(np.uint8)


def hash_maps(binary_maps):
    """Pack binary maps into one integer map; map k contributes bit k."""
    maps = [np.asarray(_grid(b)) for b in binary_maps]
    if not 1 <= len(maps) <= MAX_HASH_BITS:
        raise ShapeError(f"hash_maps needs between 1 and {MAX_HASH_BITS} maps, got {len(maps)}")
    shape = maps[0].shape
    if any(m.shape != shape for m in maps):
        raise ShapeError("all binary maps must share one shape")
    out = np.zeros(shape, dtype=np.int64)
    for k, b in enumerate(maps):
        out |= (b != 0).astype(np.int64) << k
    return HashedMap(out, len(maps))


def unhash(hashed):
    return [((hashed.grid >> k) & 1).astype(np.uint8) for k in range(hashed.L)]


def _stride(h, R):
    return max(1, int(math.floor(h * (1.0 - R) + 0.5)))


def block_geometry(M, N, h1, h2, R):
    """Return (stride1, stride2, blocks1, blocks2); partial border blocks are dropped."""
    if h1 > M or h2 > N or h1 < 1 or h2 < 1:
        raise GeometryError(f"block {h1}x{h2} does not fit a {M}x{N} map", "h")
    if not 0.0 <= R < 1.0:
        raise GeometryError(f"overlap ratio {R} must lie in [0, 1)", "overlap")
    s1, s2 = _stride(h1, R), _stride(h2, R)
    return s1, s2, (M - h1) // s1 + 1, (N - h2) // s2 + 1


@lru_cache(maxsize=64)
def _block_index(M, N, h1, h2, R):
    s1, s2, b1, b2 = block_geometry(M, N, h1, h2, R)
    rows = (np.arange(b1) * s1)[:, None] + np.arange(h1)[None, :]
    cols = (np.arange(b2) * s2)[:, None] + np.arange(h2)[None, :]
    flat = rows[:, None, :, None] * N + cols[None, :, None, :]
    index = flat.reshape(b1 * b2, h1 * h2)
    index.setflags(write=False)
    return index


def block_histogram(hashed, h1, h2, R, bins):
    """Concatenated per-block histograms of the hashed values (raw counts)."""
    grid = hashed.grid if isinstance(hashed, HashedMap) else np.asarray(hashed)
    M, N = grid.shape
    index = _block_index(M, N, h1, h2, float(R))
    values = grid.ravel()[index]
    if values.size and (values.min() < 0 or values.max() >= bins):
        raise ShapeError(f"hashed values fall outside [0, {bins - 1}]")
    B = index.shape[0]
    offsets = (np.arange(B) * bins)[:, None]
    counts = np.bincount((values + offsets).ravel(), minlength=B * bins)
    return counts.astype(np.float32)


def feature_dim(config):
    M, N = config.input_size
    _, _, b1, b2 = block_geometry(M, N, config.h1, config.h2, config.overlap)
    B = b1 * b2
    if config.stages == 2:
        return config.l1 * B * 2**config.l2
    return B * 2**config.l1


def build_banks(config):
    """Analytic banks for every stage of ``config``."""
    config.validate()
    banks = [build_kernel_bank(config.family, config.k1, config.k2, config.l1)]
    if config.stages == 2:
        banks.append(build_kernel_bank(config.family, config.k1, config.k2, config.l2))
    return banks


def _check_banks(config, banks):
    if len(banks) < config.stages:
        raise ConfigError(f"{config.stages}-stage net needs {config.stages} banks, got {len(banks)}", "stages")
    expected = [config.l1, config.l2][: config.stages]
    for level, (bank, L) in enumerate(zip(banks, expected), start=1):
        if len(bank) != L:
            raise ConfigError(f"stage {level} bank has {len(bank)} filters, config wants {L}", f"l{level}")
        if bank.shape != (config.k1, config.k2):
            raise ConfigError(f"stage {level} bank patch {bank.shape} != ({config.k1}, {config.k2})", "k")


def final_maps(image, config, banks):
    """Real-valued maps that get binarized: (L1, M, N) or (L1, L2, M, N)."""
    grid = _grid(image)
    if grid.shape != tuple(config.input_size):
        raise ShapeError(f"image shape {grid.shape} != configured input size {config.input_size}")
    first = project_map(grid, banks[0], config.complex_mode)
    if config.stages == 1:
        return first
    return np.stack([project_map(g, banks[1], config.complex_mode) for g in first])


def _pool(binary, config):
    bins = 2 ** len(binary)
    return block_histogram(hash_maps(binary), config.h1, config.h2, config.overlap, bins)


def extract_features(image, config, banks, threshold=None):
    """Feature vector of one image (float32 counts).

    Two-stage nets hash the L2 children of each first-stage map and pool
    each of the L1 results; one-stage nets hash the L1 maps into a single
    code map per image.
    """
    config.validate()
    _check_banks(config, banks)
    t = config.threshold if threshold is None else threshold
    maps = final_maps(image, config, banks)
    if config.stages == 1:
        return _pool(maps >= t, config)
    return np.concatenate([_pool(children >= t, config) for children in maps])


def _extract_chunk(args):
    grids, config, banks = args
    return np.stack([extract_features(g, config, banks) for g in grids])


def extract_batch(images, config, banks, jobs=1):
    """Stack feature vectors of ``images`` in input order, optionally in parallel."""
    grids = [_grid(im) for im in images]
    if not grids:
        return np.zeros((0, feature_dim(config)), dtype=np.float32)
    if jobs <= 1 or len(grids) < 2 * jobs:
        return _extract_chunk((grids, config, banks))
    size = math.ceil(len(grids) / jobs)
    chunks = [(grids[i : i + size], config, banks) for i in range(0, len(grids), size)]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        parts = list(pool.map(_extract_chunk, chunks))
    return np.concatenate(parts)


def ones_fraction(maps):
    """Share of ones across a collection of binary grids."""
    arrays = [np.asarray(_grid(m)) for m in maps] if isinstance(maps, (list, tuple)) else [np.asarray(maps)]
    total = sum(a.size for a in arrays)
    if total == 0:
        raise ShapeError("ones_fraction needs at least one non-empty grid")
    return float(sum(np.count_nonzero(a) for a in arrays)) / total


def auto_threshold(maps, target=(0.4, 0.5), resolution=1e-4):
    """Smallest t whose ones-fraction lands inside ``target``.

    Bisection on the pooled value distribution; ``resolution`` is relative
    to the value span. The fraction is non-increasing in t, so the search
    brackets the first t where it drops to ``target[1]`` or below.
    """
    lo_target, hi_target = target
    if not 0.0 <= lo_target <= hi_target <= 1.0:
        raise ValueError(f"target interval {target} must lie within [0, 1]")
    if isinstance(maps, (list, tuple)):
        values = np.concatenate([_grid(m).ravel() for m in maps]) if maps else np.zeros(0)
    else:
        values = np.asarray(maps, dtype=float).ravel()
    if values.size == 0:
        raise ThresholdSearchError("no values to threshold")
    values = np.sort(values)
    n = values.size

    def fraction(t):
        return (n - np.searchsorted(values, t, side="left")) / n

    lo, top = float(values[0]), float(values[-1])
    if fraction(lo) <= hi_target:
        return lo
    span = top - lo
    if span == 0.0:
        raise ThresholdSearchError(
            "all values are equal; the ones-fraction jumps from 1 to 0", achievable=(0.0, 1.0)
        )
    hi = top + span * resolution
    while hi - lo > span * resolution:
        mid = 0.5 * (lo + hi)
        if fraction(mid) <= hi_target:
            hi = mid
        else:
            lo = mid
    reached = fraction(hi)
    if reached < lo_target:
        raise ThresholdSearchError(
            f"ones-fraction jumps from {fraction(lo):.4f} to {reached:.4f}; target {target} unreachable",
            achievable=(reached, fraction(lo)),
        )
    return hi


def moment_descriptor(image, family, max_order, mode="modulus"):
    """Whole-image moments up to ``max_order`` (non-negative m only)."""
    grid = _grid(image)
    fam = family if isinstance(family, MomentFamily) else MomentFamily(family)
    orders = descriptor_orders(fam, max_order)
    if fam.is_discrete:
        orders = [o for o in orders if o.n < grid.shape[0] and o.m < grid.shape[1]]
    bank = _descriptor_bank(fam, grid.shape, tuple(orders))
    return project_patches(grid, bank, mode)


@lru_cache(maxsize=16)
def _descriptor_bank(family, shape, orders):
    return bank_from_orders(family, shape[0], shape[1], list(orders))


# -- export --------------------------------------------------------------------

_FV_MAGIC = b"MNFV"
_FV_VERSION = 1


def write_features_csv(path, features, labels=None, ids=None):
    features = np.asarray(features)
    ids = range(len(features)) if ids is None else ids
    labels = [""] * len(features) if labels is None else labels
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "label"] + [f"f{j}" for j in range(features.shape[1])])
        for ident, label, row in zip(ids, labels, features):
            writer.writerow([ident, label] + [repr(float(v)) for v in row])


def write_features_binary(path, features):
    """MNFV container: magic, u8 version, u32 images, u32 dims, float32 rows."""
    features = np.asarray(features, dtype="<f4")
    if features.ndim != 2:
        raise ShapeError("feature matrix must be 2-D")
    with open(path, "wb") as fh:
        fh.write(_FV_MAGIC + struct.pack("<BII", _FV_VERSION, *features.shape))
        fh.write(np.ascontiguousarray(features).tobytes())


def read_features_binary(path):
    data = Path(path).read_bytes()
    header = 4 + struct.calcsize("<BII")
    if len(data) < header or data[:4] != _FV_MAGIC:
        raise ContainerError(f"{path}: not an MNFV feature container")
    version, rows, cols = struct.unpack_from("<BII", data, 4)
    if version != _FV_VERSION:
        raise ContainerError(f"{path}: unsupported MNFV version {version}")
    if len(data) - header != rows * cols * 4:
        raise ContainerError(f"{path}: payload holds {len(data) - header} bytes, expected {rows * cols * 4}")
    return np.frombuffer(data, dtype="<f4", offset=header).reshape(rows, cols).copy()


def with_threshold(config, t):
    return replace(config, threshold=float(t))
