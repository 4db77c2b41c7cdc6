"""Moment families, order enumeration, sampled filter banks and projection."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from . import polynomials as poly
from .errors import CapacityError, IndexDomainError, ParameterError, ShapeError

__all__ = [
    "FAMILIES",
    "CARTESIAN",
    "DISCRETE",
    "CIRCULAR",
    "MomentFamily",
    "OrderIndex",
    "KernelBank",
    "enumerate_orders",
    "build_kernel_bank",
    "moment_project",
    "project_patches",
    "reconstruct",
    "export_bank_text",
]

CONTINUOUS_CARTESIAN = ("Geometric", "Legendre")
DISCRETE = ("Tchebichef", "Krawtchouk", "DualHahn")
CARTESIAN = CONTINUOUS_CARTESIAN + DISCRETE
CIRCULAR = ("Zernike", "PCET", "PCT", "PST", "GPCET", "GPCT", "GPST")
FAMILIES = CARTESIAN + CIRCULAR
PCA = "PCA"

_ALIASES = {name.lower(): name for name in FAMILIES + (PCA,)}
_ALIASES.update({"dual_hahn": "DualHahn", "dual-hahn": "DualHahn", "geometry": "Geometric"})


@dataclass(frozen=True)
class MomentFamily:
    """A kernel family tag plus the parameters that family uses.

    Only the fields relevant to ``tag`` are validated: ``p1``/``p2`` for
    Krawtchouk, ``a``/``c`` for dual Hahn (``b`` follows from the patch size
    as ``a + N``), ``s`` for the generic polar harmonic transforms.
    Circular families use repetitions m >= 0 unless ``signed_m`` is set;
    under the modulus, Zernike orders (n, -m) and (n, m) give equal values.
    """

    tag: str
    p1: float = 0.5
    p2: float = 0.5
    a: float = 0.0
    c: float = 0.0
    s: float = 2.0
    signed_m: bool = False

    def __post_init__(self):
        canonical = _ALIASES.get(str(self.tag).lower())
        if canonical is None:
            raise ParameterError(f"unknown moment family {self.tag!r}")
        object.__setattr__(self, "tag", canonical)
        if canonical == "Krawtchouk":
            for name in ("p1", "p2"):
                value = getattr(self, name)
                if not 0.0 < value < 1.0:
                    raise ParameterError(f"Krawtchouk {name} must lie in (0, 1), got {value}")
        elif canonical == "DualHahn":
            if not self.a > -0.5:
                raise ParameterError(f"dual Hahn requires a > -1/2, got a={self.a}")
            if not self.c < 1 + self.a:
                raise ParameterError(f"dual Hahn requires c < 1 + a, got a={self.a}, c={self.c}")
        elif canonical in ("GPCET", "GPCT", "GPST"):
            if not self.s > 0:
                raise ParameterError(f"GPHT exponent s must be positive, got {self.s}")

    @property
    def is_circular(self):
        return self.tag in CIRCULAR

    @property
    def is_discrete(self):
        return self.tag in DISCRETE

    @property
    def is_pca(self):
        return self.tag == PCA

    def __str__(self):
        return self.tag


class OrderIndex(NamedTuple):
    n: int
    m: int


def _family(family):
    return family if isinstance(family, MomentFamily) else MomentFamily(family)


def _valid(tag, n, m, signed_m=True):
    if tag in CARTESIAN:
        return n >= 0 and m >= 0
    if m < 0 and not signed_m:
        return False
    if tag == "Zernike":
        return abs(m) <= n and (n - abs(m)) % 2 == 0
    if tag in ("PST", "GPST"):
        return n >= 1
    return n >= 0


def _candidates(family):
    """Yield valid (n, m) in canonical order, lazily and without end."""
    tag, signed = family.tag, family.signed_m
    for total in itertools.count():
        if tag in CARTESIAN:
            for n in range(total + 1):
                yield OrderIndex(n, total - n)
        elif tag == "Zernike":
            # ranked by radial degree n: V_nm is a degree-n polynomial in (x, y)
            for m in range(-total, total + 1):
                if _valid(tag, total, m, signed):
                    yield OrderIndex(total, m)
        else:
            for n in range(total + 1):
                rest = total - n
                for m in sorted({-rest, rest}):
                    if _valid(tag, n, m, signed):
                        yield OrderIndex(n, m)


def enumerate_orders(family, L, *, max_n=None, max_m=None):
    """First ``L`` valid order pairs of ``family``, lowest orders first.

    Cartesian and harmonic families rank by n + |m|, Zernike by n; ties go
    to ascending n, then ascending m. ``max_n``/``max_m`` restrict the
    domain (discrete families on a finite lattice) and make the enumeration
    finite; asking for more pairs than exist raises ``CapacityError``.
    """
    family = _family(family)
    tag = family.tag
    if tag == PCA:
        raise ParameterError("PCA banks have no analytic order enumeration")
    if L < 1:
        raise ValueError(f"L must be positive, got {L}")
    bounded = max_n is not None or max_m is not None
    out = []
    if bounded:
        if max_n is None or max_m is None:
            raise ValueError("max_n and max_m must be given together")
        capacity = (max_n + 1) * (max_m + 1)
        if tag not in CARTESIAN:
            raise ValueError("order bounds only apply to Cartesian families")
        if L > capacity:
            raise CapacityError(
                f"{tag} supports at most {capacity} orders with n <= {max_n}, m <= {max_m}; requested {L}"
            )
    for order in _candidates(family):
        if bounded and (order.n > max_n or order.m > max_m):
            continue
        out.append(order)
        if len(out) == L:
            break
    return out


@dataclass(frozen=True, eq=False)
class KernelBank:
    """An immutable ordered list of sampled filters.

    ``filters`` has shape (L, k1, k2) and is complex; the quadrature weight
    (cell area) is already folded into the values, so projecting a patch is
    a plain inner product.
    """

    family: MomentFamily
    k1: int
    k2: int
    filters: np.ndarray
    orders: tuple
    cell_area: float = 1.0
    eigenvalues: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        filters = np.array(self.filters, dtype=complex)
        if filters.ndim != 3 or filters.shape[1:] != (self.k1, self.k2):
            raise ShapeError(f"filters must have shape (L, {self.k1}, {self.k2}), got {filters.shape}")
        if len(filters) < 1 or len(filters) != len(self.orders):
            raise ShapeError("filters and orders must have equal, positive length")
        if not np.all(np.isfinite(filters)):
            raise ParameterError("kernel bank contains non-finite values")
        filters.setflags(write=False)
        object.__setattr__(self, "filters", filters)
        object.__setattr__(self, "orders", tuple(OrderIndex(*o) for o in self.orders))

    def __len__(self):
        return len(self.filters)

    @property
    def is_complex(self):
        return self.family.is_circular

    @property
    def shape(self):
        return (self.k1, self.k2)


def _midpoints(k):
    return (2 * np.arange(k) + 1 - k) / k


def _cartesian_axis(family, k, order, axis):
    """1-D factor for one axis; ``axis`` 0 = rows (x), 1 = columns (y)."""
    tag = family.tag
    if tag == "Geometric":
        return _midpoints(k) ** order
    if tag == "Legendre":
        return (2 * order + 1) / 2 * poly.legendre_poly(order, _midpoints(k))
    if tag == "Tchebichef":
        return poly.tchebichef_basis(k, k - 1)[order] / poly.tchebichef_norm(order, k)
    if tag == "Krawtchouk":
        p = family.p1 if axis == 0 else family.p2
        return poly.krawtchouk_basis(k, p, k - 1)[order]
    if tag == "DualHahn":
        return poly.dual_hahn_basis(k, family.a, family.c, k - 1)[order]
    raise AssertionError(tag)


def _disk_grid(k1, k2):
    x, y = np.meshgrid(_midpoints(k1), _midpoints(k2), indexing="ij")
    return np.hypot(x, y), np.arctan2(y, x)


def _circular_filter(family, order, r, theta):
    tag, (n, m) = family.tag, order
    if tag == "Zernike":
        radial = (n + 1) / np.pi * poly.zernike_radial(n, abs(m), np.minimum(r, 1.0))
    elif tag in ("PCET", "PCT", "PST"):
        radial = poly.pht_radial(tag, n, np.minimum(r, 1.0))
    else:
        radial = poly.gpht_radial(tag, n, np.minimum(r, 1.0), family.s)
    kernel = np.conj(radial) * np.exp(-1j * m * theta)
    return np.where(r > 1.0, 0j, kernel)


def build_kernel_bank(family, k1, k2, L):
    """Sample the first ``L`` kernels of ``family`` on a k1 x k2 patch grid.

    Continuous families sample cell midpoints of [-1, 1]^2 (circular ones
    zero everything outside the inscribed unit disk) and fold in the cell
    area (2/k1)(2/k2). Discrete families live on the integer lattice with
    N = k1 rows and M = k2 columns and use a plain lattice sum.
    """
    family = _family(family)
    if family.is_pca:
        raise ParameterError("PCA banks are learned; use baseline_pca.learn_pca_filters")
    if k1 < 2 or k2 < 2:
        raise ShapeError(f"patch size must be at least 2x2, got {k1}x{k2}")
    if family.is_discrete:
        orders = enumerate_orders(family, L, max_n=k1 - 1, max_m=k2 - 1)
    else:
        orders = enumerate_orders(family, L)
    return bank_from_orders(family, k1, k2, orders)


def project_patches(patches, bank, mode="modulus"):
    """Project a stack of patches (..., k1, k2) onto every filter of ``bank``.

    Returns shape (..., L). Complex families yield the modulus of the moment
    (``mode="modulus"``) or its real part (``mode="real"``); real families
    yield the signed real value.
    """
    patches = np.asarray(patches, dtype=float)
    if patches.shape[-2:] != bank.shape:
        raise ShapeError(f"patch shape {patches.shape[-2:]} does not match bank {bank.shape}")
    lead = patches.shape[:-2]
    flat = patches.reshape(-1, bank.k1 * bank.k2)
    weights = bank.filters.reshape(len(bank), -1)
    real = flat @ weights.real.T
    if not bank.is_complex:
        return real.reshape(*lead, len(bank))
    if mode == "real":
        return real.reshape(*lead, len(bank))
    if mode != "modulus":
        raise ValueError(f"unknown complex mode {mode!r}")
    imag = flat @ weights.imag.T
    return np.hypot(real, imag).reshape(*lead, len(bank))


def moment_project(patch, bank, mode="modulus"):
    """Moments of a single k1 x k2 patch, one per filter of ``bank``."""
    patch = np.asarray(patch, dtype=float)
    if patch.shape != bank.shape:
        raise ShapeError(f"patch shape {patch.shape} does not match bank {bank.shape}")
    return project_patches(patch, bank, mode)


def raw_moments(patch, bank):
    """Complex moments (no modulus), used for reconstruction."""
    patch = np.asarray(patch, dtype=float)
    if patch.shape != bank.shape:
        raise ShapeError(f"patch shape {patch.shape} does not match bank {bank.shape}")
    return bank.filters.reshape(len(bank), -1) @ patch.ravel()


def reconstruct(moments, bank):
    """Invert a moment vector on an orthogonal filter set.

    f = sum_j mu_j phi_j / ||phi_j||^2, exact when the filters are mutually
    orthogonal and complete (discrete families at L = k1 k2, PCA banks).
    """
    if not (bank.family.is_discrete or bank.family.is_pca):
        raise ParameterError(f"{bank.family.tag} filters are not lattice-orthogonal")
    moments = np.asarray(moments)
    if moments.shape != (len(bank),):
        raise ShapeError(f"expected {len(bank)} moments, got shape {moments.shape}")
    flat = bank.filters.reshape(len(bank), -1)
    norms = np.sum(np.abs(flat) ** 2, axis=1)
    out = (moments / norms) @ np.conj(flat)
    return out.real.reshape(bank.shape)


def export_bank_text(bank, directory):
    """Write each filter as a space-separated text matrix, one row per line.

    Complex banks get a ``_real`` and an ``_imag`` file per filter.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for j, (grid, order) in enumerate(zip(bank.filters, bank.orders)):
        stem = f"{bank.family.tag.lower()}_{j:03d}_n{order.n}_m{order.m}"
        parts = [("_real", grid.real), ("_imag", grid.imag)] if bank.is_complex else [("", grid.real)]
        for suffix, values in parts:
            path = directory / f"{stem}{suffix}.txt"
            np.savetxt(path, values, fmt="%.17g", delimiter=" ")
            written.append(path)
    return written


def descriptor_orders(family, max_total):
    """Non-negative-m orders up to ``max_total``, for whole-image descriptors."""
    family = _family(family)
    tag = family.tag
    out = []
    for order in _candidates(family):
        total = order.n if tag == "Zernike" else order.n + abs(order.m)
        if total > max_total:
            break
        if order.m >= 0:
            out.append(order)
    return out


def bank_from_orders(family, k1, k2, orders: Sequence[OrderIndex]):
    """Sample an explicit list of orders (used for whole-image descriptors)."""
    family = _family(family)
    for o in orders:
        if not _valid(family.tag, o.n, o.m, family.signed_m):
            raise IndexDomainError(f"invalid {family.tag} order {tuple(o)}")
    if family.is_discrete:
        bad = [o for o in orders if o.n >= k1 or o.m >= k2]
        if bad:
            raise CapacityError(f"{family.tag} orders {bad[:3]} exceed the {k1}x{k2} lattice")
        area = 1.0
    else:
        area = (2.0 / k1) * (2.0 / k2)
    if family.is_circular:
        r, theta = _disk_grid(k1, k2)
        filters = [_circular_filter(family, o, r, theta) * area for o in orders]
    else:
        filters = [
            np.outer(_cartesian_axis(family, k1, o.n, 0), _cartesian_axis(family, k2, o.m, 1)) * area
            for o in orders
        ]
    return KernelBank(family, k1, k2, np.array(filters), tuple(orders), cell_area=area)
