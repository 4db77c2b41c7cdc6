"""One-dimensional and radial basis functions of the twelve moment families.

Hypergeometric sums (Tchebichef, Krawtchouk, dual Hahn) are evaluated in
exact rational arithmetic: every float parameter is converted losslessly to
a ``Fraction``, the terminating series is summed exactly, and only the final
value is rounded. Gamma-function ratios are evaluated through ``lgamma``
with explicit sign tracking.
"""
from __future__ import annotations

import math
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .errors import IndexDomainError, ParameterError

__all__ = [
    "zernike_radial",
    "legendre_poly",
    "tchebichef_poly",
    "tchebichef_norm",
    "tchebichef_basis",
    "krawtchouk_weighted",
    "krawtchouk_basis",
    "dual_hahn_weighted",
    "dual_hahn_basis",
    "pht_radial",
    "gpht_radial",
]


def _pochhammer(a, k):
    out = Fraction(1)
    for i in range(k):
        out *= a + i
    return out


def _hyper(upper, lower, z, terms):
    """Exact terminating pFq sum over k = 0..terms."""
    total = Fraction(0)
    term = Fraction(1)
    for k in range(terms + 1):
        if k:
            num = Fraction(1)
            for u in upper:
                num *= u + k - 1
            den = Fraction(k)
            for v in lower:
                den *= v + k - 1
            if den == 0:
                raise ParameterError(f"hypergeometric denominator vanishes at k={k}")
            term = term * num * z / den
        total += term
    return total


def _signed_lgamma(x):
    """Return (log|Gamma(x)|, sign); raise at poles."""
    if x <= 0 and float(x).is_integer():
        raise ParameterError(f"gamma-function pole at argument {x}")
    value = math.lgamma(x)
    if x > 0:
        return value, 1
    # Gamma alternates sign between consecutive negative integers
    return value, (-1) ** int(math.ceil(-x))


# -- Zernike -----------------------------------------------------------------

@lru_cache(maxsize=None)
def _zernike_coeffs(n, m_abs):
    coeffs = []
    for k in range((n - m_abs) // 2 + 1):
        c = (-1) ** k * math.factorial(n - k) // (
            math.factorial(k)
            * math.factorial((n - 2 * k + m_abs) // 2)
            * math.factorial((n - 2 * k - m_abs) // 2)
        )
        coeffs.append((n - 2 * k, c))
    return tuple(coeffs)


def zernike_radial(n, m_abs, r):
    """Zernike radial polynomial E_{n|m|}(r) by its explicit factorial sum.

    Accepts a scalar or an array of radii in [0, 1].
    """
    if n < 0 or m_abs < 0 or m_abs > n or (n - m_abs) % 2:
        raise IndexDomainError(f"invalid Zernike order (n={n}, |m|={m_abs})")
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    for power, c in _zernike_coeffs(n, m_abs):
        out = out + float(c) * r**power
    return out if out.ndim else float(out)


# -- Legendre ----------------------------------------------------------------

@lru_cache(maxsize=None)
def _legendre_coeffs(n):
    coeffs = []
    for k in range(n // 2 + 1):
        c = Fraction(
            (-1) ** k * math.factorial(2 * n - 2 * k),
            math.factorial(k) * math.factorial(n - k) * math.factorial(n - 2 * k) * 2**n,
        )
        coeffs.append((n - 2 * k, float(c)))
    return tuple(coeffs)


def legendre_poly(n, x):
    if n < 0:
        raise IndexDomainError(f"Legendre order must be non-negative, got {n}")
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for power, c in _legendre_coeffs(n):
        out = out + c * x**power
    return out if out.ndim else float(out)


# -- Tchebichef --------------------------------------------------------------

def _tchebichef_exact(n, x, N):
    total = 0
    for k in range(n + 1):
        total += (-1) ** (n - k) * math.comb(N - 1 - k, n - k) * math.comb(n + k, n) * math.comb(x, k)
    return math.factorial(n) * total


def tchebichef_poly(n, x, N):
    """Discrete Tchebichef polynomial t_n(x) on the lattice 0..N-1."""
    if not 0 <= n <= N - 1:
        raise IndexDomainError(f"Tchebichef order n={n} outside [0, {N - 1}]")
    if not 0 <= x <= N - 1:
        raise IndexDomainError(f"Tchebichef point x={x} outside [0, {N - 1}]")
    return float(_tchebichef_exact(int(n), int(x), int(N)))


def tchebichef_norm(n, N):
    """Squared norm rho(n, N) = N (N^2-1)(N^2-4)...(N^2-n^2) / (2n+1)."""
    if not 0 <= n <= N - 1:
        raise IndexDomainError(f"Tchebichef order n={n} outside [0, {N - 1}]")
    prod = N
    for j in range(1, n + 1):
        prod *= N * N - j * j
    return float(Fraction(prod, 2 * n + 1))


@lru_cache(maxsize=None)
def _tchebichef_table(N, nmax):
    table = np.array(
        [[float(_tchebichef_exact(n, x, N)) for x in range(N)] for n in range(nmax + 1)]
    )
    table.setflags(write=False)
    return table


def tchebichef_basis(N, nmax, normalized=False):
    """Rows t_0..t_nmax sampled on 0..N-1, optionally divided by sqrt(rho)."""
    if nmax > N - 1:
        raise IndexDomainError(f"Tchebichef order {nmax} needs at least {nmax + 1} points")
    table = _tchebichef_table(N, nmax)
    if normalized:
        norms = np.array([tchebichef_norm(n, N) for n in range(nmax + 1)])
        return table / np.sqrt(norms)[:, None]
    return table.copy()


# -- Krawtchouk --------------------------------------------------------------

def _check_p(p):
    if not 0.0 < p < 1.0:
        raise ParameterError(f"Krawtchouk p must lie strictly inside (0, 1), got {p}")


def _krawtchouk_exact(n, x, p, N):
    pf = Fraction(p)
    k_nx = _hyper([Fraction(-n), Fraction(-x)], [Fraction(-N)], 1 / pf, min(n, x))
    weight = math.comb(N, x) * pf**x * (1 - pf) ** (N - x)
    rho = ((pf - 1) / pf) ** n * math.factorial(n) / _pochhammer(Fraction(-N), n)
    return float(k_nx) * math.sqrt(weight / rho)


def krawtchouk_weighted(n, x, p, N):
    """Weighted Krawtchouk polynomial on the lattice 0..N (orthonormal in n)."""
    _check_p(p)
    if not (0 <= n <= N and 0 <= x <= N):
        raise IndexDomainError(f"Krawtchouk (n={n}, x={x}) outside [0, {N}]")
    return _krawtchouk_exact(int(n), int(x), float(p), int(N))


@lru_cache(maxsize=None)
def _krawtchouk_table(N, p, nmax):
    table = np.array([[_krawtchouk_exact(n, x, p, N) for x in range(N + 1)] for n in range(nmax + 1)])
    table.setflags(write=False)
    return table


def krawtchouk_basis(points, p, nmax):
    """Rows Kbar_0..Kbar_nmax over ``points`` lattice sites (parameter N = points - 1)."""
    _check_p(p)
    if nmax > points - 1:
        raise IndexDomainError(f"Krawtchouk order {nmax} needs at least {nmax + 1} points")
    return _krawtchouk_table(points - 1, float(p), nmax).copy()


# -- dual Hahn ---------------------------------------------------------------

def _check_dual_hahn(a, b, c):
    if not -0.5 < a < b:
        raise ParameterError(f"dual Hahn requires -1/2 < a < b, got a={a}, b={b}")
    if not c < 1 + a:
        raise ParameterError(f"dual Hahn requires c < 1 + a, got a={a}, c={c}")
    N = b - a
    if not float(N).is_integer() or N < 1:
        raise ParameterError(f"dual Hahn requires b - a to be a positive integer, got {N}")
    return int(N)


def _log_rho(x, a, b, c):
    terms = [(a + x + 1, 1), (c + x + 1, 1), (x - a + 1, -1), (b - x, -1), (b + x + 1, -1), (x - c + 1, -1)]
    log, sign = 0.0, 1
    for arg, power in terms:
        try:
            lg, sg = _signed_lgamma(arg)
        except ParameterError as exc:
            raise ParameterError(f"dual Hahn weight rho(x={x}): {exc}") from None
        log += power * lg
        sign *= sg
    return log, sign


def _log_dn2(n, a, b, c):
    log, sign = 0.0, 1
    for arg, power in [(a + c + n + 1, 1), (n + 1, -1), (b - a - n, -1), (b - c - n, -1)]:
        try:
            lg, sg = _signed_lgamma(arg)
        except ParameterError as exc:
            raise ParameterError(f"dual Hahn norm d_n^2 (n={n}): {exc}") from None
        log += power * lg
        sign *= sg
    return log, sign


def _dual_hahn_exact(n, x, a, b, c):
    fa, fb, fc, fx = Fraction(a), Fraction(b), Fraction(c), Fraction(x)
    series = _hyper([Fraction(-n), fa - fx, fa + fx + 1], [fa - fb + 1, fa + fc + 1], Fraction(1), n)
    w = _pochhammer(fa - fb + 1, n) * _pochhammer(fa + fc + 1, n) / math.factorial(n) * series
    log_rho, s_rho = _log_rho(x, a, b, c)
    log_d, s_d = _log_dn2(n, a, b, c)
    if s_rho * s_d < 0:
        raise ParameterError(f"dual Hahn weight ratio negative at n={n}, x={x}")
    # lattice x(s) = s(s+1): Delta x(s - 1/2) = 2s + 1
    lattice = 2 * x + 1
    return float(w) * math.sqrt(math.exp(log_rho - log_d) * lattice)


def dual_hahn_weighted(n, x, a, b, c):
    """Weighted dual Hahn polynomial on the lattice x = a..b-1 (orthonormal in n)."""
    N = _check_dual_hahn(a, b, c)
    if not 0 <= n <= N - 1:
        raise IndexDomainError(f"dual Hahn order n={n} outside [0, {N - 1}]")
    if not (a <= x <= b - 1 and float(x - a).is_integer()):
        raise IndexDomainError(f"dual Hahn point x={x} not on lattice {a}..{b - 1}")
    return _dual_hahn_exact(int(n), x, a, b, c)


@lru_cache(maxsize=None)
def _dual_hahn_table(a, c, N, nmax):
    b = a + N
    table = np.array(
        [[_dual_hahn_exact(n, a + i, a, b, c) for i in range(N)] for n in range(nmax + 1)]
    )
    table.setflags(write=False)
    return table


def dual_hahn_basis(points, a, c, nmax):
    """Rows w_0..w_nmax over x = a..a+points-1, with b = a + points."""
    _check_dual_hahn(a, a + points, c)
    if nmax > points - 1:
        raise IndexDomainError(f"dual Hahn order {nmax} needs at least {nmax + 1} points")
    return _dual_hahn_table(float(a), float(c), int(points), nmax).copy()


# -- polar harmonic transforms -------------------------------------------------

_PHT = {"PCET", "PCT", "PST"}
_GPHT = {"GPCET", "GPCT", "GPST"}


def _harmonic(kind, n, r_pow):
    if kind == "exp":
        return np.exp(2j * np.pi * n * r_pow)
    if kind == "cos":
        return np.ones_like(r_pow, dtype=complex) if n == 0 else np.sqrt(2) * np.cos(np.pi * n * r_pow) + 0j
    return np.sin(np.pi * n * r_pow) + 0j


def pht_radial(variant, n, r):
    """Radial factor of PCET / PCT / PST at radius r (scalar or array)."""
    if variant not in _PHT:
        raise ValueError(f"unknown PHT variant {variant!r}")
    if n < 0 or (variant == "PST" and n < 1):
        raise IndexDomainError(f"{variant} radial order n={n} out of domain")
    r = np.asarray(r, dtype=float)
    kind = {"PCET": "exp", "PCT": "cos", "PST": "sin"}[variant]
    out = _harmonic(kind, n, r * r)
    return out if out.ndim else complex(out)


def gpht_radial(variant, n, r, s):
    """Radial factor of GPCET / GPCT / GPST with the weight sqrt(s r^(s-2) / 2pi).

    At r = 0 with s < 2 the weight diverges; the value there is defined as 0.
    """
    if variant not in _GPHT:
        raise ValueError(f"unknown GPHT variant {variant!r}")
    if not s > 0:
        raise ParameterError(f"GPHT exponent s must be positive, got {s}")
    if n < 0 or (variant == "GPST" and n < 1):
        raise IndexDomainError(f"{variant} radial order n={n} out of domain")
    r = np.asarray(r, dtype=float)
    singular = r == 0 if s < 2 else np.zeros(r.shape, dtype=bool)
    safe_r = np.where(singular, 1.0, r)
    weight = np.sqrt(s * safe_r ** (s - 2) / (2 * np.pi))
    kind = {"GPCET": "exp", "GPCT": "cos", "GPST": "sin"}[variant]
    out = weight * _harmonic(kind, n, safe_r**s)
    if variant == "GPST":
        out = out * np.sqrt(2)
    out = np.where(singular, 0j, out)
    return out if out.ndim else complex(out)
