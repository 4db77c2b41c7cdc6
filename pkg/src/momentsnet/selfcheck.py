"""Numerical self-checks of the kernel families, reported as max deviations."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import polynomials as poly
from .kernels import FAMILIES, MomentFamily, build_kernel_bank, project_patches, raw_moments, reconstruct

__all__ = ["CheckResult", "run_selfcheck", "format_report"]

ORTHO_SIZES = (4, 8, 11, 15)


@dataclass
class CheckResult:
    name: str
    deviation: float
    tolerance: float

    @property
    def passed(self):
        return bool(np.isfinite(self.deviation)) and self.deviation <= self.tolerance


def _gram_deviation(basis):
    return float(np.abs(basis @ basis.T - np.eye(len(basis))).max())


def _orthonormality(perturb):
    out = []
    scale = perturb.get("tchebichef_norm", 1.0)
    for N in ORTHO_SIZES:
        norms = np.array([poly.tchebichef_norm(n, N) for n in range(N)]) * scale
        basis = poly.tchebichef_basis(N, N - 1) / np.sqrt(norms)[:, None]
        out.append(CheckResult(f"orthonormality/Tchebichef/N={N}", _gram_deviation(basis), 1e-8))
    for N in ORTHO_SIZES:
        basis = poly.krawtchouk_basis(N, 0.5, N - 1) * perturb.get("krawtchouk_weight", 1.0)
        out.append(CheckResult(f"orthonormality/Krawtchouk/N={N}", _gram_deviation(basis), 1e-8))
    for N in ORTHO_SIZES:
        basis = poly.dual_hahn_basis(N, 0.0, 0.0, N - 1) * perturb.get("dual_hahn_weight", 1.0)
        out.append(CheckResult(f"orthonormality/DualHahn/N={N}", _gram_deviation(basis), 1e-8))
    return out


def _legendre_recurrence():
    x = np.linspace(-1, 1, 20)
    worst = 0.0
    for n in range(1, 12):
        lhs = (n + 1) * poly.legendre_poly(n + 1, x)
        rhs = (2 * n + 1) * x * poly.legendre_poly(n, x) - n * poly.legendre_poly(n - 1, x)
        worst = max(worst, float(np.abs(lhs - rhs).max()))
    return CheckResult("recurrence/Legendre", worst, 1e-10)


def _zernike_identities():
    r = np.linspace(0, 1, 21)
    diag = max(float(np.abs(poly.zernike_radial(n, n, r) - r**n).max()) for n in range(11))
    rim = max(
        abs(float(poly.zernike_radial(n, m, 1.0)) - 1.0)
        for n in range(11)
        for m in range(n % 2, n + 1, 2)
    )
    return [CheckResult("zernike/E_nn(r)=r^n", diag, 1e-9), CheckResult("zernike/E_nm(1)=1", rim, 1e-9)]


def _reconstruction(rng):
    out = []
    patch = rng.random((8, 8))
    for tag in ("Tchebichef", "Krawtchouk"):
        bank = build_kernel_bank(MomentFamily(tag), 8, 8, 64)
        back = reconstruct(raw_moments(patch, bank), bank)
        out.append(CheckResult(f"reconstruction/{tag}/8x8", float(np.abs(back - patch).max()), 1e-6))
    return out


def _projection_oracle(rng):
    """Vectorized projection against an explicit double loop over the same filters."""
    worst = 0.0
    for tag in FAMILIES:
        k = 5
        bank = build_kernel_bank(MomentFamily(tag), k, k, 6)
        patch = rng.standard_normal((k, k))
        fast = project_patches(patch, bank)
        for j, f in enumerate(bank.filters):
            acc = 0j
            for i in range(k):
                for l in range(k):
                    acc += f[i, l] * patch[i, l]
            ref = abs(acc) if bank.is_complex else acc.real
            worst = max(worst, abs(fast[j] - ref))
    return CheckResult("projection/double-loop", worst, 1e-12)


def _rotation(rng):
    k = 11
    bank = build_kernel_bank(MomentFamily("Zernike"), k, k, 10)
    u = (2 * np.arange(k) + 1 - k) / k
    r = np.hypot(*np.meshgrid(u, u, indexing="ij"))
    patch = np.where(r <= 1.0, rng.random((k, k)), 0.0)
    base = project_patches(patch, bank)
    turned = project_patches(np.rot90(patch), bank)
    rel = np.abs(turned - base) / np.maximum(np.abs(base), 1e-12)
    return CheckResult("zernike/rotation-90", float(rel.max()), 0.05)


def run_selfcheck(perturb=None, seed=0):
    """Run every check; ``perturb`` maps a constant name to a multiplier (test hook)."""
    perturb = dict(perturb or {})
    rng = np.random.default_rng(seed)
    results = _orthonormality(perturb)
    results.append(_legendre_recurrence())
    results.extend(_zernike_identities())
    results.extend(_reconstruction(rng))
    results.append(_projection_oracle(rng))
    results.append(_rotation(rng))
    return results


def format_report(results):
    lines = [
        f"{'PASS' if r.passed else 'FAIL'}  {r.name:<36} max_dev={r.deviation:.3e}  tol={r.tolerance:.0e}"
        for r in results
    ]
    worst = max((r.deviation for r in results if r.name.startswith("orthonormality")), default=0.0)
    lines.append(f"max orthonormality deviation: {worst:.3e}")
    failed = sum(not r.passed for r in results)
    lines.append("all checks passed" if not failed else f"{failed} check(s) failed")
    return "\n".join(lines)
