"""Kernels and assembly of the nonlocal stiffness matrix A(s, delta).

On a uniform grid with zero-extended hat functions the double integral

    A_ij = int int_{|x-x'|<delta} (phi_i(x)-phi_i(x'))(phi_j(x)-phi_j(x')) g(|x-x'|) dx' dx

depends only on the offset d = j - i.  Substituting x' = x + h t and doing the
x-integral exactly (the autocorrelation of a hat is the cubic B-spline B3)
leaves the one-dimensional integral

    A_d = 2 h^2 int_0^{delta/h} g(h t) G_d(t) dt,
    G_d(t) = 2 B3(d) - B3(t + d) - B3(t - d),

where G_d is a piecewise cubic with integer breakpoints, O(t^2) at t = 0, and
constant for t > |d| + 2.  The matrix is therefore symmetric Toeplitz.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import integrate
from scipy.linalg import toeplitz
from scipy.special import gammaln

from .fem import Mesh1D, assemble_mass

FRACTIONAL = "fractional_truncated"
CUSTOM = "custom_radial"


@dataclass(frozen=True)
class KernelSpec:
    """Radial kernel g(r) truncated at the interaction radius `delta`.

    For the fractional family g(r) = r^(-1-2s); a custom family supplies
    `radial_profile` (vectorized, nonnegative) and ignores `s`.
    """

    family: str = FRACTIONAL
    s: float = 0.5
    delta: float = 1.0
    radial_profile: Optional[Callable] = None

    def __post_init__(self):
        if self.family not in (FRACTIONAL, CUSTOM):
            raise ValueError(f"unknown kernel family {self.family!r}")
        if self.family == FRACTIONAL and not 0.0 < self.s < 1.0:
            raise ValueError(f"fractional power must lie in (0, 1), got {self.s}")
        if self.family == CUSTOM and self.radial_profile is None:
            raise ValueError("custom_radial kernels need a radial_profile")
        if not self.delta > 0:
            raise ValueError(f"interaction radius must be positive, got {self.delta}")

    def with_delta(self, delta: float) -> "KernelSpec":
        return KernelSpec(self.family, self.s, delta, self.radial_profile)

    def with_s(self, s: float) -> "KernelSpec":
        return KernelSpec(self.family, s, self.delta, self.radial_profile)

    def profile(self, r):
        """Untruncated radial profile."""
        if self.family == FRACTIONAL:
            return np.asarray(r, dtype=float) ** (-1.0 - 2.0 * self.s)
        return np.asarray(self.radial_profile(np.asarray(r, dtype=float)), dtype=float)


@dataclass(frozen=True)
class QuadratureConfig:
    # Gauss points per unit offset interval (integrand smooth there)
    outer_order: int = 12
    # dyadic refinement of [0, h] toward r = 0, custom kernels only
    singular_split_levels: int = 8
    oracle_tol: float = 1e-10

    def __post_init__(self):
        if self.outer_order < 2:
            raise ValueError("outer_order must be >= 2")
        if self.singular_split_levels < 1:
            raise ValueError("singular_split_levels must be >= 1")


def kernel_eval(spec: KernelSpec, r: float) -> float:
    if r < 0:
        raise ValueError("distance must be nonnegative")
    if r == 0:
        raise ValueError("kernel is singular at r = 0; evaluate it only inside integrals")
    if r >= spec.delta:
        return 0.0
    return float(spec.profile(r))


def scaling_constant(n: int, s: float) -> float:
    """c_{n,s} = 2^{2s} s Gamma(s + n/2) / (pi^{n/2} Gamma(1 - s))."""
    if n < 1:
        raise ValueError("dimension must be >= 1")
    if not 0.0 < s < 1.0:
        raise ValueError(f"s must lie in the open interval (0, 1), got {s}")
    logc = 2 * s * math.log(2.0) + math.log(s) + gammaln(s + n / 2) - (n / 2) * math.log(math.pi) - gammaln(1 - s)
    return math.exp(logc)


def unit_sphere_measure(n: int) -> float:
    """Surface measure of the unit sphere in R^n (2 for n = 1)."""
    return math.exp(math.log(2.0) + (n / 2) * math.log(math.pi) - gammaln(n / 2))


def splitting_constant(delta_p: float, n: int, s: float, diam: Optional[float] = None) -> float:
    """Mass coefficient relating the full-space form to the one truncated at delta_p."""
    if diam is not None and delta_p < diam:
        raise ValueError(f"splitting needs delta' >= diam(Omega) = {diam}, got {delta_p}")
    return unit_sphere_measure(n) / (delta_p ** (2 * s) * s)


def snap_delta(mesh: Mesh1D, delta: float) -> float:
    """Nearest positive multiple of h."""
    k = round(delta / mesh.h)
    if k < 1:
        raise ValueError(f"delta={delta} is below the mesh size h={mesh.h}")
    return k * mesh.h


def bspline3(t):
    t = np.abs(np.asarray(t, dtype=float))
    return np.where(t < 1, 2 / 3 - t**2 + t**3 / 2, np.where(t < 2, (2 - t) ** 3 / 6, 0.0))


def offset_profile(d: int, t):
    """G_d(t) = 2 B3(d) - B3(t + d) - B3(t - d)."""
    return 2 * bspline3(d) - bspline3(t + d) - bspline3(t - d)


# G_d(t) = a2 t^2 + a3 t^3 on [0, 1]; zero there for |d| >= 3
_NEAR_COEFFS = {0: (2.0, -1.0), 1: (-1.0, 2.0 / 3.0), 2: (0.0, -1.0 / 6.0)}


def _gauss(lo: np.ndarray, hi: np.ndarray, order: int):
    xg, wg = np.polynomial.legendre.leggauss(order)
    half = 0.5 * (hi - lo)[:, None]
    mid = 0.5 * (hi + lo)[:, None]
    return mid + half * xg, half * wg


def offset_values(mesh: Mesh1D, spec: KernelSpec, n_offsets: int, q: QuadratureConfig = QuadratureConfig()) -> np.ndarray:
    """First column of the Toeplitz stiffness matrix, A_d for d = 0..n_offsets-1."""
    h = mesh.h
    T = spec.delta / h
    out = np.zeros(n_offsets)
    d_max = min(n_offsets - 1, int(math.ceil(T)) + 1)
    frac = spec.family == FRACTIONAL
    s = spec.s

    def weight(t):
        return h * h * spec.profile(h * t)

    # [0, min(1, T)]: the weakly singular part
    tau = min(1.0, T)
    for d in range(min(d_max, 2) + 1):
        a2, a3 = _NEAR_COEFFS[d]
        if frac:
            val = h ** (1 - 2 * s) * (a2 * tau ** (2 - 2 * s) / (2 - 2 * s) + a3 * tau ** (3 - 2 * s) / (3 - 2 * s))
        else:
            L = q.singular_split_levels
            edges = tau * 2.0 ** -np.arange(L + 1)
            lo = np.concatenate((edges[1:], [0.0]))
            hi = np.concatenate((edges[:-1], [edges[-1]]))
            x, w = _gauss(lo, hi, q.outer_order)
            val = np.sum(w * weight(x) * (a2 * x**2 + a3 * x**3))
        out[d] += 2 * val

    # unit intervals where G_d is a nonconstant cubic
    ds, lo, hi = [], [], []
    for d in range(d_max + 1):
        for k in range(max(1, d - 2), d + 2):
            if k >= T:
                break
            ds.append(d)
            lo.append(float(k))
            hi.append(min(k + 1.0, T))
    if ds:
        ds = np.array(ds)
        x, w = _gauss(np.array(lo), np.array(hi), q.outer_order)
        G = 2 * bspline3(ds)[:, None] - bspline3(x + ds[:, None]) - bspline3(x - ds[:, None])
        np.add.at(out, ds, 2 * np.sum(w * weight(x) * G, axis=1))

    # tail where G_d = 2 B3(d) is constant (only d = 0, 1 are nonzero)
    for d in range(min(d_max, 1) + 1):
        t0 = d + 2.0
        if T <= t0:
            continue
        if frac:
            if math.isinf(T):
                mass = h ** (1 - 2 * s) * t0 ** (-2 * s) / (2 * s)
            else:
                mass = h ** (1 - 2 * s) * (t0 ** (-2 * s) - T ** (-2 * s)) / (2 * s)
        else:
            if math.isinf(T):
                raise ValueError("custom kernels need a finite interaction radius")
            edges = np.arange(t0, T, 1.0)
            x, w = _gauss(edges, np.minimum(edges + 1.0, T), q.outer_order)
            mass = np.sum(w * weight(x))
        out[d] += 2 * 2 * bspline3(d) * mass
    return out


def assemble_nonlocal(mesh: Mesh1D, spec: KernelSpec, q: QuadratureConfig = QuadratureConfig(), snap: bool = False) -> np.ndarray:
    """Stiffness matrix of the truncated kernel on the interior dofs.

    The truncation is integrated exactly for any delta, so snapping to a
    multiple of h is optional.
    """
    if math.isinf(spec.delta):
        raise ValueError("delta = inf is defined through the splitting; use assemble_fractional_laplace")
    if snap:
        spec = spec.with_delta(snap_delta(mesh, spec.delta))
    col = offset_values(mesh, spec, mesh.n_dofs, q)
    return toeplitz(col)


def assemble_fractional_laplace(mesh: Mesh1D, s: float, delta_p: Optional[float] = None,
                                q: QuadratureConfig = QuadratureConfig(), mass: Optional[np.ndarray] = None) -> np.ndarray:
    """A(inf, s) = A(delta', s) + C(delta', 1, s) M for any delta' >= diam(Omega)."""
    delta_p = mesh.diam if delta_p is None else delta_p
    C = splitting_constant(delta_p, 1, s, diam=mesh.diam)
    M = assemble_mass(mesh) if mass is None else mass
    return assemble_nonlocal(mesh, KernelSpec(FRACTIONAL, s, delta_p), q) + C * M


def _hat(mesh: Mesh1D, i: int, x):
    xi = mesh.dof_coords[i]
    return np.maximum(0.0, 1.0 - np.abs(x - xi) / mesh.h)


def oracle_entry(mesh: Mesh1D, spec: KernelSpec, i: int, j: int, tol: Optional[float] = None) -> float:
    """Reference value of A_ij by adaptive quadrature, independent of the B-spline route.

    The x-integral at fixed offset z is piecewise quadratic and done by Gauss
    on its pieces; the z-integral uses adaptive Gauss-Kronrod on each mesh
    cell, which copes with the integrable |z|^(1-2s) behaviour at z = 0.
    """
    tol = QuadratureConfig().oracle_tol if tol is None else tol
    h = mesh.h
    if math.isinf(spec.delta):
        raise ValueError("oracle needs a finite interaction radius")
    if abs(i - j) * h > spec.delta + 2 * h:
        return 0.0
    xi, xj = mesh.dof_coords[i], mesh.dof_coords[j]
    base = np.array([xi - h, xi, xi + h, xj - h, xj, xj + h])
    xg, wg = np.polynomial.legendre.leggauss(3)

    def g(z):
        bp = np.unique(np.concatenate((base, base - z)))
        lo, hi = bp[:-1], bp[1:]
        x = 0.5 * (hi - lo)[:, None] * xg + 0.5 * (hi + lo)[:, None]
        w = 0.5 * (hi - lo)[:, None] * wg
        f = (_hat(mesh, i, x) - _hat(mesh, i, x + z)) * (_hat(mesh, j, x) - _hat(mesh, j, x + z))
        return float(np.sum(w * f))

    def integrand(z):
        return float(spec.profile(z)) * g(z)

    cuts = list(np.arange(0.0, spec.delta, h)) + [spec.delta]
    total = 0.0
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        if hi <= lo:
            continue
        val, err = integrate.quad(integrand, lo, hi, epsabs=1e-300, epsrel=tol, limit=200)
        if err > max(100 * tol * abs(val), 1e-14 * h):
            raise RuntimeError(f"oracle quadrature did not converge on [{lo}, {hi}]: err={err:.3e}")
        total += val
    return 2.0 * total
