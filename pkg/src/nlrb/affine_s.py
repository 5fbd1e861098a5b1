"""Affine-in-s surrogate: Chebyshev interpolation of A(s) plus a regularization.

Lagrange coefficients can be negative, so the interpolated form is made
coercive by adding rho times the fractional Gram matrix at s_hat.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .affine_delta import combine
from .assembly import KernelSpec, QuadratureConfig, assemble_nonlocal, scaling_constant, splitting_constant
from .fem import Mesh1D, assemble_mass


@dataclass(frozen=True)
class SGrid:
    s_min: float
    s_max: float
    M: int
    nodes: np.ndarray

    @property
    def width(self) -> float:
        return self.s_max - self.s_min

    def check(self, s: float):
        if not self.s_min <= s <= self.s_max:
            raise ValueError(f"s={s} outside [{self.s_min}, {self.s_max}]")


def _interval_case(s_min: float, s_max: float) -> Optional[int]:
    w = s_max - s_min
    if s_min <= 0.5 and w < 0.2:
        return 1
    if s_min > 0.5 and w < (2.0 / 3.0) * (1 - s_max):
        return 2
    return None


def chebyshev_nodes(s_min: float, s_max: float, M: int) -> SGrid:
    """Chebyshev extreme points on [s_min, s_max]; M = 0 gives the single node s_min."""
    if not 0 < s_min < s_max < 1:
        raise ValueError(f"need 0 < s_min < s_max < 1, got {s_min}, {s_max}")
    if M < 0:
        raise ValueError("M must be >= 0")
    if _interval_case(s_min, s_max) is None:
        warnings.warn(f"[{s_min}, {s_max}] is too wide for a guaranteed contraction factor < 1", stacklevel=2)
    if M == 0:
        return SGrid(s_min, s_max, 0, np.array([s_min]))
    m = np.arange(M + 1)
    nodes = 0.5 * (s_min + s_max) - 0.5 * (s_max - s_min) * np.cos(m * np.pi / M)
    nodes[0], nodes[-1] = s_min, s_max
    return SGrid(s_min, s_max, M, nodes)


def lagrange_coefficients(s: float, grid: SGrid) -> np.ndarray:
    nodes = grid.nodes
    theta = np.ones(nodes.size)
    for m in range(nodes.size):
        for j in range(nodes.size):
            if j != m:
                theta[m] *= (s - nodes[j]) / (nodes[m] - nodes[j])
    return theta


def compute_shat(s_min: float, s_max: float, eps: float = 0.0):
    """Regularization exponent s_hat = (s1 + s2) / 2 and the pair (s1, s2)."""
    case = _interval_case(s_min, s_max)
    w = s_max - s_min
    if case is None:
        raise ValueError(f"[{s_min}, {s_max}] is too wide: split it into subintervals with "
                         "width < 1/5 (s_min <= 1/2) or < 2/3 (1 - s_max) (s_min > 1/2)")
    if case == 1:
        bound = 0.5 - 2.5 * w
        s1, s2 = s_min, s_min + 0.5 - eps
        s_hat = s_min + 0.25 - eps / 2
    else:
        bound = 1 - s_max - 1.5 * w
        s1, s2 = s_min, 1 - eps
        s_hat = (s_min + 1) / 2 - eps / 2
    if not 0 <= eps < bound:
        raise ValueError(f"eps={eps} outside the admissible range [0, {bound})")
    return s_hat, s1, s2


def eps_hat(s: float, s1: float, s2: float) -> float:
    return s1 + s2 - 2 * s


def compute_sigma(grid: SGrid, s1: float, s2: float) -> float:
    e = eps_hat(grid.s_max, s1, s2)
    if e <= 0:
        raise ValueError(f"eps_hat(s_max) = {e} must be positive")
    sigma = grid.width / (2 * e)
    if sigma >= 1:
        warnings.warn(f"sigma = {sigma:.3g} >= 1: no exponential convergence guarantee", stacklevel=2)
    return sigma


def compute_Cdelta(delta: float, eps_hat_smin: float) -> float:
    if not 0 < delta < math.inf:
        raise ValueError("C(delta) needs a finite positive delta")
    if delta <= 1:
        return 4 / math.e
    return 4 * (1 / math.e + delta ** (eps_hat_smin + 1))


def default_rho(C_delta: float, sigma: float, M: int) -> float:
    if not 0 < sigma < 1:
        raise ValueError(f"sigma = {sigma} >= 1: no safe default for rho, supply it explicitly")
    return 2 * C_delta * sigma ** (M + 1)


def fixed_rho(C_delta: float) -> float:
    """The M-independent choice rho = 2 C(delta)."""
    return 2 * C_delta


def log_sup_bound(alpha: float, k: int, delta: float) -> float:
    """Upper bound of sup_{0 <= xi <= delta} xi^alpha |log xi|^k."""
    return (k / (math.e * alpha)) ** k + delta**alpha * max(math.log(delta), 0.0) ** k


def derivative_bound_constant(k: int, eps_hat: float, delta: float) -> float:
    """Bound on the k-th s-derivative of the form, 2^k (log_sup_bound)."""
    return 2**k * log_sup_bound(eps_hat, k, delta)


def rhs_scale(F_vec: np.ndarray, s: float) -> np.ndarray:
    return (2.0 / scaling_constant(1, s)) * np.asarray(F_vec, dtype=float)


@dataclass(frozen=True)
class RegularizationSpec:
    s_hat: float
    s1: float
    s2: float
    rho: float
    sigma: float
    C_delta: float
    M: int

    def __post_init__(self):
        if not self.rho > self.C_delta * self.sigma ** (self.M + 1):
            raise ValueError(f"rho = {self.rho:.3e} must exceed C(delta) sigma^(M+1) = "
                             f"{self.C_delta * self.sigma ** (self.M + 1):.3e} for coercivity")

    @property
    def interp_bound(self) -> float:
        return self.C_delta * self.sigma ** (self.M + 1)

    def eps_hat(self, s: float) -> float:
        return eps_hat(s, self.s1, self.s2)


def make_regularization(grid: SGrid, delta: float, eps: float = 0.0, rho: Optional[float] = None,
                        delta_p: Optional[float] = None) -> RegularizationSpec:
    s_hat, s1, s2 = compute_shat(grid.s_min, grid.s_max, eps)
    sigma = compute_sigma(grid, s1, s2)
    d = delta if math.isfinite(delta) else delta_p
    C = compute_Cdelta(d, eps_hat(grid.s_min, s1, s2))
    if rho is None:
        rho = default_rho(C, sigma, grid.M)
    return RegularizationSpec(s_hat, s1, s2, rho, sigma, C, grid.M)


@dataclass
class AffineDecompositionS:
    """Anchors A(s_m) at a fixed delta.

    For delta = inf the anchors are truncated at delta_p and the splitting
    mass term is interpolated with the same Lagrange coefficients.
    """

    grid: SGrid
    matrices: list
    mass: np.ndarray
    reg_gram: np.ndarray
    reg: RegularizationSpec
    delta: float
    delta_p: Optional[float] = None

    def __post_init__(self):
        if len(self.matrices) != self.grid.nodes.size:
            raise ValueError("need one anchor matrix per Chebyshev node")
        shapes = {A.shape for A in self.matrices} | {self.mass.shape, self.reg_gram.shape}
        if len(shapes) != 1:
            raise ValueError(f"matrix dimensions disagree: {shapes}")

    @property
    def full_space(self) -> bool:
        return math.isinf(self.delta)

    def split_coefficient(self, theta: np.ndarray) -> float:
        return float(sum(t * splitting_constant(self.delta_p, 1, sm) for t, sm in zip(theta, self.grid.nodes)))

    def matrix(self, s: float, rho: Optional[float] = None) -> np.ndarray:
        rho = self.reg.rho if rho is None else rho
        theta = lagrange_coefficients(s, self.grid)
        A = combine(theta, self.matrices)
        if self.full_space:
            A = A + self.split_coefficient(theta) * self.mass
        if rho != 0.0:
            A = A + rho * self.reg_gram
        return A


def fractional_gram(mesh: Mesh1D, s: float, delta: float, delta_p: Optional[float] = None,
                    q: QuadratureConfig = QuadratureConfig(), mass: Optional[np.ndarray] = None) -> np.ndarray:
    """A(s, delta); delta = inf goes through the splitting at delta_p."""
    if math.isinf(delta):
        delta_p = mesh.diam if delta_p is None else delta_p
        M = assemble_mass(mesh) if mass is None else mass
        return assemble_nonlocal(mesh, KernelSpec(s=s, delta=delta_p), q) + splitting_constant(delta_p, 1, s, mesh.diam) * M
    return assemble_nonlocal(mesh, KernelSpec(s=s, delta=delta), q)


def build_affine_s(mesh: Mesh1D, grid: SGrid, delta: float, eps: float = 0.0, rho: Optional[float] = None,
                   delta_p: Optional[float] = None, q: QuadratureConfig = QuadratureConfig()) -> AffineDecompositionS:
    if math.isinf(delta):
        delta_p = mesh.diam if delta_p is None else delta_p
    reg = make_regularization(grid, delta, eps, rho, delta_p)
    M = assemble_mass(mesh)
    trunc = delta_p if math.isinf(delta) else delta
    mats = [assemble_nonlocal(mesh, KernelSpec(s=sm, delta=trunc), q) for sm in grid.nodes]
    G = fractional_gram(mesh, reg.s_hat, delta, delta_p, q, M)
    return AffineDecompositionS(grid, mats, M, G, reg, delta, delta_p)


def regularized_matrix_eval(dec: AffineDecompositionS, s: float, rho: Optional[float] = None) -> np.ndarray:
    return dec.matrix(s, rho)
