"""Affine-in-delta surrogates of the bilinear form.

The kernel at an arbitrary radius is replaced by a combination of kernels at
anchor radii delta_0 < ... < delta_K, either piecewise constant (case 1,
chosen by kernel mass) or piecewise linear (case 2, hat functions).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import integrate, linalg

from .assembly import FRACTIONAL, KernelSpec, QuadratureConfig, assemble_nonlocal, snap_delta, unit_sphere_measure
from .fem import Mesh1D, assemble_h1_gram, assemble_mass

CASE1 = "case1"
CASE2 = "case2"


@dataclass(frozen=True)
class DeltaPartition:
    anchors: np.ndarray
    kind: str = "uniform"

    def __post_init__(self):
        a = np.asarray(self.anchors, dtype=float)
        if a.ndim != 1 or a.size < 2:
            raise ValueError("a partition needs at least two anchors")
        if np.any(np.diff(a) <= 0):
            raise ValueError("anchors must be strictly increasing")
        object.__setattr__(self, "anchors", a)

    @property
    def K(self) -> int:
        return self.anchors.size - 1

    @property
    def delta_min(self) -> float:
        return float(self.anchors[0])

    @property
    def delta_max(self) -> float:
        return float(self.anchors[-1])

    @property
    def step(self) -> float:
        return float(np.max(np.diff(self.anchors)))

    def bracket(self, delta: float) -> int:
        """Index k of the subinterval (delta_{k-1}, delta_k] holding delta (1 for delta_min)."""
        self.check(delta)
        k = int(np.searchsorted(self.anchors, delta, side="left"))
        return max(k, 1)

    def local_step(self, delta: float) -> float:
        k = self.bracket(delta)
        return float(self.anchors[k] - self.anchors[k - 1])

    def check(self, delta: float):
        if not self.anchors[0] <= delta <= self.anchors[-1]:
            raise ValueError(f"delta={delta} outside [{self.anchors[0]}, {self.anchors[-1]}]")

    def snapped(self, mesh: Mesh1D) -> "DeltaPartition":
        snapped = np.unique([snap_delta(mesh, d) for d in self.anchors])
        return DeltaPartition(snapped, self.kind)


def make_partition(delta_min: float, delta_max: float, K: int, kind: str = "uniform") -> DeltaPartition:
    if K < 1:
        raise ValueError("K must be >= 1")
    if not 0 < delta_min < delta_max:
        raise ValueError(f"need 0 < delta_min < delta_max, got {delta_min}, {delta_max}")
    k = np.arange(K + 1)
    if kind == "uniform":
        anchors = delta_min + k * (delta_max - delta_min) / K
    elif kind == "graded":
        anchors = delta_min * (delta_max / delta_min) ** (k / K)
    else:
        raise ValueError(f"unknown partition kind {kind!r}")
    anchors[0], anchors[-1] = delta_min, delta_max
    return DeltaPartition(anchors, kind)


def _kernel_mass(lo: float, hi: float, s: Optional[float], spec: Optional[KernelSpec]) -> float:
    """int_lo^hi g(r) dr for the 1D radial profile."""
    if spec is None or spec.family == FRACTIONAL:
        s = spec.s if s is None else s
        return (lo ** (-2 * s) - hi ** (-2 * s)) / (2 * s)
    return integrate.quad(spec.profile, lo, hi, epsrel=1e-12)[0]


def coeffs_case1(delta: float, p: DeltaPartition, s: Optional[float] = None, spec: Optional[KernelSpec] = None) -> np.ndarray:
    """Indicator of the anchor with the smaller kernel mass between it and delta.

    Ties go to the left anchor.
    """
    if s is None and spec is None:
        raise ValueError("need the fractional power s or a kernel spec")
    k = p.bracket(delta)
    theta = np.zeros(p.K + 1)
    lo, hi = p.anchors[k - 1], p.anchors[k]
    if delta == hi:
        theta[k] = 1.0
    elif delta == lo:
        theta[k - 1] = 1.0
    else:
        alpha = _kernel_mass(lo, delta, s, spec)
        beta = _kernel_mass(delta, hi, s, spec)
        theta[k - 1 if alpha <= beta else k] = 1.0
    return theta


def case1_switch_point(lo: float, hi: float, s: float) -> float:
    """Radius where the case-1 rule switches anchors for the fractional kernel."""
    return (0.5 * (lo ** (-2 * s) + hi ** (-2 * s))) ** (-1 / (2 * s))


def coeffs_case2(delta: float, p: DeltaPartition) -> np.ndarray:
    k = p.bracket(delta)
    theta = np.zeros(p.K + 1)
    lo, hi = p.anchors[k - 1], p.anchors[k]
    w = (delta - lo) / (hi - lo)
    theta[k] = w
    theta[k - 1] = 1.0 - w
    return theta


def combine(theta: np.ndarray, matrices: Sequence[np.ndarray]) -> np.ndarray:
    """sum_q theta_q A_q over the nonzero coefficients, in index order."""
    out = None
    for t, A in zip(theta, matrices):
        if t == 0.0:
            continue
        term = A.copy() if t == 1.0 else t * A
        out = term if out is None else out + term
    if out is None:
        out = np.zeros_like(matrices[0])
    return out


@dataclass
class AffineDecompositionDelta:
    partition: DeltaPartition
    matrices: list
    case: str = CASE2
    s: float = 0.5
    spec: Optional[KernelSpec] = None

    def __post_init__(self):
        if len(self.matrices) != self.partition.K + 1:
            raise ValueError("need one anchor matrix per partition point")
        shapes = {A.shape for A in self.matrices}
        if len(shapes) != 1:
            raise ValueError(f"anchor matrices disagree in shape: {shapes}")
        if self.case not in (CASE1, CASE2):
            raise ValueError(f"unknown case {self.case!r}")

    def coefficients(self, delta: float) -> np.ndarray:
        if self.case == CASE1:
            return coeffs_case1(delta, self.partition, s=self.s, spec=self.spec)
        return coeffs_case2(delta, self.partition)

    def matrix(self, delta: float) -> np.ndarray:
        return combine(self.coefficients(delta), self.matrices)


def build_affine_delta(mesh: Mesh1D, partition: DeltaPartition, s: float, case: str = CASE2,
                       q: QuadratureConfig = QuadratureConfig(), spec: Optional[KernelSpec] = None) -> AffineDecompositionDelta:
    base = KernelSpec(s=s) if spec is None else spec
    mats = [assemble_nonlocal(mesh, base.with_delta(d), q) for d in partition.anchors]
    return AffineDecompositionDelta(partition, mats, case, s, spec)


def affine_matrix_eval(dec: AffineDecompositionDelta, delta: float) -> np.ndarray:
    return dec.matrix(delta)


@dataclass(frozen=True)
class DeltaConstants:
    """Constants of the affine-delta error bounds.

    C_P is the nonlocal Poincare constant and C_P_h1 the local one, both
    estimated on the discrete space, so estimators built on them are
    discrete surrogates.
    """

    C_P: float
    C_P_h1: float
    C_gamma: float
    C_gamma1: float
    C_a: float
    L_a: float
    L_aprime: float
    alpha_a: float
    gamma_a: float
    omega: float = 2.0
    extra: dict = field(default_factory=dict)


def _sup_on(f, lo, hi, n=10_000):
    r = np.linspace(lo, hi, n)
    return float(np.max(f(r)))


def compute_delta_constants(mesh: Mesh1D, p: DeltaPartition, s: float, spec: Optional[KernelSpec] = None,
                            weakest_gram: Optional[np.ndarray] = None,
                            q: QuadratureConfig = QuadratureConfig()) -> DeltaConstants:
    n = 1
    omega = unit_sphere_measure(n)
    dmin, dmax = p.delta_min, p.delta_max
    if spec is None or spec.family == FRACTIONAL:
        C_gamma = dmin ** (-1 - 2 * s)
        C_gamma1 = (dmin ** (-2 * s) - dmax ** (-2 * s)) / s
        L_gamma = (1 + 2 * s) * dmin ** (-2 - 2 * s)
        g_sup = dmin ** (-1 - 2 * s)
    else:
        prof = spec.profile
        C_gamma = _sup_on(prof, dmin, dmax)
        C_gamma1 = omega * integrate.quad(prof, dmin, dmax, epsrel=1e-12)[0]
        r = np.linspace(dmin, dmax, 10_000)
        L_gamma = float(np.max(np.abs(np.diff(prof(r)) / np.diff(r))))
        g_sup = C_gamma

    M = assemble_mass(mesh)
    if weakest_gram is None:
        base = KernelSpec(s=s) if spec is None else spec
        weakest_gram = assemble_nonlocal(mesh, base.with_delta(dmin), q)
    # ||v||_L2 <= C_P ||v||_{V_delta} for all delta >= delta_min
    C_P = math.sqrt(linalg.eigh(M, weakest_gram, eigvals_only=True, subset_by_index=[M.shape[0] - 1] * 2)[0])
    C_P_h1 = math.sqrt(linalg.eigh(M, assemble_h1_gram(mesh), eigvals_only=True,
                                   subset_by_index=[M.shape[0] - 1] * 2)[0])

    C_a = 4 * omega * C_gamma
    L_a = 4 * C_P**2 * C_gamma
    # n = 1: the (n-1) term drops and delta^(n-1) = 1; sup of g over the range
    L_aprime = 2 * omega * (2 * C_P_h1 * L_gamma + g_sup)
    gamma_a = 1 + 4 * C_P**2 * C_gamma1
    alpha_a = 1 / gamma_a
    return DeltaConstants(C_P, C_P_h1, C_gamma, C_gamma1, C_a, L_a, L_aprime, alpha_a, gamma_a, omega,
                          extra={"L_gamma": L_gamma})
