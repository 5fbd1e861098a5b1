"""Detailed (full finite-element) problems for the delta- and s-parametrized families.

Four solves are provided: the truth problem at a fresh A(delta) or A(s), the
affine-delta surrogate, and the regularized Chebyshev surrogate in s.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy import linalg

from .affine_delta import (CASE2, AffineDecompositionDelta, DeltaPartition, build_affine_delta, combine,
                           compute_delta_constants)
from .affine_s import AffineDecompositionS, SGrid, build_affine_s, fractional_gram, lagrange_coefficients
from .assembly import KernelSpec, QuadratureConfig, assemble_nonlocal, scaling_constant
from .fem import Mesh1D, assemble_h1_gram, assemble_load, assemble_mass

DELTA = "delta_param"
S = "s_param"


@dataclass
class AffineOperator:
    """A(mu) = sum_q theta(mu)[q] A_q."""

    matrices: list
    theta: Callable[[float], np.ndarray]

    def matrix(self, mu: float) -> np.ndarray:
        return combine(self.theta(mu), self.matrices)


@dataclass
class AffineRhs:
    vectors: list
    theta: Callable[[float], np.ndarray]

    def vector(self, mu: float) -> np.ndarray:
        return sum(t * f for t, f in zip(self.theta(mu), self.vectors))


@dataclass
class Solution:
    coeffs: np.ndarray
    param: float
    variant: str
    solver_residual: float = 0.0


@dataclass
class DetailedModel:
    mesh: Mesh1D
    variant: str
    decomposition: Union[AffineDecompositionDelta, AffineDecompositionS]
    operator: AffineOperator
    rhs: AffineRhs
    pivot_gram: np.ndarray
    mass: np.ndarray
    h1_gram: np.ndarray
    load: np.ndarray
    constants: object
    s: Optional[float] = None
    delta: Optional[float] = None
    delta_p: Optional[float] = None
    quad: QuadratureConfig = field(default_factory=QuadratureConfig)
    _truth: dict = field(default_factory=dict, repr=False)

    @property
    def n_dofs(self) -> int:
        return self.mesh.n_dofs

    def truth_matrix(self, mu: float) -> np.ndarray:
        """Freshly assembled A(delta) at fixed s, or A(s) at fixed delta; cached by parameter."""
        key = float(mu)
        if key not in self._truth:
            if self.variant == DELTA:
                self._truth[key] = assemble_nonlocal(self.mesh, KernelSpec(s=self.s, delta=key), self.quad)
            else:
                self._truth[key] = fractional_gram(self.mesh, key, self.delta, self.delta_p, self.quad, self.mass)
        return self._truth[key]

    def fractional_gram(self, s: float) -> np.ndarray:
        """Energy Gram A(s, delta) at the model's interaction radius (V_s norm)."""
        if self.variant != S:
            raise ValueError("V_s norms are only defined for the s-parametrized model")
        return self.truth_matrix(s)

    def surrogate_matrix(self, mu: float) -> np.ndarray:
        return self.operator.matrix(mu)


def _load_vector(mesh: Mesh1D, F, jumps: Sequence[float]) -> np.ndarray:
    if callable(F):
        return assemble_load(mesh, F, jumps)
    F = np.asarray(F, dtype=float)
    if F.ndim == 0:
        return assemble_load(mesh, lambda x: np.full_like(x, float(F)), jumps)
    if F.shape != (mesh.n_dofs,):
        raise ValueError(f"load vector must have {mesh.n_dofs} entries")
    return F


def build_delta_model(mesh: Mesh1D, s: float, partition: DeltaPartition, case: str = CASE2, F=-1.0,
                      jumps: Sequence[float] = (), pivot_delta: float = 0.5, scale_rhs: bool = True,
                      q: QuadratureConfig = QuadratureConfig(), truth_cache: Optional[dict] = None) -> DetailedModel:
    """Affine-delta model at fixed s.

    `truth_cache` may be shared between models on the same mesh, s and
    quadrature so fresh assemblies A(delta) are reused.
    """
    dec = build_affine_delta(mesh, partition, s, case, q)
    load = _load_vector(mesh, F, jumps)
    scale = 2.0 / scaling_constant(1, s) if scale_rhs else 1.0
    operator = AffineOperator(dec.matrices, dec.coefficients)
    rhs = AffineRhs([load], lambda mu: np.array([scale]))
    pivot = assemble_nonlocal(mesh, KernelSpec(s=s, delta=pivot_delta), q)
    const = compute_delta_constants(mesh, partition, s, weakest_gram=dec.matrices[0], q=q)
    model = DetailedModel(mesh, DELTA, dec, operator, rhs, pivot, assemble_mass(mesh),
                          assemble_h1_gram(mesh), load, const, s=s, quad=q)
    if truth_cache is not None:
        model._truth = truth_cache
    return model


def build_s_model(mesh: Mesh1D, delta: float, grid: SGrid, F=-1.0, jumps: Sequence[float] = (), eps: float = 0.0,
                  rho: Optional[float] = None, delta_p: Optional[float] = None,
                  q: QuadratureConfig = QuadratureConfig(), truth_cache: Optional[dict] = None) -> DetailedModel:
    if math.isinf(delta):
        delta_p = mesh.diam if delta_p is None else delta_p
    dec = build_affine_s(mesh, grid, delta, eps, rho, delta_p, q)
    load = _load_vector(mesh, F, jumps)

    mats = list(dec.matrices)
    if dec.full_space:
        mats.append(dec.mass)
    mats.append(dec.reg_gram)

    def theta(s):
        t = lagrange_coefficients(s, grid)
        extra = [dec.split_coefficient(t)] if dec.full_space else []
        return np.concatenate((t, extra, [dec.reg.rho]))

    operator = AffineOperator(mats, theta)
    rhs = AffineRhs([load], lambda s: np.array([2.0 / scaling_constant(1, s)]))
    model = DetailedModel(mesh, S, dec, operator, rhs, None, dec.mass, assemble_h1_gram(mesh), load, dec.reg,
                          delta=delta, delta_p=delta_p, quad=q)
    if truth_cache is not None:
        model._truth = truth_cache
    model.pivot_gram = model.truth_matrix(grid.s_min)
    return model


def _solve(A: np.ndarray, f: np.ndarray, param: float, variant: str) -> Solution:
    try:
        c = linalg.cho_factor(A)
    except linalg.LinAlgError as exc:
        raise RuntimeError(f"system matrix at parameter {param} is not positive definite") from exc
    u = linalg.cho_solve(c, f)
    res = float(np.linalg.norm(A @ u - f))
    return Solution(u, float(param), variant, res)


def solve_exact_delta(model: DetailedModel, delta: float) -> Solution:
    return _solve(model.truth_matrix(delta), model.rhs.vector(delta), delta, "exact_delta")


def solve_affine_delta(model: DetailedModel, delta: float) -> Solution:
    model.decomposition.partition.check(delta)
    return _solve(model.surrogate_matrix(delta), model.rhs.vector(delta), delta, "affine_delta")


def solve_exact_s(model: DetailedModel, s: float) -> Solution:
    if not 0 < s < 1:
        raise ValueError(f"s must lie in (0, 1), got {s}")
    return _solve(model.truth_matrix(s), model.rhs.vector(s), s, "exact_s")


def solve_regularized_s(model: DetailedModel, s: float) -> Solution:
    model.decomposition.grid.check(s)
    return _solve(model.surrogate_matrix(s), model.rhs.vector(s), s, "regularized_s")


NORMS = ("V_pivot", "V_s", "L2", "H1")


def norm_gram(model: DetailedModel, norm: str, s: Optional[float] = None) -> np.ndarray:
    if norm == "V_pivot":
        return model.pivot_gram
    if norm == "V_s":
        if s is None:
            raise ValueError("the V_s norm needs s")
        return model.fractional_gram(s)
    if norm == "L2":
        return model.mass
    if norm == "H1":
        return model.h1_gram
    raise ValueError(f"unknown norm {norm!r}; choose from {NORMS}")


def error_norm(model: DetailedModel, u1: Solution, u2: Solution, norm: str = "V_pivot", s: Optional[float] = None) -> float:
    a = np.asarray(getattr(u1, "coeffs", u1))
    b = np.asarray(getattr(u2, "coeffs", u2))
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch {a.shape} vs {b.shape}")
    G = norm_gram(model, norm, s)
    e = a - b
    return float(np.sqrt(max(e @ G @ e, 0.0)))
