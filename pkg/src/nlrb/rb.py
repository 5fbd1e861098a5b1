"""Reduced basis engine: Galerkin projection, offline/online residuals, estimators, greedy.

The basis is orthonormal in the pivot inner product X = L L^T.  Residual dual
norms are evaluated online from the R factor of

    W = L^{-1} [A_1 V, ..., A_Q V, f_1, ..., f_P],

since ||f(mu) - A(mu) V c||_{X^{-1}} = ||W w|| = ||R w|| with
w = [-theta_1 c, ..., -theta_Q c, theta_f].  Working with R instead of the
Gram W^T W avoids losing half the digits to cancellation near snapshots.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import linalg

from .affine_delta import CASE1
from .detailed import DELTA, S, DetailedModel, solve_affine_delta, solve_regularized_s

log = logging.getLogger(__name__)

TRUE_ERROR = "true_error"
ESTIMATOR = "estimator"


class RejectedSnapshot(ValueError):
    """Raised when a snapshot is numerically inside the current span."""


@dataclass
class ReducedBasis:
    vectors: np.ndarray
    params: list = field(default_factory=list)

    @property
    def N(self) -> int:
        return self.vectors.shape[1]

    @classmethod
    def empty(cls, n_dofs: int) -> "ReducedBasis":
        return cls(np.zeros((n_dofs, 0)), [])


def orthonormalize_append(basis: ReducedBasis, v: np.ndarray, gram: np.ndarray, param=None,
                          rtol: float = 1e-12) -> ReducedBasis:
    """Gram-Schmidt in the `gram` inner product, applied twice."""
    v = np.asarray(v, dtype=float)
    nv = math.sqrt(max(v @ gram @ v, 0.0))
    if nv == 0.0:
        raise RejectedSnapshot("zero snapshot")
    w = v.copy()
    V = basis.vectors
    for _ in range(2):
        if V.shape[1]:
            w = w - V @ (V.T @ (gram @ w))
    nw = math.sqrt(max(w @ gram @ w, 0.0))
    if nw <= rtol * nv:
        raise RejectedSnapshot(f"snapshot at {param} is linearly dependent on the basis (ratio {nw / nv:.2e})")
    return ReducedBasis(np.column_stack((V, w / nw)), basis.params + [param])


@dataclass
class EstimatorData:
    """Constants for the a posteriori bounds; which fields are used depends on the variant."""

    variant: str
    alpha: float = 1.0
    C_P: float = 0.0
    case: Optional[str] = None
    C_a: float = 0.0
    L_aprime: float = 0.0
    local_step: Optional[Callable[[float], float]] = None
    rho: float = 0.0
    interp_bound: float = 0.0
    eta: float = 1.0


@dataclass
class ReducedModel:
    basis: ReducedBasis
    variant: str
    A_red: np.ndarray
    f_red: np.ndarray
    theta_a: Callable
    theta_f: Callable
    R: np.ndarray
    grams: dict
    est: EstimatorData
    n_blocks: int
    N_max: int

    @property
    def N(self) -> int:
        return self.A_red.shape[1]

    def lift(self, c: np.ndarray) -> np.ndarray:
        return self.basis.vectors[:, : c.size] @ c

    def matrix(self, mu) -> np.ndarray:
        return np.tensordot(self.theta_a(mu), self.A_red, axes=1)

    def rhs(self, mu) -> np.ndarray:
        return np.asarray(self.theta_f(mu)) @ self.f_red

    def _columns(self, N: int) -> np.ndarray:
        a = (np.arange(self.n_blocks)[:, None] * self.N_max + np.arange(N)).ravel()
        f = self.n_blocks * self.N_max + np.arange(self.f_red.shape[0])
        return np.concatenate((a, f))

    def truncate(self, N: int) -> "ReducedModel":
        """Reduced model on the first N basis vectors (bases are nested)."""
        if not 0 <= N <= self.N:
            raise ValueError(f"N must lie in [0, {self.N}]")
        return ReducedModel(ReducedBasis(self.basis.vectors[:, :N], self.basis.params[:N]), self.variant,
                           self.A_red[:, :N, :N], self.f_red[:, :N], self.theta_a, self.theta_f,
                           self.R[:, self._columns(N)], {k: G[:N, :N] for k, G in self.grams.items()},
                           self.est, self.n_blocks, N)

    def residual_norm(self, mu, c: np.ndarray) -> float:
        """Pivot-dual norm of f(mu) - A(mu) V c."""
        ta = np.asarray(self.theta_a(mu))
        w = np.concatenate(((-ta[:, None] * c[None, :]).ravel(), np.asarray(self.theta_f(mu))))
        return float(np.linalg.norm(self.R @ w))

    def riesz_gram(self) -> np.ndarray:
        return self.R.T @ self.R

    def norm(self, c: np.ndarray, name: str) -> float:
        G = self.grams[name]
        return float(math.sqrt(max(c @ G @ c, 0.0)))


def project_reduced(model: DetailedModel, basis: ReducedBasis) -> ReducedModel:
    V = basis.vectors
    N = V.shape[1]
    X = model.pivot_gram
    L = linalg.cholesky(X, lower=True)
    AV = [A @ V for A in model.operator.matrices]
    A_red = np.array([V.T @ B for B in AV]).reshape(len(AV), N, N)
    A_red = 0.5 * (A_red + A_red.transpose(0, 2, 1))
    fs = model.rhs.vectors
    f_red = np.array([V.T @ f for f in fs]).reshape(len(fs), N)
    W = np.column_stack(AV + [np.column_stack(fs)]) if N else np.column_stack(fs)
    W = linalg.solve_triangular(L, W, lower=True)
    R = linalg.qr(W, mode="r")[0]
    grams = {"V_pivot": V.T @ X @ V, "L2": V.T @ model.mass @ V, "H1": V.T @ model.h1_gram @ V}
    if model.variant == S:
        grams["V_s2"] = V.T @ model.truth_matrix(model.decomposition.reg.s2) @ V
    return ReducedModel(basis, model.variant, A_red, f_red, model.operator.theta, model.rhs.theta, R, grams,
                        estimator_data(model), len(AV), N)


def estimator_data(model: DetailedModel, eta: float = 1.0) -> EstimatorData:
    if model.variant == DELTA:
        c = model.constants
        dec = model.decomposition
        return EstimatorData(DELTA, alpha=c.alpha_a, C_P=c.C_P, case=dec.case, C_a=c.C_a, L_aprime=c.L_aprime,
                             local_step=dec.partition.local_step)
    reg = model.decomposition.reg
    return EstimatorData(S, rho=reg.rho, interp_bound=reg.interp_bound, eta=eta)


def solve_reduced(rm: ReducedModel, mu) -> np.ndarray:
    if rm.N == 0:
        return np.zeros(0)
    return linalg.solve(rm.matrix(mu), rm.rhs(mu), assume_a="pos")


def estimator_delta(rm: ReducedModel, delta: float, c: np.ndarray) -> float:
    """Bound on the pivot-norm error against the truth solution at delta."""
    e = rm.est
    res = rm.residual_norm(delta, c)
    step = e.local_step(delta)
    if e.case == CASE1:
        affine = e.C_a * step * rm.norm(c, "L2")
    else:
        affine = e.L_aprime * step**2 * rm.norm(c, "H1")
    return res / e.alpha + e.C_P / e.alpha * affine


def estimator_s(rm: ReducedModel, s: float, c: np.ndarray) -> float:
    """Bound on the V_s-norm error against the truth solution at s."""
    e = rm.est
    res = rm.residual_norm(s, c)
    return e.eta * (res + (e.rho + e.interp_bound) * rm.norm(c, "V_s2"))


def estimate(rm: ReducedModel, mu, c: np.ndarray) -> float:
    return estimator_delta(rm, mu, c) if rm.variant == DELTA else estimator_s(rm, mu, c)


def discrete_eta(model: DetailedModel, s: float) -> float:
    """sup_v ||v||_{V_{s_min}} / ||v||_{V_s} on the discrete space."""
    lam = linalg.eigh(model.pivot_gram, model.truth_matrix(s), eigvals_only=True,
                      subset_by_index=[model.n_dofs - 1] * 2)[0]
    return math.sqrt(lam)


def detailed_solve(model: DetailedModel, mu) -> np.ndarray:
    if model.variant == DELTA:
        return solve_affine_delta(model, mu).coeffs
    return solve_regularized_s(model, mu).coeffs


@dataclass
class GreedyTrace:
    params: list = field(default_factory=list)
    max_errors: list = field(default_factory=list)
    stopped: str = ""


def greedy_train(model: DetailedModel, training: Sequence[float], N_max: int, tol: float = 0.0,
                 criterion: str = TRUE_ERROR, detailed: Optional[dict] = None):
    """Greedy snapshot selection; ties go to the smaller parameter.

    `max_errors[i]` is the max training error with i + 1 basis vectors.
    """
    training = np.sort(np.asarray(training, dtype=float))
    if training.size == 0:
        raise ValueError("empty training set")
    if N_max < 1:
        raise ValueError("N_max must be >= 1")
    if criterion not in (TRUE_ERROR, ESTIMATOR):
        raise ValueError(f"unknown criterion {criterion!r}")
    if detailed is None:
        detailed = {}
    X = model.pivot_gram

    def snap(mu):
        key = float(mu)
        if key not in detailed:
            detailed[key] = detailed_solve(model, mu)
        return detailed[key]

    if criterion == TRUE_ERROR:
        for mu in training:
            snap(mu)

    basis = ReducedBasis.empty(model.n_dofs)
    trace = GreedyTrace()
    mu = float(training[training.size // 2])
    while True:
        try:
            basis = orthonormalize_append(basis, snap(mu), X, mu)
        except RejectedSnapshot as exc:
            trace.stopped = f"stagnation: {exc}"
            log.info("greedy stopped: %s", exc)
            break
        trace.params.append(mu)
        rm = project_reduced(model, basis)
        errs = np.empty(training.size)
        for i, m in enumerate(training):
            c = solve_reduced(rm, m)
            if criterion == TRUE_ERROR:
                d = detailed[float(m)] - rm.lift(c)
                errs[i] = math.sqrt(max(d @ X @ d, 0.0))
            else:
                errs[i] = estimate(rm, m, c)
        k = int(np.argmax(errs))  # first maximum, training is sorted
        trace.max_errors.append(float(errs[k]))
        log.info("greedy N=%d max %s=%.3e at %.6g", basis.N, criterion, errs[k], training[k])
        if errs[k] <= tol:
            trace.stopped = "tolerance"
            break
        if basis.N >= N_max:
            trace.stopped = "N_max"
            break
        mu = float(training[k])
    return basis, project_reduced(model, basis), trace
