"""Uniform 1D P1 finite elements: mesh, Gram matrices, load vectors and norms.

Basis functions are the hat functions of the interior nodes, extended by zero
outside the domain, so the volume constraint is built into the space.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np


@dataclass(frozen=True)
class Mesh1D:
    a: float
    b: float
    n_el: int

    def __post_init__(self):
        if not self.n_el >= 1 or int(self.n_el) != self.n_el:
            raise ValueError(f"n_el must be a positive integer, got {self.n_el!r}")
        if not self.a < self.b:
            raise ValueError(f"need a < b, got a={self.a}, b={self.b}")

    @property
    def h(self) -> float:
        return (self.b - self.a) / self.n_el

    @property
    def diam(self) -> float:
        return self.b - self.a

    @property
    def nodes(self) -> np.ndarray:
        return self.a + self.h * np.arange(self.n_el + 1)

    @property
    def interior_nodes(self) -> np.ndarray:
        """Indices of the degrees of freedom (both endpoints excluded)."""
        return np.arange(1, self.n_el)

    @property
    def n_dofs(self) -> int:
        return self.n_el - 1

    @property
    def dof_coords(self) -> np.ndarray:
        return self.nodes[1:-1]


def build_mesh(a: float, b: float, n_el: int) -> Mesh1D:
    if n_el < 2:
        raise ValueError(f"need at least two elements for an interior dof, got n_el={n_el}")
    return Mesh1D(float(a), float(b), int(n_el))


def symmetrize(A: np.ndarray) -> np.ndarray:
    return 0.5 * (A + A.T)


def _tridiag(n: int, diag: float, off: float) -> np.ndarray:
    A = np.zeros((n, n))
    idx = np.arange(n)
    A[idx, idx] = diag
    A[idx[:-1], idx[:-1] + 1] = off
    A[idx[:-1] + 1, idx[:-1]] = off
    return A


def assemble_mass(mesh: Mesh1D) -> np.ndarray:
    h = mesh.h
    return _tridiag(mesh.n_dofs, 2.0 * h / 3.0, h / 6.0)


def assemble_h1_gram(mesh: Mesh1D) -> np.ndarray:
    h = mesh.h
    return _tridiag(mesh.n_dofs, 2.0 / h, -1.0 / h)


def assemble_load(mesh: Mesh1D, F: Callable, jumps: Sequence[float] = (), order: int = 4) -> np.ndarray:
    """Load vector with entries int F phi_i dx.

    Elementwise Gauss-Legendre of the given order; elements containing a
    point of `jumps` are split there so piecewise smooth F is integrated
    without a spurious quadrature error at the discontinuity.
    """
    if order < 3:
        raise ValueError("quadrature order must be at least 3")
    xg, wg = np.polynomial.legendre.leggauss(order)
    nodes = mesh.nodes
    h = mesh.h
    jumps = np.sort(np.asarray(jumps, dtype=float))
    load = np.zeros(mesh.n_el + 1)
    for e in range(mesh.n_el):
        xl, xr = nodes[e], nodes[e + 1]
        inner = jumps[(jumps > xl) & (jumps < xr)]
        cuts = np.concatenate(([xl], inner, [xr]))
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            x = 0.5 * (hi - lo) * xg + 0.5 * (hi + lo)
            w = 0.5 * (hi - lo) * wg
            fx = np.asarray(F(x), dtype=float) * np.ones_like(x)
            if not np.all(np.isfinite(fx)):
                raise ValueError(f"load function is not finite on element [{xl}, {xr}]")
            load[e] += np.sum(w * fx * (xr - x) / h)
            load[e + 1] += np.sum(w * fx * (x - xl) / h)
    return load[1:-1]


def interpolate(mesh: Mesh1D, f: Callable) -> np.ndarray:
    return np.asarray(f(mesh.dof_coords), dtype=float)


def norm(G: np.ndarray, v: np.ndarray) -> float:
    v = np.asarray(v, dtype=float)
    if G.shape != (v.size, v.size):
        raise ValueError(f"Gram matrix of shape {G.shape} does not match vector of size {v.size}")
    return float(np.sqrt(max(v @ (G @ v), 0.0)))
