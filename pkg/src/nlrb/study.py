"""Experiment harness: YAML study configs, the five study commands and their run reports.

Each runner writes deterministic CSVs into the output directory and returns
the written files with row counts plus a list of named checks.
"""
from __future__ import annotations

import dataclasses
import json
import logging
import math
import platform
import time
import warnings
import zipfile
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import List, Optional

import numpy as np
import scipy
import yaml

from . import __version__
from .affine_delta import (CASE1, CASE2, AffineDecompositionDelta, DeltaPartition, build_affine_delta, coeffs_case1,
                           coeffs_case2, make_partition)
from .affine_s import (chebyshev_nodes, compute_shat, compute_sigma, fractional_gram, lagrange_coefficients,
                       log_sup_bound, rhs_scale)
from .assembly import KernelSpec, QuadratureConfig, assemble_nonlocal, oracle_entry, splitting_constant
from .detailed import (_load_vector, build_delta_model, build_s_model, error_norm, solve_affine_delta, solve_exact_delta,
                       solve_exact_s, solve_regularized_s)
from .fem import assemble_mass, build_mesh
from .rb import estimator_delta, estimator_s, greedy_train, solve_reduced
from .storage import load_anchors, write_csv

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Invalid or inconsistent study configuration (CLI exit code 2)."""


def _num(v, name):
    if isinstance(v, bool):
        raise ConfigError(f"{name}: expected a number, got {v!r}")
    if isinstance(v, (int, float)):
        return float(v)
    if isinstance(v, str):
        t = v.strip().lower()
        if t in ("inf", "infinity", ".inf"):
            return math.inf
        try:
            return float(Fraction(t))
        except (ValueError, ZeroDivisionError):
            pass
    raise ConfigError(f"{name}: cannot read {v!r} as a number")


@dataclass
class MeshConfig:
    a: float = 0.0
    b: float = 1.0
    mesh_exp: int = 7


@dataclass
class KernelConfig:
    s: float = 0.5
    delta_min: float = 1 / 16
    delta_max: float = 1.0
    s_min: float = 1 / 3
    s_max: float = 1 / 2
    # interaction radius of the s-parametrized studies
    s_delta: float = 0.25
    delta_p: Optional[float] = None
    pivot_delta: float = 0.5


@dataclass
class LoadConfig:
    value: float = -1.0
    indicator: Optional[List[float]] = None


@dataclass
class AffineDeltaConfig:
    K: List[int] = field(default_factory=lambda: [5, 9, 16, 31, 61])
    cases: List[str] = field(default_factory=lambda: [CASE1, CASE2])
    graded: bool = True
    case1_slope: List[float] = field(default_factory=lambda: [0.75, 1.25])
    case2_slope: List[float] = field(default_factory=lambda: [1.7, 2.3])
    anchors_file: Optional[str] = None


@dataclass
class AffineSConfig:
    M: List[int] = field(default_factory=lambda: [2, 4, 8, 16])
    eps: float = 0.0
    rho: Optional[float] = None
    min_rate: float = 0.5 * math.log(2.0)
    floor: float = 1e-12
    ratio_M: List[int] = field(default_factory=lambda: [4, 16])
    max_ratio: float = 1e-2


@dataclass
class SetsConfig:
    delta_train: int = 121
    s_train: int = 50
    delta_test: int = 100
    s_test: int = 30


@dataclass
class GreedyConfig:
    N_max: int = 20
    tol: float = 0.0
    criterion: str = "true_error"
    case: str = CASE2
    K: List[int] = field(default_factory=lambda: [5, 16, 61])
    M: List[int] = field(default_factory=lambda: [2, 4, 8, 16])
    min_certified: float = 0.98
    plateau_factor: float = 3.0


@dataclass
class SnapshotConfig:
    deltas: List[float] = field(default_factory=lambda: [1 / 16, 1 / 4, 1.0])
    s: float = 0.5
    s_values: List[float] = field(default_factory=lambda: [0.1, 0.3, 0.5, 0.7, 0.9])
    s_delta: float = math.inf
    indicator: Optional[List[float]] = field(default_factory=lambda: [0.5, 1.0])


@dataclass
class StudyConfig:
    mesh: MeshConfig = field(default_factory=MeshConfig)
    kernel: KernelConfig = field(default_factory=KernelConfig)
    load: LoadConfig = field(default_factory=LoadConfig)
    affine_delta: AffineDeltaConfig = field(default_factory=AffineDeltaConfig)
    affine_s: AffineSConfig = field(default_factory=AffineSConfig)
    sets: SetsConfig = field(default_factory=SetsConfig)
    greedy: GreedyConfig = field(default_factory=GreedyConfig)
    snapshots: SnapshotConfig = field(default_factory=SnapshotConfig)
    seed: int = 0
    out: str = "out"

    def mesh_obj(self):
        return build_mesh(self.mesh.a, self.mesh.b, 2**self.mesh.mesh_exp)

    def to_dict(self) -> dict:
        return _jsonable(dataclasses.asdict(self))


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.generic):
        x = x.item()
    if isinstance(x, float) and math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def _coerce(value, typ, name):
    if typ in ("float", float):
        return _num(value, name)
    if typ in ("int", int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{name}: expected an integer, got {value!r}")
        return value
    if typ in ("bool", bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{name}: expected true/false, got {value!r}")
        return value
    if typ in ("str", str):
        if not isinstance(value, str):
            raise ConfigError(f"{name}: expected a string, got {value!r}")
        return value
    if isinstance(typ, str):
        if typ.startswith("Optional["):
            return None if value is None else _coerce(value, typ[9:-1], name)
        if typ.startswith("List["):
            if not isinstance(value, list):
                raise ConfigError(f"{name}: expected a list, got {value!r}")
            return [_coerce(v, typ[5:-1], f"{name}[{i}]") for i, v in enumerate(value)]
    raise ConfigError(f"{name}: unsupported field type {typ!r}")


def _build(cls, data, prefix):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{prefix or 'config'}: expected a mapping")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError(f"{prefix or 'config'}: unknown keys {sorted(unknown)}")
    kwargs = {}
    for name, f in known.items():
        if name not in data:
            continue
        key = f"{prefix}.{name}" if prefix else name
        if dataclasses.is_dataclass(f.default_factory if f.default_factory is not dataclasses.MISSING else None):
            kwargs[name] = _build(f.default_factory, data[name], key)
        else:
            kwargs[name] = _coerce(data[name], f.type, key)
    return cls(**kwargs)


def config_from_dict(data: dict) -> StudyConfig:
    cfg = _build(StudyConfig, data, "")
    validate_config(cfg)
    return cfg


def load_config(path) -> StudyConfig:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
    return config_from_dict(data or {})


def validate_config(cfg: StudyConfig):
    k = cfg.kernel
    if not 2 <= cfg.mesh.mesh_exp <= 12:
        raise ConfigError("mesh.mesh_exp must lie in [2, 12]")
    if not 0 < k.delta_min < k.delta_max < math.inf:
        raise ConfigError("need 0 < kernel.delta_min < kernel.delta_max < inf")
    if not 0 < k.s < 1:
        raise ConfigError("kernel.s must lie in (0, 1)")
    if not 0 < k.s_min < k.s_max < 1:
        raise ConfigError("need 0 < kernel.s_min < kernel.s_max < 1")
    if not k.s_delta > 0:
        raise ConfigError("kernel.s_delta must be positive")
    try:
        _, s1, s2 = compute_shat(k.s_min, k.s_max, cfg.affine_s.eps)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            grid = chebyshev_nodes(k.s_min, k.s_max, 1)
            sigma = compute_sigma(grid, s1, s2)
    except ValueError as exc:
        raise ConfigError(f"coercivity precondition fails for s in [{k.s_min}, {k.s_max}] "
                          f"(no contraction factor sigma < 1): {exc}") from exc
    if sigma >= 1:
        raise ConfigError(f"sigma = {sigma:.3g} >= 1: the regularized surrogate is not guaranteed to be coercive")
    for case in cfg.affine_delta.cases + [cfg.greedy.case]:
        if case not in (CASE1, CASE2):
            raise ConfigError(f"unknown case {case!r}; use {CASE1!r} or {CASE2!r}")
    if any(K < 1 for K in cfg.affine_delta.K + cfg.greedy.K):
        raise ConfigError("every K must be >= 1")
    if any(M < 0 for M in cfg.affine_s.M + cfg.greedy.M):
        raise ConfigError("every M must be >= 0")
    if cfg.greedy.criterion not in ("true_error", "estimator"):
        raise ConfigError("greedy.criterion must be true_error or estimator")
    if cfg.greedy.N_max < 1:
        raise ConfigError("greedy.N_max must be >= 1")
    for name in ("delta_train", "s_train", "delta_test", "s_test"):
        if getattr(cfg.sets, name) < 1:
            raise ConfigError(f"sets.{name} must be >= 1")
    for ind in (cfg.load.indicator, cfg.snapshots.indicator):
        if ind is not None and not (len(ind) == 2 and ind[0] < ind[1]):
            raise ConfigError("an indicator load needs [lo, hi] with lo < hi")


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""

    def __post_init__(self):
        self.passed = bool(self.passed)


@dataclass
class RunReport:
    command: str
    config: dict
    versions: dict
    timings: dict = field(default_factory=dict)
    manifest: dict = field(default_factory=dict)
    checks: List[Check] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["passed"] = self.passed
        return _jsonable(d)

    def write(self, out_dir) -> Path:
        path = Path(out_dir) / f"report_{self.command}.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        return path


def versions() -> dict:
    return {"nlrb": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "pyyaml": yaml.__version__}


def _load(spec: LoadConfig, indicator=None):
    ind = spec.indicator if indicator is None else indicator
    if ind is None:
        return spec.value, ()
    lo, hi = ind
    return (lambda x: np.where((x >= lo) & (x <= hi), 1.0, 0.0)), (lo, hi)


def delta_training(cfg: StudyConfig) -> np.ndarray:
    k = cfg.kernel
    return np.linspace(k.delta_min, k.delta_max, cfg.sets.delta_train)


def s_training(cfg: StudyConfig) -> np.ndarray:
    return np.linspace(cfg.kernel.s_min, cfg.kernel.s_max, cfg.sets.s_train)


def delta_test(cfg: StudyConfig) -> np.ndarray:
    rng = np.random.default_rng([cfg.seed, 1])
    return np.sort(rng.uniform(cfg.kernel.delta_min, cfg.kernel.delta_max, cfg.sets.delta_test))


def s_test(cfg: StudyConfig) -> np.ndarray:
    rng = np.random.default_rng([cfg.seed, 2])
    return np.sort(rng.uniform(cfg.kernel.s_min, cfg.kernel.s_max, cfg.sets.s_test))


def _grid(k: KernelConfig, M: int):
    # width warnings are surfaced by validate_config; sigma < 1 is enforced there
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return chebyshev_nodes(k.s_min, k.s_max, M)


def loglog_slope(x, y) -> float:
    return float(np.polyfit(np.log(np.asarray(x)), np.log(np.asarray(y)), 1)[0])


# --------------------------------------------------------------------------- snapshots

def run_snapshots(cfg: StudyConfig, out: Path):
    sc = cfg.snapshots
    if not sc.deltas or not sc.s_values:
        raise ConfigError("snapshots.deltas and snapshots.s_values must be nonempty")
    if any(not 0 < s < 1 for s in sc.s_values + [sc.s]):
        raise ConfigError("snapshot s values must lie in (0, 1)")
    mesh = cfg.mesh_obj()
    F, jumps = _load(cfg.load, sc.indicator)
    load = _load_vector(mesh, F, jumps)
    rows_d, rows_s = [], []
    for d in sc.deltas:
        A = assemble_nonlocal(mesh, KernelSpec(s=sc.s, delta=d))
        u = np.linalg.solve(A, rhs_scale(load, sc.s))
        rows_d += [(x, v, d) for x, v in zip(mesh.nodes, np.concatenate(([0.0], u, [0.0])))]
    for s in sc.s_values:
        A = fractional_gram(mesh, s, sc.s_delta, cfg.kernel.delta_p)
        u = np.linalg.solve(A, rhs_scale(load, s))
        rows_s += [(x, v, s) for x, v in zip(mesh.nodes, np.concatenate(([0.0], u, [0.0])))]
    manifest = {}
    p = out / "snapshots_delta.csv"
    manifest[p.name] = write_csv(p, ["x", "value", "delta"], rows_d,
                                 f"Solution snapshots for several interaction radii at s={sc.s}")
    p = out / "snapshots_s.csv"
    manifest[p.name] = write_csv(p, ["x", "value", "s"], rows_s,
                                 f"Solution snapshots for several fractional powers at delta={sc.s_delta}")
    return manifest, []


# --------------------------------------------------------------------------- affine delta

def run_affine_delta(cfg: StudyConfig, out: Path):
    ad = cfg.affine_delta
    if not ad.K:
        raise ConfigError("affine_delta.K must be nonempty")
    mesh = cfg.mesh_obj()
    k = cfg.kernel
    F, jumps = _load(cfg.load)
    train = delta_training(cfg)
    variants = [("uniform", c) for c in ad.cases]
    if ad.graded and CASE2 in ad.cases:
        variants.append(("graded", CASE2))

    cache, truth = {}, {}
    pointwise, table, maxerr = [], [], {}
    for kind, case in variants:
        for K in ad.K:
            p = make_partition(k.delta_min, k.delta_max, K, kind)
            m = build_delta_model(mesh, k.s, p, case, F=F, jumps=jumps, pivot_delta=k.pivot_delta, truth_cache=cache)
            if not truth:
                truth = {float(d): solve_exact_delta(m, d).coeffs for d in train}
            errs = [error_norm(m, truth[float(d)], solve_affine_delta(m, d)) for d in train]
            pointwise += [(kind, case, K, d, e) for d, e in zip(train, errs)]
            maxerr[(kind, case, K)] = max(errs)
            table.append((kind, case, K, p.step, max(errs)))

    checks, slopes = [], []
    for kind, case in variants:
        steps = [r[3] for r in table if r[0] == kind and r[1] == case]
        errs = [r[4] for r in table if r[0] == kind and r[1] == case]
        if len(steps) >= 2:
            sl = loglog_slope(steps, errs)
            slopes.append((kind, case, sl))
            if kind == "uniform":
                lo, hi = ad.case1_slope if case == CASE1 else ad.case2_slope
                checks.append(Check(f"slope_{kind}_{case}", lo <= sl <= hi, f"fitted slope {sl:.3f}, band [{lo}, {hi}]"))
    if ad.graded and CASE2 in ad.cases:
        bad = [K for K in ad.K if maxerr[("graded", CASE2, K)] > maxerr[("uniform", CASE2, K)]]
        checks.append(Check("graded_not_worse_than_uniform", not bad, f"violations at K={bad}" if bad else "all K"))

    manifest = {}
    p = out / "affine_delta_pointwise.csv"
    manifest[p.name] = write_csv(p, ["partition", "case", "K", "delta", "error_V"], pointwise,
                                 "Pointwise affine-delta solution error over the training radii")
    p = out / "affine_delta_convergence.csv"
    manifest[p.name] = write_csv(p, ["partition", "case", "K", "step", "max_error_V"], table,
                                 "Max affine-delta solution error versus the number of anchor intervals")
    p = out / "affine_delta_slopes.csv"
    manifest[p.name] = write_csv(p, ["partition", "case", "slope"], slopes,
                                 "Fitted log-log slopes of max error versus anchor step")
    return manifest, checks


# --------------------------------------------------------------------------- affine s

def run_affine_s(cfg: StudyConfig, out: Path):
    sc = cfg.affine_s
    if not sc.M:
        raise ConfigError("affine_s.M must be nonempty")
    mesh = cfg.mesh_obj()
    k = cfg.kernel
    F, jumps = _load(cfg.load)
    test = s_test(cfg)
    rows, pointwise, errs = [], [], {}
    cache, truth = {}, {}
    for M in sorted(sc.M):
        m = build_s_model(mesh, k.s_delta, _grid(k, M), F=F, jumps=jumps, eps=sc.eps, rho=sc.rho, delta_p=k.delta_p,
                          truth_cache=cache)
        if not truth:
            truth = {float(s): solve_exact_s(m, s).coeffs for s in test}
        e = [error_norm(m, truth[float(s)], solve_regularized_s(m, s), "V_s", s) for s in test]
        pointwise += [(M, s, v) for s, v in zip(test, e)]
        reg = m.decomposition.reg
        errs[M] = max(e)
        rows.append((M, max(e), reg.sigma ** (M + 1), reg.interp_bound, reg.rho))

    checks = []
    Ms = sorted(errs)
    fit_M = [M for M in Ms if errs[M] > sc.floor]
    if len(fit_M) >= 2:
        rate = -np.polyfit(fit_M, np.log([errs[M] for M in fit_M]), 1)[0]
        checks.append(Check("exponential_rate", rate >= sc.min_rate,
                            f"fitted decay {rate:.3f} per unit M, need >= {sc.min_rate:.3f}"))
    a, b = sc.ratio_M
    if a in errs and b in errs:
        ratio = errs[b] / errs[a]
        checks.append(Check(f"ratio_M{b}_over_M{a}", ratio <= sc.max_ratio, f"{ratio:.3e} <= {sc.max_ratio}"))
    manifest = {}
    p = out / "affine_s_convergence.csv"
    manifest[p.name] = write_csv(p, ["M", "max_error_Vs", "sigma_pow", "interp_bound", "rho"], rows,
                                 f"Max regularized-surrogate error versus Chebyshev degree at delta={k.s_delta}")
    p = out / "affine_s_pointwise.csv"
    manifest[p.name] = write_csv(p, ["M", "s", "error_Vs"], pointwise,
                                 "Pointwise regularized-surrogate error over the test powers")
    return manifest, checks


# --------------------------------------------------------------------------- reduced basis

def _weakly_decreasing(seq) -> bool:
    return all(b <= a for a, b in zip(seq, seq[1:]))


def run_rb(cfg: StudyConfig, out: Path):
    g = cfg.greedy
    mesh = cfg.mesh_obj()
    k = cfg.kernel
    F, jumps = _load(cfg.load)
    checks, rows_d, rows_s = [], [], []

    train, test = delta_training(cfg), delta_test(cfg)
    cache, truth = {}, {}
    for K in g.K:
        m = build_delta_model(mesh, k.s, make_partition(k.delta_min, k.delta_max, K), g.case, F=F, jumps=jumps,
                              pivot_delta=k.pivot_delta, truth_cache=cache)
        if not truth:
            truth = {float(d): solve_exact_delta(m, d).coeffs for d in test}
        aff = {float(d): solve_affine_delta(m, d).coeffs for d in test}
        affine_err = max(error_norm(m, truth[float(d)], aff[float(d)]) for d in test)
        basis, rm, trace = greedy_train(m, train, g.N_max, g.tol, g.criterion)
        curve, cert, snap = [], 0, 0.0
        total = 0
        for N in range(rm.N + 1):
            r = rm.truncate(N)
            worst, worst_est, worst_aff = 0.0, 0.0, 0.0
            for d in test:
                c = solve_reduced(r, d)
                e = error_norm(m, truth[float(d)], r.lift(c) if N else np.zeros(m.n_dofs))
                worst = max(worst, e)
                worst_aff = max(worst_aff, error_norm(m, aff[float(d)], r.lift(c) if N else np.zeros(m.n_dofs)))
                if N == rm.N:
                    est = estimator_delta(r, d, c)
                    worst_est = max(worst_est, est)
                    cert += est >= e
                    total += 1
            curve.append(worst)
            rows_d.append((K, N, worst, worst_aff, affine_err, worst_est if N == rm.N else float("nan")))
        for prm in basis.params:
            snap = max(snap, error_norm(m, solve_affine_delta(m, prm), rm.lift(solve_reduced(rm, prm))))
        checks += _rb_checks(f"delta_K{K}", curve[1:], affine_err, cert, total, snap, g)

    train, test = s_training(cfg), s_test(cfg)
    cache, truth = {}, {}
    for M in g.M:
        m = build_s_model(mesh, k.s_delta, _grid(k, M), F=F, jumps=jumps, eps=cfg.affine_s.eps, rho=cfg.affine_s.rho,
                          delta_p=k.delta_p, truth_cache=cache)
        if not truth:
            truth = {float(s): solve_exact_s(m, s).coeffs for s in test}
        affine_err = max(error_norm(m, truth[float(s)], solve_regularized_s(m, s), "V_s", s) for s in test)
        basis, rm, trace = greedy_train(m, train, g.N_max, g.tol, g.criterion)
        curve, cert, total, snap = [], 0, 0, 0.0
        for N in range(1, rm.N + 1):
            r = rm.truncate(N)
            worst, worst_rel, worst_est = 0.0, 0.0, 0.0
            for s in test:
                c = solve_reduced(r, s)
                uN = r.lift(c)
                e = error_norm(m, truth[float(s)], uN, "V_s", s)
                A = m.truth_matrix(s)
                worst = max(worst, e)
                worst_rel = max(worst_rel, e / math.sqrt(uN @ A @ uN))
                if N == rm.N:
                    est = estimator_s(r, s, c)
                    worst_est = max(worst_est, est)
                    cert += est >= e
                    total += 1
            curve.append(worst)
            rows_s.append((M, N, worst_rel, worst, affine_err, worst_est if N == rm.N else float("nan")))
        for prm in basis.params:
            snap = max(snap, error_norm(m, solve_regularized_s(m, prm), rm.lift(solve_reduced(rm, prm))))
        checks += _rb_checks(f"s_M{M}", curve, affine_err, cert, total, snap, g)

    manifest = {}
    p = out / "rb_delta.csv"
    manifest[p.name] = write_csv(p, ["K", "N", "max_error_V", "max_error_vs_affine", "affine_error", "max_estimator"],
                                 rows_d, "Reduced basis convergence in the interaction radius")
    p = out / "rb_s.csv"
    manifest[p.name] = write_csv(p, ["M", "N", "max_rel_error_Vs", "max_error_Vs", "affine_error", "max_estimator"],
                                 rows_s, "Reduced basis convergence in the fractional power")
    return manifest, checks


def _rb_checks(tag, curve, affine_err, cert, total, snap, g: GreedyConfig):
    frac = cert / total if total else 1.0
    return [
        Check(f"rb_{tag}_weakly_decreasing", _weakly_decreasing(curve),
              "max test error per N: " + " ".join(f"{v:.3e}" for v in curve)),
        Check(f"rb_{tag}_plateau", curve[-1] <= g.plateau_factor * affine_err,
              f"final {curve[-1]:.3e} vs affine {affine_err:.3e}"),
        Check(f"rb_{tag}_certified", frac >= g.min_certified, f"estimator >= error at {cert}/{total}"),
        Check(f"rb_{tag}_snapshot_reproduction", snap <= 1e-10, f"max {snap:.2e}"),
    ]


# --------------------------------------------------------------------------- validate

def run_validate(cfg: StudyConfig, out: Path):
    """Invariant checks at desk scale; the heavy convergence studies have their own commands."""
    mesh = cfg.mesh_obj()
    k = cfg.kernel
    rng = np.random.default_rng([cfg.seed, 3])
    checks = []
    q = QuadratureConfig()

    # nodal exactness of the affine-delta surrogate, optionally from a stored offline cache
    p = make_partition(k.delta_min, k.delta_max, cfg.affine_delta.K[0])
    dec, unreadable = None, ""
    if cfg.affine_delta.anchors_file:
        try:
            anchors, mats = load_anchors(cfg.affine_delta.anchors_file)
            if mats[0].shape != (mesh.n_dofs, mesh.n_dofs):
                raise ValueError(f"anchor matrices have shape {mats[0].shape}, mesh needs {mesh.n_dofs}")
            p = DeltaPartition(anchors)
            dec = AffineDecompositionDelta(p, mats, CASE2, k.s)
        except (OSError, ValueError, zipfile.BadZipFile) as exc:
            unreadable = f"unusable anchor file: {exc}"
    else:
        dec = build_affine_delta(mesh, p, k.s, CASE2, q)
    bad = []
    if dec is not None:
        for case in (CASE1, CASE2):
            dec.case = case
            for i, d in enumerate(p.anchors):
                fresh = assemble_nonlocal(mesh, KernelSpec(s=k.s, delta=float(d)), q)
                if not np.array_equal(dec.matrix(float(d)), fresh):
                    bad.append((case, i))
    detail = unreadable or (f"mismatching anchors {bad}" if bad else "all anchors")
    checks.append(Check("nodal_exactness_delta", dec is not None and not bad, detail))

    grid = _grid(k, 4)
    sm = build_s_model(mesh, k.s_delta, grid, eps=cfg.affine_s.eps, rho=cfg.affine_s.rho, delta_p=k.delta_p)
    bad = [i for i, s in enumerate(grid.nodes)
           if not np.array_equal(sm.decomposition.matrix(float(s), rho=0.0), sm.decomposition.matrices[i])]
    checks.append(Check("nodal_exactness_s", not bad, f"mismatching nodes {bad}" if bad else "all nodes"))

    # splitting invariance
    M = assemble_mass(mesh)
    worst = 0.0
    for s in (1 / 3, 1 / 2):
        mats = [assemble_nonlocal(mesh, KernelSpec(s=s, delta=dp), q) + splitting_constant(dp, 1, s) * M
                for dp in (1.0, 1.5, 2.0)]
        for B in mats[1:]:
            worst = max(worst, np.max(np.abs(B - mats[0])) / np.max(np.abs(mats[0])))
    checks.append(Check("splitting_invariance", worst <= 1e-8, f"max relative difference {worst:.2e}"))

    # quadrature against the adaptive oracle (small sample; the test suite runs the full one)
    worst = 0.0
    for s in (1 / 3, 1 / 2):
        for delta in (0.25, 1.0):
            spec = KernelSpec(s=s, delta=delta)
            A = assemble_nonlocal(mesh, spec, q)
            band = int(math.ceil(delta / mesh.h)) + 1
            for _ in range(5):
                i = int(rng.integers(mesh.n_dofs))
                j = int(np.clip(i + rng.integers(-band, band + 1), 0, mesh.n_dofs - 1))
                ref = oracle_entry(mesh, spec, i, j)
                worst = max(worst, abs(A[i, j] - ref) / max(abs(ref), 1e-300))
    checks.append(Check("quadrature_vs_oracle", worst <= 1e-6, f"max relative deviation {worst:.2e}"))

    # coefficient identities
    ds = rng.uniform(k.delta_min, k.delta_max, 1000)
    pu = max(max(abs(coeffs_case1(d, p, s=k.s).sum() - 1), abs(coeffs_case2(d, p).sum() - 1)) for d in ds)
    checks.append(Check("partition_of_unity", pu <= 1e-10, f"max deviation {pu:.2e}"))
    worst = 0.0
    for Mdeg in (1, 4, 8, 12):
        g = _grid(k, Mdeg)
        for s in rng.uniform(k.s_min, k.s_max, 50):
            th = lagrange_coefficients(s, g)
            for pw in range(Mdeg + 1):
                worst = max(worst, abs(th @ g.nodes**pw - s**pw))
    checks.append(Check("lagrange_reproduction", worst <= 1e-10, f"max deviation {worst:.2e}"))

    worst = -math.inf
    xi_log = np.linspace(-40.0, 0.0, 10**5)
    for _ in range(20):
        alpha, kk, delta = rng.uniform(0.05, 2), int(rng.integers(0, 7)), rng.uniform(0.1, 3)
        xi = delta * np.exp(xi_log)
        num = np.max(xi**alpha * np.abs(np.log(xi)) ** kk)
        worst = max(worst, num - log_sup_bound(alpha, kk, delta))
    checks.append(Check("log_sup_bound", worst <= 0, f"max excess {worst:.2e}"))

    rows = [(c.name, int(c.passed), c.detail) for c in checks]
    manifest = {}
    path = out / "validate_checks.csv"
    manifest[path.name] = write_csv(path, ["check", "passed", "detail"], rows, "Invariant checks")
    return manifest, checks


COMMANDS = {
    "snapshots": run_snapshots,
    "affine-delta": run_affine_delta,
    "affine-s": run_affine_s,
    "rb": run_rb,
    "validate": run_validate,
}


def run_command(name: str, cfg: StudyConfig, out=None) -> RunReport:
    out = Path(cfg.out if out is None else out)
    if cfg.mesh.mesh_exp >= 9:
        warnings.warn(f"h = 2^-{cfg.mesh.mesh_exp}: dense assembly and solves get slow at this size", stacklevel=2)
    report = RunReport(name, cfg.to_dict(), versions())
    t0 = time.perf_counter()
    manifest, checks = COMMANDS[name](cfg, out)
    report.timings["total_s"] = time.perf_counter() - t0
    report.manifest = manifest
    report.checks = checks
    report.write(out)
    return report
