"""File formats: matrices, solution curves, reduced models and CSV tables."""
from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

REDUCED_FORMAT_VERSION = 1


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.16e}"


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence], title: str = "") -> int:
    """Write rows with a fixed float format; `title` goes in a leading '#' line. Returns the row count."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n = 0
    with path.open("w", newline="") as fh:
        if title:
            fh.write(f"# {title}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
            n += 1
    return n


def read_csv(path):
    """(header, rows as float arrays or strings); comment lines are skipped."""
    with Path(path).open() as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader)
    rows = []
    for r in reader:
        row = []
        for v in r:
            try:
                row.append(float(v))
            except ValueError:
                row.append(v)
        rows.append(row)
    return header, rows


def export_matrix(A: np.ndarray, path, fmt: str = "npy") -> Path:
    """Save as .npy, or as 'row col value' triplets of the nonzero entries."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "npy":
        np.save(path, A)
        return path if path.suffix == ".npy" else path.with_suffix(path.suffix + ".npy")
    if fmt == "txt":
        i, j = np.nonzero(A)
        with path.open("w") as fh:
            fh.write(f"# {A.shape[0]} {A.shape[1]}\n")
            for a, b in zip(i, j):
                fh.write(f"{a} {b} {A[a, b]:.17e}\n")
        return path
    raise ValueError(f"unknown matrix format {fmt!r}")


def import_matrix(path) -> np.ndarray:
    path = Path(path)
    if path.suffix == ".npy":
        return np.load(path)
    with path.open() as fh:
        shape = tuple(int(v) for v in fh.readline().lstrip("#").split())
        A = np.zeros(shape)
        for ln in fh:
            i, j, v = ln.split()
            A[int(i), int(j)] = float(v)
    return A


def export_solution(mesh, coeffs: np.ndarray, path, param=None, title: str = "") -> int:
    """Nodal values including the two zero boundary nodes."""
    vals = np.concatenate(([0.0], np.asarray(coeffs, dtype=float), [0.0]))
    if param is None:
        return write_csv(path, ["x", "value"], zip(mesh.nodes, vals), title)
    return write_csv(path, ["x", "value", "parameter"], ((x, v, param) for x, v in zip(mesh.nodes, vals)), title)


def save_reduced(rm, path) -> Path:
    """Parameter-independent reduced data; theta functions are rebuilt from the detailed model on load."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    grams = {f"gram_{k}": v for k, v in rm.grams.items()}
    np.savez(path, version=REDUCED_FORMAT_VERSION, variant=rm.variant, basis=rm.basis.vectors,
             params=np.asarray(rm.basis.params, dtype=float), A_red=rm.A_red, f_red=rm.f_red, R=rm.R,
             n_blocks=rm.n_blocks, **grams)
    return path if path.suffix == ".npz" else path.with_suffix(path.suffix + ".npz")


def load_reduced(path, model):
    """Rebuild a ReducedModel from `save_reduced` output and its detailed model."""
    from .rb import ReducedBasis, ReducedModel, estimator_data

    with np.load(path, allow_pickle=False) as z:
        version = int(z["version"])
        if version != REDUCED_FORMAT_VERSION:
            raise ValueError(f"reduced model format version {version} is not supported")
        if str(z["variant"]) != model.variant:
            raise ValueError(f"stored variant {z['variant']} does not match the model ({model.variant})")
        grams = {k[5:]: z[k] for k in z.files if k.startswith("gram_")}
        basis = ReducedBasis(z["basis"], [float(p) for p in z["params"]])
        A_red = z["A_red"]
        return ReducedModel(basis, model.variant, A_red, z["f_red"], model.operator.theta, model.rhs.theta, z["R"],
                            grams, estimator_data(model), int(z["n_blocks"]), A_red.shape[1])


def save_anchors(path, anchors: Sequence[float], matrices: Sequence[np.ndarray]) -> Path:
    """Offline cache of anchor radii and their stiffness matrices."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez(path, anchors=np.asarray(anchors, dtype=float), matrices=np.asarray(matrices))
    return path


def load_anchors(path):
    with np.load(path, allow_pickle=False) as z:
        anchors, mats = z["anchors"], z["matrices"]
    if mats.ndim != 3 or mats.shape[0] != anchors.size:
        raise ValueError(f"anchor file {path} holds {anchors.size} radii but {mats.shape[0]} matrices")
    return anchors, list(mats)
