import json
from pathlib import Path

import numpy as np
import pytest
import yaml

from nlrb.affine_delta import make_partition
from nlrb.assembly import KernelSpec, assemble_nonlocal
from nlrb.cli import EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_OK, main
from nlrb.detailed import build_delta_model
from nlrb.fem import build_mesh
from nlrb.rb import greedy_train, solve_reduced
from nlrb.storage import (export_matrix, export_solution, import_matrix, load_anchors, load_reduced, read_csv,
                          save_anchors, save_reduced, write_csv)
from nlrb.study import ConfigError, config_from_dict, validate_config

ROOT = Path(__file__).resolve().parents[1]
QUICK = str(ROOT / "configs" / "quick.yaml")


def test_csv_round_trip(tmp_path):
    rows = [(1, 0.1, "a"), (2, float("inf"), "b")]
    assert write_csv(tmp_path / "t.csv", ["i", "x", "tag"], rows, "Title") == 2
    header, back = read_csv(tmp_path / "t.csv")
    assert header == ["i", "x", "tag"]
    assert back[0] == [1.0, 0.1, "a"] and back[1][1] == float("inf")
    assert (tmp_path / "t.csv").read_text().startswith("# Title\n")


@pytest.mark.parametrize("fmt", ["npy", "txt"])
def test_matrix_round_trip(tmp_path, fmt):
    A = assemble_nonlocal(build_mesh(0, 1, 16), KernelSpec(s=0.5, delta=0.25))
    path = export_matrix(A, tmp_path / f"A.{fmt}", fmt)
    assert np.array_equal(import_matrix(path), A)
    with pytest.raises(ValueError):
        export_matrix(A, tmp_path / "A.bin", "bin")


def test_solution_export(tmp_path):
    mesh = build_mesh(0, 1, 8)
    n = export_solution(mesh, np.arange(7.0), tmp_path / "u.csv", param=0.25)
    header, rows = read_csv(tmp_path / "u.csv")
    assert n == 9 and header == ["x", "value", "parameter"]
    assert rows[0][1] == 0.0 and rows[-1][1] == 0.0 and rows[3][1] == 2.0


def test_reduced_model_round_trip(tmp_path):
    m = build_delta_model(build_mesh(0, 1, 16), 0.5, make_partition(1 / 16, 1, 4))
    _, rm, _ = greedy_train(m, np.linspace(1 / 16, 1, 9), 4)
    path = save_reduced(rm, tmp_path / "rm")
    back = load_reduced(path, m)
    for d in (0.1, 0.7):
        c = solve_reduced(rm, d)
        assert np.array_equal(solve_reduced(back, d), c)
        assert back.residual_norm(d, c) == rm.residual_norm(d, c)


def test_anchor_cache_round_trip(tmp_path):
    mats = [np.eye(3), 2 * np.eye(3)]
    save_anchors(tmp_path / "a.npz", [0.1, 0.2], mats)
    anchors, back = load_anchors(tmp_path / "a.npz")
    assert list(anchors) == [0.1, 0.2] and np.array_equal(back[1], mats[1])
    np.savez(tmp_path / "b.npz", anchors=np.array([0.1, 0.2, 0.3]), matrices=np.array(mats))
    with pytest.raises(ValueError):
        load_anchors(tmp_path / "b.npz")


def test_unknown_config_key_rejected():
    with pytest.raises(ConfigError):
        config_from_dict({"mesh": {"n_elem": 3}})
    with pytest.raises(ConfigError):
        config_from_dict({"bogus": 1})


def test_fractions_accepted():
    cfg = config_from_dict({"kernel": {"s_min": "1/3", "delta_min": "1/16"}})
    assert cfg.kernel.s_min == pytest.approx(1 / 3) and cfg.kernel.delta_min == 1 / 16
    validate_config(cfg)


def _write(tmp_path, data):
    p = tmp_path / "cfg.yaml"
    p.write_text(yaml.safe_dump(data))
    return str(p)


def test_cli_wide_interval_is_config_error(tmp_path, capsys):
    assert main(["validate", "--config", str(ROOT / "configs" / "wide_s_interval.yaml"), "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "coercivity" in capsys.readouterr().err


def test_cli_unknown_key_is_config_error(tmp_path):
    assert main(["validate", "--config", _write(tmp_path, {"greedy": {"Nmax": 3}})]) == EXIT_CONFIG


def test_cli_empty_snapshot_list_is_config_error(tmp_path):
    cfg = _write(tmp_path, {"mesh": {"mesh_exp": 4}, "snapshots": {"deltas": []}})
    assert main(["snapshots", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert not (tmp_path / "o").exists()


def test_cli_negative_seed_is_config_error(tmp_path):
    assert main(["validate", "--config", QUICK, "--seed", "-1", "--out", str(tmp_path)]) == EXIT_CONFIG


@pytest.fixture(scope="module")
def quick_runs(tmp_path_factory):
    out = tmp_path_factory.mktemp("quick")
    codes = {cmd: main([cmd, "--config", QUICK, "--out", str(out)])
             for cmd in ("snapshots", "affine-delta", "affine-s", "rb", "validate")}
    return out, codes


def test_cli_quick_runs_write_listed_files(quick_runs):
    out, codes = quick_runs
    assert set(codes.values()) <= {EXIT_OK, EXIT_CHECK_FAILED}
    assert codes["validate"] == EXIT_OK and codes["snapshots"] == EXIT_OK
    for cmd in codes:
        report = json.loads((out / f"report_{cmd}.json").read_text())
        assert report["config"]["seed"] == 0
        assert report["versions"]["numpy"] == np.__version__
        for name, n in report["manifest"].items():
            _, rows = read_csv(out / name)
            assert len(rows) == n


def test_every_csv_carries_a_title(quick_runs):
    out, _ = quick_runs
    for p in out.glob("*.csv"):
        assert p.read_text().startswith("# ")


def test_cli_is_deterministic(quick_runs, tmp_path):
    out, _ = quick_runs
    assert main(["rb", "--config", QUICK, "--out", str(tmp_path)]) in (EXIT_OK, EXIT_CHECK_FAILED)
    for p in tmp_path.glob("*.csv"):
        assert p.read_bytes() == (out / p.name).read_bytes()


def test_cli_seed_changes_test_sets(quick_runs, tmp_path):
    out, _ = quick_runs
    main(["rb", "--config", QUICK, "--out", str(tmp_path), "--seed", "7"])
    assert (tmp_path / "rb_delta.csv").read_bytes() != (out / "rb_delta.csv").read_bytes()


def test_corrupted_anchor_file_fails_validation(tmp_path):
    mesh = build_mesh(0, 1, 32)
    p = make_partition(1 / 16, 1, 3)
    mats = [assemble_nonlocal(mesh, KernelSpec(s=0.5, delta=float(d))) for d in p.anchors]
    good = save_anchors(tmp_path / "good.npz", p.anchors, mats)
    mats[2] = mats[2].copy()
    mats[2][5, 5] *= 1 + 1e-9
    bad = save_anchors(tmp_path / "bad.npz", p.anchors, mats)
    garbage = tmp_path / "garbage.npz"
    garbage.write_bytes(b"not a zip archive")
    base = {"mesh": {"mesh_exp": 5}, "affine_delta": {"K": [3]}}
    for path, code in ((good, EXIT_OK), (bad, EXIT_CHECK_FAILED), (garbage, EXIT_CHECK_FAILED)):
        cfg = dict(base, affine_delta={"K": [3], "anchors_file": str(path)})
        assert main(["validate", "--config", _write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == code
