import csv
import json
from pathlib import Path

import numpy as np
import pytest

from roconvex import cli


def write_config(tmp_path, name, cfg):
    p = tmp_path / name
    p.write_text(json.dumps(cfg), encoding="utf-8")
    return str(p)


def base_config(tmp_path, **over):
    cfg = {
        "model": {"name": "ksd"},
        "convexify": {"N": 300, "r": 2.5, "k_max": 10},
        "out": str(tmp_path / "out"),
    }
    cfg.update(over)
    return cfg


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.reader(fh))


def test_validate_config_ok(tmp_path):
    path = write_config(tmp_path, "c.json", base_config(tmp_path))
    assert cli.main(["validate-config", "--config", path]) == 0


def test_unknown_key_rejected(tmp_path):
    cfg = base_config(tmp_path)
    cfg["mystery"] = 1
    path = write_config(tmp_path, "c.json", cfg)
    assert cli.main(["validate-config", "--config", path]) == cli.EXIT_CONFIG


def test_unknown_model_param_rejected(tmp_path):
    cfg = base_config(tmp_path)
    cfg["model"]["params"] = {"frobnicate": True}
    path = write_config(tmp_path, "c.json", cfg)
    assert cli.main(["validate-config", "--config", path]) == cli.EXIT_CONFIG


def test_invalid_json_reports_line(tmp_path, capsys):
    p = tmp_path / "broken.json"
    p.write_text('{\n  "model": ,\n}', encoding="utf-8")
    assert cli.main(["validate-config", "--config", str(p)]) == cli.EXIT_CONFIG
    err = capsys.readouterr().err
    assert "broken.json:2" in err


def test_missing_experiment_block(tmp_path):
    path = write_config(tmp_path, "c.json", base_config(tmp_path))
    assert cli.main(["point", "--config", path]) == cli.EXIT_CONFIG


def test_point_command(tmp_path):
    cfg = base_config(tmp_path,
                      experiment={"F": [[0.2, 0.1], [0.1, 0.3]]})
    path = write_config(tmp_path, "c.json", cfg)
    assert cli.main(["point", "--config", path]) == 0
    rec = json.loads((tmp_path / "out" / "point.json").read_text())
    # |F| = sqrt(0.15) is below sqrt(2) - 1: conical branch 2 sqrt(2) |F|
    assert rec["W"] == pytest.approx(2.0 * np.sqrt(2.0 * 0.15))
    assert rec["W_envelope_analytic"] == pytest.approx(0.9)
    assert rec["W_relaxed"] <= rec["W"]
    assert rec["config_hash"] == cli.config_hash(cfg)
    assert rec["leaf_count"] >= 2
    meta = json.loads((tmp_path / "out" / "point.json.meta.json").read_text())
    assert meta["config_hash"] == rec["config_hash"]
    assert meta["version"]
    assert meta["bounding_box"]["norm"].startswith("componentwise")


def test_cli_flag_overrides(tmp_path):
    cfg = base_config(tmp_path, experiment={"F": [[0.0, 0.0], [0.0, 0.0]]})
    del cfg["model"]
    cfg["model"] = {"name": "ksd"}
    path = write_config(tmp_path, "c.json", cfg)
    out2 = str(tmp_path / "out2")
    assert cli.main(["point", "--config", path, "--N", "100",
                     "--r", "1.0", "--out", out2]) == 0
    meta = json.loads(Path(out2, "point.json.meta.json").read_text())
    assert meta["config"]["convexify"]["N"] == 100
    assert meta["config"]["convexify"]["r"] == 1.0


def test_surface_command_schema_and_determinism(tmp_path):
    cfg = base_config(
        tmp_path, threads=1,
        experiment={"axes": [[0, 0], [1, 1]], "delta": 0.5, "extent": 1.0})
    path = write_config(tmp_path, "c.json", cfg)
    assert cli.main(["surface", "--config", path]) == 0
    out = tmp_path / "out" / "surface.csv"
    rows = read_csv(out)
    assert rows[0] == ["row_kind", "i", "j", "c1", "c2", "W", "W_relaxed",
                       "W_envelope_analytic", "rel_error", "config_hash"]
    nodes = [r for r in rows[1:] if r[0] == "node"]
    assert len(nodes) == 25  # 5 x 5 grid
    assert rows[-1][0] == "summary"
    first = out.read_bytes()
    # identical bytes when re-run
    assert cli.main(["surface", "--config", path]) == 0
    assert out.read_bytes() == first
    # identical numeric columns with a different thread count (the config
    # hash column legitimately changes with the config)
    assert cli.main(["surface", "--config", path, "--threads", "2"]) == 0
    numeric = [r[:-1] for r in read_csv(out)]
    assert numeric == [r[:-1] for r in rows]


def test_convergence_command(tmp_path):
    cfg = base_config(
        tmp_path,
        experiment={"F": [[0.2, 0.1], [0.1, 0.3]],
                    "N_values": [50, 100], "repetitions": 2})
    path = write_config(tmp_path, "c.json", cfg)
    assert cli.main(["convergence", "--config", path]) == 0
    rows = read_csv(tmp_path / "out" / "convergence.csv")
    assert rows[0] == ["N", "W_relaxed", "error_vs_analytic",
                       "median_seconds", "config_hash"]
    assert len(rows) == 3
    assert float(rows[1][3]) > 0.0
    meta = json.loads((tmp_path / "out" / "convergence.csv.meta.json")
                      .read_text())
    assert "time_scaling_exponent" in meta


def damage_config(tmp_path, **over):
    cfg = {
        "model": {"name": "damage-nh1",
                  "params": {"dim": 2, "mu": 1.0, "lambda": 0.5, "D0": 0.3,
                             "Dinf": 0.9, "alpha_k": 0.0625}},
        "convexify": {"N": 400, "r": 2.0, "k_max": 1},
        "out": str(tmp_path / "out"),
    }
    cfg.update(over)
    return cfg


def test_material_path_command(tmp_path):
    cfg = damage_config(tmp_path, n_rot=4,
                        experiment={"t_max": 1.25, "dt": 0.05})
    path = write_config(tmp_path, "c.json", cfg)
    assert cli.main(["material-path", "--config", path]) == 0
    rows = read_csv(tmp_path / "out" / "material_path.csv")
    assert rows[0][:9] == ["t", "W", "W_relaxed", "W_relaxed_rot", "P11",
                           "P22", "P11_rot", "P22_rot", "alpha"]
    assert len(rows) == 7  # t = 1.0 .. 1.25
    first = rows[1]
    assert float(first[1]) == pytest.approx(0.0, abs=1e-12)  # W(I) = 0
    assert float(first[4]) == pytest.approx(0.0, abs=1e-12)  # P11(I) = 0
    # relaxed never exceeds unrelaxed
    for row in rows[1:]:
        assert float(row[2]) <= float(row[1]) + 1e-12


def test_microstructure_command(tmp_path):
    cfg = damage_config(
        tmp_path,
        experiment={"t": 1.3, "grid_m": 16, "epsilon": 0.25})
    cfg["convexify"]["N"] = 1000
    path = write_config(tmp_path, "c.json", cfg)
    assert cli.main(["microstructure", "--config", path]) == 0
    out = tmp_path / "out"
    tree_doc = json.loads((out / "tree.json").read_text())
    assert "minus" in tree_doc  # laminated at this load
    rows = read_csv(out / "coefficient.csv")
    assert rows[0] == ["x1", "x2", "leaf", "F11", "F12", "F21", "F22",
                       "config_hash"]
    assert len(rows) == 1 + 16 * 16
    disp = read_csv(out / "displacement.csv")
    assert disp[0] == ["x1", "x2", "u1", "u2", "config_hash"]
    meta = json.loads((out / "coefficient.csv.meta.json").read_text())
    assert meta["projection_residual"] <= 1e-8
    grid = np.asarray(meta["leaf_fractions_grid"])
    tree_fr = np.asarray(meta["leaf_fractions_tree"])
    assert np.abs(np.sort(grid) - np.sort(tree_fr)).max() <= 2.0 / 16


def test_microstructure_convex_point_has_single_phase(tmp_path):
    cfg = damage_config(
        tmp_path,
        experiment={"t": 1.05, "grid_m": 8, "epsilon": 0.25})
    path = write_config(tmp_path, "c.json", cfg)
    assert cli.main(["microstructure", "--config", path]) == 0
    tree_doc = json.loads((tmp_path / "out" / "tree.json").read_text())
    assert "minus" not in tree_doc
    u = np.array([[float(v) for v in row[2:4]]
                  for row in read_csv(tmp_path / "out" / "displacement.csv")[1:]])
    assert np.abs(u).max() <= 1e-12


def test_point_flags_unattained_envelope(tmp_path):
    cfg = {
        "model": {"name": "fail"},
        "convexify": {"N": 800, "r": 0.25, "k_max": 10},
        "experiment": {"F": [[0.0, 0.0], [0.0, 0.0]]},
        "out": str(tmp_path / "out"),
    }
    path = write_config(tmp_path, "c.json", cfg)
    assert cli.main(["point", "--config", path]) == 0
    rec = json.loads((tmp_path / "out" / "point.json").read_text())
    assert rec["W_envelope_analytic"] == 0.0
    assert 150.0 <= rec["W_relaxed"] < 324.0
    assert rec["envelope_attained"] is False


def test_numerical_failure_exit_code(tmp_path):
    cfg = damage_config(tmp_path, experiment={"F": [[1.2, 0.0], [0.0, 1.2]]})
    cfg["model"]["params"]["F_k"] = [[0.0, 0.0], [0.0, 0.0]]  # J's previous state is inadmissible
    path = write_config(tmp_path, "c.json", cfg)
    assert cli.main(["point", "--config", path]) == cli.EXIT_NUMERICAL


def test_config_hash_is_canonical():
    a = {"model": {"name": "ksd"}, "convexify": {"N": 10, "r": 1.0}}
    b = {"convexify": {"r": 1.0, "N": 10}, "model": {"name": "ksd"}}
    assert cli.config_hash(a) == cli.config_hash(b)
