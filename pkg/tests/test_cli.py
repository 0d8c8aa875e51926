import csv
import json
import math
from pathlib import Path

import pytest

from modeswitch.cli import main, run

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def read_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    return header, rows


def write_config(tmp_path, payload, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return path


def base_config(**overrides):
    cfg = json.loads((CONFIGS / "equal_profits.json").read_text())
    cfg.update(overrides)
    return cfg


def test_validate_command_reports_clean_model(tmp_path):
    out = tmp_path / "out"
    code = main(["validate", "--config", str(CONFIGS / "equal_profits.json"), "--out", str(out)])
    assert code == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["status"] == "ok"
    assert manifest["summary"]["ok"] is True
    header, rows = read_csv(out / "violations.csv")
    assert header == ["hypothesis", "witness", "measured"]
    assert rows == []


def test_validate_command_flags_broken_costs(tmp_path):
    cfg = base_config()
    cfg["model"]["c01"], cfg["model"]["c10"] = 1.0, 2.0
    out = tmp_path / "out"
    assert main(["validate", "--config", str(write_config(tmp_path, cfg)), "--out", str(out)]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["summary"]["ok"] is False
    _, rows = read_csv(out / "violations.csv")
    assert any("cost_order" in r[0] for r in rows)


def test_simulate_paths_csv_round_trips(tmp_path):
    cfg = base_config()
    cfg["numerics"] = {"scene": "paths", "steps": 6, "n_paths": 5, "seed": 3, "horizon": 1.0}
    out = tmp_path / "out"
    assert main(["simulate", "--config", str(write_config(tmp_path, cfg)), "--out", str(out)]) == 0
    header, rows = read_csv(out / "paths.csv")
    assert header == ["path", "step", "time", "x0_state", "x1_state"]
    assert len(rows) == 5 * 7
    # round-trippable: every cell parses back to its float
    for row in rows:
        assert math.isfinite(float(row[2]))
    assert (out / "paths.png").exists()


def test_solve_bsde_reports_closed_form(tmp_path):
    cfg = base_config()
    cfg["model"]["beta"] = 0.5
    cfg["numerics"] = {"scene": "lattice", "steps": 64, "seed": 1, "horizon": 2.0}
    cfg["bsde"] = {"driver_value": 1.0}
    out = tmp_path / "out"
    assert main(["solve-bsde", "--config", str(write_config(tmp_path, cfg)), "--out", str(out)]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["summary"]["y0"] == pytest.approx(2.0 * (1 - math.exp(-1.0)), abs=1e-12)
    assert (out / "bsde_y.csv").exists() and (out / "bsde_z.csv").exists()


def test_solve_rbsde_outputs_table_with_barriers(tmp_path):
    cfg = base_config()
    cfg["numerics"] = {"scene": "lattice", "steps": 20, "seed": 1, "horizon": 1.0}
    cfg["rbsde"] = {"kind": "double", "driver": -1.0, "lower_scale": -0.2, "upper_scale": 0.4}
    out = tmp_path / "out"
    assert main(["solve-rbsde", "--config", str(write_config(tmp_path, cfg)), "--out", str(out)]) == 0
    header, rows = read_csv(out / "rbsde.csv")
    assert header == ["step", "node", "time", "y", "lower", "upper", "dk_plus", "dk_minus"]
    assert len(rows) == sum(k + 1 for k in range(21))
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["summary"]["residual_plus"] <= 1e-10


def test_solve_switching_emits_values_boundaries_strategy(tmp_path):
    out = tmp_path / "out"
    code = main(
        [
            "solve-switching",
            "--config",
            str(CONFIGS / "equal_profits.json"),
            "--out",
            str(out),
            "--no-plots",
        ]
    )
    assert code == 0
    header, rows = read_csv(out / "values.csv")
    assert header[:3] == ["step", "node", "time"]
    header_b, rows_b = read_csv(out / "boundaries.csv")
    assert header_b == ["time", "lower_boundary_state", "upper_boundary_state"]
    assert len(rows_b) == 101
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["summary"]["y1_0"] == pytest.approx(1.0, abs=2e-4)
    assert not (out / "switching.png").exists()


def test_solve_switching_determinism_across_workers(tmp_path):
    # identical config + seed, workers 1 vs 4: byte-identical tables
    cfg = json.loads((CONFIGS / "switching_lattice.json").read_text())
    cfg["numerics"]["steps"] = 12
    path = write_config(tmp_path, cfg)
    outs = []
    for tag, workers in (("a", "1"), ("b", "4")):
        out = tmp_path / tag
        assert (
            main(
                [
                    "solve-switching",
                    "--config",
                    str(path),
                    "--out",
                    str(out),
                    "--workers",
                    workers,
                    "--no-plots",
                ]
            )
            == 0
        )
        outs.append(out)
    emitted = json.loads((outs[0] / "manifest.json").read_text())["outputs"]
    assert {"values.csv", "boundaries.csv", "strategy.csv"} <= set(emitted)
    for name in emitted:
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


def test_seed_flag_overrides_config_and_env(tmp_path, monkeypatch):
    cfg = base_config()
    cfg["numerics"] = {"scene": "paths", "steps": 4, "n_paths": 3, "seed": 1, "horizon": 1.0}
    path = write_config(tmp_path, cfg)
    out_env = tmp_path / "env"
    monkeypatch.setenv("MODESWITCH_SEED", "99")
    assert main(["simulate", "--config", str(path), "--out", str(out_env), "--no-plots"]) == 0
    manifest = json.loads((out_env / "manifest.json").read_text())
    assert manifest["seed"] == 99
    out_flag = tmp_path / "flag"
    assert (
        main(
            ["simulate", "--config", str(path), "--out", str(out_flag), "--seed", "7", "--no-plots"]
        )
        == 0
    )
    assert json.loads((out_flag / "manifest.json").read_text())["seed"] == 7


def test_verify_passes_on_equal_profits(tmp_path):
    out = tmp_path / "out"
    code = main(
        [
            "verify",
            "--config",
            str(CONFIGS / "equal_profits.json"),
            "--out",
            str(out),
            "--no-plots",
        ]
    )
    assert code == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["summary"]["all_passed"] is True
    assert manifest["summary"]["optimal_strategy_max_switches"] == 0
    header, rows = read_csv(out / "checks.csv")
    assert header == ["check", "status", "measured", "bound"]
    assert all(r[1] == "PASS" for r in rows)
    names = {r[0] for r in rows}
    assert {"snell_vs_enumeration", "switching_vs_enumeration", "comparison_y"} <= names


def test_constants_command_values(tmp_path):
    out = tmp_path / "out"
    code = main(
        ["constants", "--config", str(CONFIGS / "equal_profits.json"), "--out", str(out)]
    )
    assert code == 0
    _, rows = read_csv(out / "constants.csv")
    values = {name: float(v) for name, v in rows}
    assert values["tail_constant_D"] == pytest.approx(math.e, rel=1e-12)
    assert values["truncation_horizon_T"] == pytest.approx(10.210340371976184, rel=1e-10)
    assert values["k_integral_ceiling"] == pytest.approx(418.60322954473067, rel=1e-10)


def test_schema_violation_gives_error_json_and_exit_2(tmp_path):
    cfg = base_config()
    cfg["numerics"]["scene"] = "abacus"
    out = tmp_path / "out"
    code = main(["simulate", "--config", str(write_config(tmp_path, cfg)), "--out", str(out)])
    assert code == 2
    err = json.loads((out / "error.json").read_text())
    assert err["error"]["code"] == "model.configuration"
    cfg = base_config()
    cfg["mystery"] = 1
    assert main(["simulate", "--config", str(write_config(tmp_path, cfg)), "--out", str(out)]) == 2


def test_unknown_model_field_rejected_via_cli(tmp_path):
    cfg = base_config()
    cfg["model"]["gamma"] = 3.0
    out = tmp_path / "out"
    code = main(["validate", "--config", str(write_config(tmp_path, cfg)), "--out", str(out)])
    assert code == 2
    err = json.loads((out / "error.json").read_text())
    assert "unknown model fields" in err["error"]["message"]


def test_json_format_output(tmp_path):
    out = tmp_path / "out"
    code = run(
        "constants",
        CONFIGS / "equal_profits.json",
        out,
        fmt="json",
        plots=False,
    )
    assert code == 0
    payload = json.loads((out / "constants.json").read_text())
    assert payload["columns"] == ["name", "value"]
    assert any(r[0] == "tail_constant_D" for r in payload["rows"])
