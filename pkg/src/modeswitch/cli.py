"""Command-line front end: config ingestion, solver dispatch, reports.

Commands
--------
validate        probe the declared model hypotheses
simulate        export the discretised scene (paths or lattice nodes)
solve-bsde      plain backward equation on the configured scene
solve-rbsde     reflected backward equation (single or double barrier)
solve-switching switching values, regions, boundaries, strategy
verify          oracle cross-check suite on an in-budget shrink
constants       closed-form tail and K-integral ceilings for the model

Every command writes delimited tables plus a JSON run manifest into the
output directory, and (unless --no-plots) matplotlib figures alongside.
Identical config and seed give byte-identical tables for any worker count.
Env overrides: MODESWITCH_SEED, MODESWITCH_WORKERS.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, report
from .bsde import solve_bsde_finite, tail_constant, truncation_horizon
from .errors import ConfigurationError, ModeSwitchError
from .grid import AdaptedProcess, LatticeTree, TimeGrid, build_tree, simulate_paths, unroll_tree
from .model import ModelSpec, validate_spec
from .oracle import (
    EnumerationBudget,
    enumerate_stopping_values,
    enumerate_switching_strategies,
    strategy_gain_on_tree,
)
from .rbsde import k_integral_bound, solve_rbsde_double, solve_rbsde_lower
from .snell import snell_envelope
from .switching import (
    cost_barriers,
    extract_strategy,
    solve_switching,
    switch_boundaries,
    switching_driver,
)

COMMANDS = (
    "validate",
    "simulate",
    "solve-bsde",
    "solve-rbsde",
    "solve-switching",
    "verify",
    "constants",
)

_NUMERICS_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "scene": {"enum": ["lattice", "paths"]},
        "steps": {"type": "integer", "minimum": 2},
        "n_paths": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer"},
        "horizon": {"type": "number", "exclusiveMinimum": 0},
        "tail_tol": {"type": "number", "exclusiveMinimum": 0},
        "lattice_tol": {"type": "number", "exclusiveMinimum": 0},
        "regression_tol": {"type": "number", "exclusiveMinimum": 0},
        "picard_tol": {"type": "number", "exclusiveMinimum": 0},
        "regression_degree": {"type": "integer", "minimum": 0},
        "penalization": {
            "type": "array",
            "items": {"type": "integer", "minimum": 1},
            "minItems": 1,
        },
    },
    "required": ["scene", "steps", "seed"],
}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "model": {"type": "object"},
        "numerics": _NUMERICS_SCHEMA,
        "validate": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"probes": {"type": "integer", "minimum": 1}},
        },
        "bsde": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "driver_value": {"type": "number"},
                "slope_y": {"type": "number", "maximum": 0},
                "lipschitz_C": {"type": "number", "minimum": 0},
            },
        },
        "rbsde": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["lower", "double"]},
                "mode": {"enum": ["direct", "penalized"]},
                "penalty_n": {"type": "integer", "minimum": 1},
                "driver": {
                    "anyOf": [{"enum": ["profit_diff"]}, {"type": "number"}]
                },
                "lower_scale": {"type": "number"},
                "upper_scale": {"type": "number"},
            },
        },
        "constants": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "epsilon": {"type": "number", "exclusiveMinimum": 0},
                "sup_L_plus_sq": {"type": "number", "minimum": 0},
            },
        },
    },
    "required": ["model", "numerics"],
}

_NUMERIC_DEFAULTS = {
    "n_paths": 1000,
    "horizon": None,
    "tail_tol": 1e-4,
    "lattice_tol": 1e-10,
    "regression_tol": 1e-3,
    "picard_tol": 1e-12,
    "regression_degree": 2,
    "penalization": [10, 100, 1000],
}


class RunConfig:
    """Parsed and defaulted configuration for one CLI run."""

    def __init__(self, raw: dict):
        import jsonschema

        try:
            jsonschema.validate(raw, CONFIG_SCHEMA)
        except jsonschema.ValidationError as exc:
            raise ConfigurationError(f"config schema violation: {exc.message}") from exc
        self.raw = raw
        self.spec = ModelSpec.from_dict(raw["model"])
        self.numerics = dict(_NUMERIC_DEFAULTS)
        self.numerics.update(raw["numerics"])
        self.validate_params = {"probes": 64, **raw.get("validate", {})}
        self.bsde_params = {"driver_value": 1.0, "slope_y": 0.0, "lipschitz_C": 0.0}
        self.bsde_params.update(raw.get("bsde", {}))
        self.rbsde_params = {
            "kind": "double",
            "mode": "direct",
            "penalty_n": 100,
            "driver": "profit_diff",
            "lower_scale": -self.spec.c01,
            "upper_scale": self.spec.c10,
        }
        self.rbsde_params.update(raw.get("rbsde", {}))
        self.constants_params = {"epsilon": None, "sup_L_plus_sq": 0.0}
        self.constants_params.update(raw.get("constants", {}))

    def horizon(self) -> float:
        if self.numerics["horizon"] is not None:
            return float(self.numerics["horizon"])
        t = truncation_horizon(
            self.spec, self.bsde_params["lipschitz_C"], self.numerics["tail_tol"]
        )
        return max(t, self.numerics["steps"] * 1e-6)

    def scene(self, seed: int):
        grid = TimeGrid(self.horizon(), self.numerics["steps"])
        if self.numerics["scene"] == "lattice":
            return build_tree(self.spec, grid)
        batch = simulate_paths(self.spec, grid, self.numerics["n_paths"], seed)
        batch.regression_degree = self.numerics["regression_degree"]
        return batch


def _write_table(out_dir: Path, name: str, header, rows, fmt: str):
    rows = [tuple(r) for r in rows]
    if fmt == "json":
        path = out_dir / f"{name}.json"
        payload = {"columns": list(header), "rows": [list(r) for r in rows]}
        path.write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")
        return path
    path = out_dir / f"{name}.csv"
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    return path


def _adapted_rows(process: AdaptedProcess):
    return process.to_rows()


def _rbsde_rows(sol, lower, upper):
    times = sol.y.scene.grid.times
    for k, y in enumerate(sol.y.values):
        lo = lower.values[k] if lower is not None else np.full_like(y, -math.inf)
        hi = upper.values[k] if upper is not None else np.full_like(y, math.inf)
        for node in range(len(y)):
            yield (
                k,
                node,
                times[k],
                y[node],
                lo[node],
                hi[node],
                sol.dk_plus.values[k][node],
                sol.dk_minus.values[k][node],
            )


class _Run:
    def __init__(self, args):
        self.out_dir = Path(args.out)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        raw = json.loads(Path(args.config).read_text())
        self.config = RunConfig(raw)
        env_seed = os.environ.get("MODESWITCH_SEED")
        env_workers = os.environ.get("MODESWITCH_WORKERS")
        self.seed = (
            args.seed
            if args.seed is not None
            else int(env_seed) if env_seed is not None else self.config.numerics["seed"]
        )
        self.workers = (
            args.workers
            if args.workers is not None
            else int(env_workers) if env_workers is not None else 1
        )
        self.fmt = args.format
        self.plots = not args.no_plots
        self.outputs = []
        self.figures = []
        self.summary = {}

    def table(self, name, header, rows):
        path = _write_table(self.out_dir, name, header, rows, self.fmt)
        self.outputs.append(path.name)
        return path

    def figure(self, name, render, *render_args):
        if not self.plots:
            return None
        path = self.out_dir / f"{name}.png"
        render(*render_args, path)
        self.figures.append(path.name)
        return path

    def manifest(self, command, wall_time, status="ok"):
        payload = {
            "command": command,
            "status": status,
            "seed": self.seed,
            "workers": self.workers,
            "format": self.fmt,
            "package_version": __version__,
            "numpy_version": np.__version__,
            "wall_time_s": wall_time,
            "inputs": self.config.raw,
            "outputs": self.outputs,
            "figures": self.figures,
            "summary": self.summary,
        }
        path = self.out_dir / "manifest.json"
        path.write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")
        return path


def _cmd_validate(run: _Run):
    rep = validate_spec(run.config.spec, run.config.validate_params["probes"], run.seed)
    run.table(
        "violations",
        ("hypothesis", "witness", "measured"),
        [(v.hypothesis, json.dumps(v.witness), v.measured) for v in rep.violations],
    )
    run.summary["ok"] = rep.ok
    run.summary["n_violations"] = len(rep.violations)
    return 0


def _cmd_simulate(run: _Run):
    scene = run.config.scene(run.seed)
    if isinstance(scene, LatticeTree):
        rows = []
        times = scene.grid.times
        for k in range(scene.n_steps + 1):
            for node in range(k + 1):
                rows.append((k, node, times[k], scene.states0[k][node], scene.states1[k][node]))
        run.table("lattice", ("step", "node", "time", "x0_state", "x1_state"), rows)
        batch = unroll_tree(scene) if scene.n_steps <= 12 else None
    else:
        run.table("paths", ("path", "step", "time", "x0_state", "x1_state"), scene.to_rows())
        batch = scene
    if batch is not None:
        run.figure("paths", report.render_paths, batch)
    run.summary["scene"] = run.config.numerics["scene"]
    run.summary["steps"] = scene.n_steps
    return 0


def _bsde_driver(params):
    value, slope = params["driver_value"], params["slope_y"]
    return lambda t, y: value + slope * y


def _cmd_solve_bsde(run: _Run):
    scene = run.config.scene(run.seed)
    params = run.config.bsde_params
    lipschitz = max(params["lipschitz_C"], abs(params["slope_y"]))
    sol = solve_bsde_finite(
        _bsde_driver(params),
        0.0,
        scene,
        run.config.spec.beta,
        lipschitz_c=lipschitz,
        tol=run.config.numerics["picard_tol"],
    )
    run.table("bsde_y", ("step", "node", "time", "y"), _adapted_rows(sol.y))
    run.table("bsde_z", ("step", "node", "time", "z"), _adapted_rows(sol.z))
    run.figure("bsde", report.render_bsde, sol)
    run.summary["y0"] = float(np.mean(sol.y.values[0]))
    run.summary["picard_iters"] = sol.picard_iters
    run.summary["residual"] = sol.residual
    return 0


def _cmd_solve_rbsde(run: _Run):
    scene = run.config.scene(run.seed)
    spec = run.config.spec
    params = run.config.rbsde_params
    driver = (
        switching_driver(spec, scene)
        if params["driver"] == "profit_diff"
        else float(params["driver"])
    )
    lower = AdaptedProcess.from_time_function(
        scene, lambda t: params["lower_scale"] * math.exp(-spec.beta * t)
    )
    upper = AdaptedProcess.from_time_function(
        scene, lambda t: params["upper_scale"] * math.exp(-spec.beta * t)
    )
    kw = {"mode": params["mode"]}
    if params["mode"] == "penalized":
        kw["penalty_n"] = params["penalty_n"]
    if params["kind"] == "lower":
        sol = solve_rbsde_lower(driver, lower, scene, spec.beta, **kw)
        upper_out = None
    else:
        sol = solve_rbsde_double(driver, lower, upper, scene, spec.beta, **kw)
        upper_out = upper
    run.table(
        "rbsde",
        ("step", "node", "time", "y", "lower", "upper", "dk_plus", "dk_minus"),
        _rbsde_rows(sol, lower, upper_out),
    )
    run.figure("rbsde", report.render_rbsde, sol, lower, upper_out)
    run.summary["y0"] = float(np.mean(sol.y.values[0]))
    run.summary["residual_plus"] = sol.comp_residual_plus
    run.summary["residual_minus"] = sol.comp_residual_minus
    return 0


def _cmd_solve_switching(run: _Run):
    scene = run.config.scene(run.seed)
    spec = run.config.spec
    sol = solve_switching(spec, scene)
    rows = []
    times = scene.grid.times
    for k in range(scene.n_steps + 1):
        for node in range(scene.n_nodes(k)):
            rows.append(
                (
                    k,
                    node,
                    times[k],
                    sol.y1.values[k][node],
                    sol.y2.values[k][node],
                    sol.ydiff.values[k][node],
                    sol.lower.values[k][node],
                    sol.upper.values[k][node],
                    int(sol.switch_region_0to1[k][node]),
                    int(sol.switch_region_1to0[k][node]),
                )
            )
    run.table(
        "values",
        ("step", "node", "time", "y1", "y2", "ydiff", "lower", "upper", "switch01", "switch10"),
        rows,
    )
    run.table(
        "boundaries",
        ("time", "lower_boundary_state", "upper_boundary_state"),
        switch_boundaries(sol),
    )
    extractable = not isinstance(scene, LatticeTree) or scene.n_steps <= 12
    if extractable:
        strategy = extract_strategy(sol, scene)
        srows = []
        for s, steps in enumerate(strategy.switch_steps):
            for order, k in enumerate(steps):
                direction = "0->1" if order % 2 == 0 else "1->0"
                srows.append((s, order, k, times[k], direction))
        run.table("strategy", ("scenario", "order", "step", "time", "direction"), srows)
        run.summary["max_switches"] = strategy.max_switches()
    run.figure("switching", report.render_switching, sol)
    run.summary["y1_0"] = sol.value
    run.summary["y2_0"] = float(np.mean(sol.y2.values[0]))
    return 0


def _verify_checks(run: _Run):
    spec = run.config.spec
    full = solve_switching(spec, run.config.scene(run.seed))
    shrink_steps = min(run.config.numerics["steps"], 8)
    grid = TimeGrid(run.config.horizon(), shrink_steps)
    tree = build_tree(spec, grid)
    budget = EnumerationBudget(max_steps=12, max_switches=4)
    checks = []

    reward = AdaptedProcess.from_node_function(
        tree,
        lambda k, x0, x1: math.exp(-spec.beta * grid.times[k]) * spec.profit_at(0, x0),
    )
    env = snell_envelope(reward)
    enum = enumerate_stopping_values(reward, budget)
    checks.append(
        ("snell_vs_enumeration", abs(float(env.envelope.values[0][0]) - enum.value), 1e-10)
    )

    sol = solve_switching(spec, tree)
    sw = enumerate_switching_strategies(spec, tree, budget)
    checks.append(("switching_vs_enumeration", abs(sol.value - sw.best_gain), 1e-8))
    strategy = extract_strategy(sol, tree)
    attained = strategy_gain_on_tree(spec, tree, strategy)
    checks.append(("strategy_attains_value", abs(attained - sol.value), 1e-8))

    sandwich = max(
        sol.ydiff.max_over(sol.upper),
        sol.lower.max_over(sol.ydiff),
    )
    checks.append(("barrier_sandwich", max(sandwich, 0.0), 1e-12))
    checks.append(("complementarity_plus", sol.reflected.comp_residual_plus, 1e-10))
    checks.append(("complementarity_minus", sol.reflected.comp_residual_minus, 1e-10))

    overlap = 0
    for k in range(tree.n_steps + 1):
        overlap += int(np.sum(sol.switch_region_0to1[k] & sol.switch_region_1to0[k]))
    checks.append(("region_disjointness", float(overlap), 0.0))

    driver = switching_driver(spec, tree)
    lower, upper = cost_barriers(spec, tree)
    base = solve_rbsde_double(driver, lower, upper, tree, spec.beta)
    bumped = solve_rbsde_double(driver + 0.1, lower, upper, tree, spec.beta)
    comp_viol = max(base.y.max_over(bumped.y), 0.0)
    kcomp = max(
        max(
            float(np.max(bumped.wdk_plus.values[k] - base.wdk_plus.values[k]))
            for k in range(tree.n_steps + 1)
        ),
        0.0,
    )
    checks.append(("comparison_y", comp_viol, 1e-10))
    checks.append(("comparison_k_plus", kcomp, 1e-10))

    rows = [
        (name, "PASS" if measured <= bound else "FAIL", measured, bound)
        for name, measured, bound in checks
    ]
    run.summary["full_size_y1_0"] = full.value
    run.summary["shrunk_y1_0"] = sol.value
    run.summary["all_passed"] = all(r[1] == "PASS" for r in rows)
    run.summary["optimal_strategy_max_switches"] = strategy.max_switches()
    return rows


def _cmd_verify(run: _Run):
    rows = _verify_checks(run)
    run.table("checks", ("check", "status", "measured", "bound"), rows)
    run.figure("checks", report.render_checks, rows)
    return 0 if run.summary["all_passed"] else 1


def _cmd_constants(run: _Run):
    spec = run.config.spec
    params = run.config.constants_params
    lipschitz = run.config.bsde_params["lipschitz_C"]
    eps = params["epsilon"]
    if eps is None:
        eps = 0.05 / (6.0 * math.exp(1.0 / spec.beta))
    d = tail_constant(spec.bound_f, spec.beta, lipschitz)
    ceiling = k_integral_bound(spec.bound_f, spec.beta, spec.c10, params["sup_L_plus_sq"], eps)
    horizon = truncation_horizon(spec, lipschitz, run.config.numerics["tail_tol"])
    rows = [
        ("tail_constant_D", d),
        ("truncation_horizon_T", horizon),
        ("k_integral_ceiling", ceiling),
        ("epsilon", eps),
    ]
    run.table("constants", ("name", "value"), rows)
    run.summary.update({name: value for name, value in rows})
    return 0


_HANDLERS = {
    "validate": _cmd_validate,
    "simulate": _cmd_simulate,
    "solve-bsde": _cmd_solve_bsde,
    "solve-rbsde": _cmd_solve_rbsde,
    "solve-switching": _cmd_solve_switching,
    "verify": _cmd_verify,
    "constants": _cmd_constants,
}


def run(command: str, config_path, output_dir, seed=None, workers=None, fmt="csv", plots=True) -> int:
    """Programmatic entry point mirroring the CLI."""
    args = argparse.Namespace(
        config=config_path,
        out=output_dir,
        seed=seed,
        workers=workers,
        format=fmt,
        no_plots=not plots,
    )
    return _dispatch(command, args)


def _dispatch(command: str, args) -> int:
    started = time.monotonic()
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    runner = None
    try:
        runner = _Run(args)
        code = _HANDLERS[command](runner)
    except ModeSwitchError as exc:
        payload = {"error": {"code": exc.code, "message": str(exc)}}
        (out_dir / "error.json").write_text(json.dumps(payload, indent=1) + "\n")
        print(json.dumps(payload), file=sys.stderr)
        if runner is not None:
            runner.summary["error"] = payload["error"]
            runner.manifest(command, time.monotonic() - started, status="error")
        return 2
    runner.manifest(command, time.monotonic() - started)
    if code != 0:
        payload = {"error": {"code": f"{command}.failed", "message": "see checks table"}}
        (out_dir / "error.json").write_text(json.dumps(payload, indent=1) + "\n")
        print(json.dumps(payload), file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="modeswitch",
        description="two-technology optimal switching solver",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="JSON config path")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--workers", type=int, default=None, help="worker count (no effect on results)")
    parser.add_argument("--format", choices=("csv", "json"), default="csv")
    parser.add_argument("--no-plots", action="store_true", help="skip figure rendering")
    args = parser.parse_args(argv)
    try:
        return _dispatch(args.command, args)
    except (OSError, json.JSONDecodeError) as exc:
        payload = {"error": {"code": "cli.io", "message": str(exc)}}
        print(json.dumps(payload), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
