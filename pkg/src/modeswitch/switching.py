"""Two-technology impulse control: value processes, strategies, and gains.

The switching problem is solved through the double-barrier reflected BSDE with
driver rate f(0, X^0) - f(1, X^1) and barriers

    L_t = -c01 e^{-beta t}  <=  0  <=  U_t = c10 e^{-beta t},

whose solution is the difference Y = Y1 - Y2 of the two mode values.  Y1 and
Y2 are then rebuilt by accumulating the mode profits plus the matching push
masses backward.  The optimal strategy starts in mode 0 and switches whenever
the difference touches the relevant barrier.

Profits and values are always evaluated on the mode-frozen diffusions X^0 and
X^1 sharing one Brownian driver, not on a controlled state that switches
dynamics; gains of arbitrary strategies follow the same convention.

Mode/timing conventions: a switch at step k pays e^{-beta t_k} times the cost
and changes the profit collected over [t_k, t_{k+1}); profits use the exact
per-step discount mass w_k.  Switch sequences are nondecreasing and alternate
0 -> 1 -> 0 -> ...; a simultaneous pair (a zero-length excursion) is legal in
the strategy algebra (it burns c01 + c10 for no profit change) although the
extractor never produces one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import PreconditionError, ShapeMismatchError
from .grid import (
    AdaptedProcess,
    LatticeTree,
    PathBatch,
    discount_factors,
    step_weights,
    unroll_tree,
)
from .rbsde import RBSDESolution, solve_rbsde_double


@dataclass
class SwitchingSolution:
    y1: AdaptedProcess
    y2: AdaptedProcess
    ydiff: AdaptedProcess
    reflected: RBSDESolution
    lower: AdaptedProcess
    upper: AdaptedProcess
    switch_region_0to1: list
    switch_region_1to0: list
    region_tol: float

    @property
    def value(self) -> float:
        """Y1 at time zero (the problem value when starting in mode 0)."""
        return float(self.y1.values[0][0]) if self.y1.values[0].size == 1 else float(
            np.mean(self.y1.values[0])
        )


@dataclass
class Strategy:
    """Per-scenario nondecreasing switch steps, alternating 0 -> 1 -> 0 -> ...

    ``switch_steps[s]`` lists the grid steps at which scenario s switches;
    even positions are 0 -> 1 switches, odd positions 1 -> 0.
    """

    switch_steps: list
    n_steps: int
    finite_switch_count: bool = True

    def __post_init__(self):
        for s, steps in enumerate(self.switch_steps):
            prev = -1
            for pos, k in enumerate(steps):
                if not 0 <= k <= self.n_steps:
                    raise ValueError(f"scenario {s}: switch step {k} outside the grid")
                if k < prev:
                    raise ValueError(f"scenario {s}: switch steps must be nondecreasing")
                prev = k

    @property
    def n_scenarios(self) -> int:
        return len(self.switch_steps)

    def max_switches(self) -> int:
        return max((len(s) for s in self.switch_steps), default=0)

    def mode_paths(self) -> np.ndarray:
        """Mode xi_k per (scenario, step); a switch at step k applies from k on."""
        modes = np.zeros((self.n_scenarios, self.n_steps + 1), dtype=int)
        for s, steps in enumerate(self.switch_steps):
            mode = 0
            for k in steps:
                mode = 1 - mode
                modes[s, k:] = mode
                # simultaneous pairs cancel: later flips at the same k overwrite
        return modes


@dataclass(frozen=True)
class GainEstimate:
    mean: float
    std_error: float
    n_scenarios: int


@dataclass(frozen=True)
class AdmissibilityReport:
    admissible: bool
    profit_estimate: float
    cost_estimate: float
    finite_switch_count: bool

    def __bool__(self):
        return self.admissible


def switching_driver(spec, scene) -> AdaptedProcess:
    """Driver rate f(0, X^0_t) - f(1, X^1_t) on the scene."""
    return AdaptedProcess.from_node_function(
        scene, lambda k, x0, x1: spec.profit_at(0, x0) - spec.profit_at(1, x1)
    )


def cost_barriers(spec, scene):
    lower = AdaptedProcess.from_time_function(
        scene, lambda t: -spec.c01 * math.exp(-spec.beta * t)
    )
    upper = AdaptedProcess.from_time_function(
        scene, lambda t: spec.c10 * math.exp(-spec.beta * t)
    )
    return lower, upper


def _default_region_tol(scene) -> float:
    return 1e-10 if isinstance(scene, LatticeTree) else 1e-10


def solve_switching(spec, scene, region_tol: float | None = None) -> SwitchingSolution:
    """Solve the switching system on a scene whose horizon came from truncation.

    Runs the double-barrier reflected solve for Y = Y1 - Y2, rebuilds
    Y1_k = w_k f(0, X^0_k) + P+_k + E[Y1_{k+1}|F_k] (and Y2 with P-), and marks
    the switch regions where the difference touches a barrier.
    """
    lower, upper = cost_barriers(spec, scene)
    driver = switching_driver(spec, scene)
    reflected = solve_rbsde_double(driver, lower, upper, scene, spec.beta, mode="direct")

    n = scene.n_steps
    w = step_weights(scene.grid, spec.beta)
    y1 = [None] * (n + 1)
    y2 = [None] * (n + 1)
    y1[n] = np.zeros(scene.n_nodes(n))
    y2[n] = np.zeros(scene.n_nodes(n))
    for k in range(n - 1, -1, -1):
        f0 = np.asarray(spec.profit_at(0, scene.states(0, k)), dtype=float)
        f1 = np.asarray(spec.profit_at(1, scene.states(1, k)), dtype=float)
        y1[k] = w[k] * f0 + reflected.wdk_plus.values[k] + scene.condexp(k, y1[k + 1])
        y2[k] = w[k] * f1 + reflected.wdk_minus.values[k] + scene.condexp(k, y2[k + 1])

    tol = _default_region_tol(scene) if region_tol is None else region_tol
    ydiff = reflected.y
    region01 = [ydiff.values[k] <= lower.values[k] + tol for k in range(n + 1)]
    region10 = [ydiff.values[k] >= upper.values[k] - tol for k in range(n + 1)]
    return SwitchingSolution(
        AdaptedProcess(scene, y1),
        AdaptedProcess(scene, y2),
        ydiff,
        reflected,
        lower,
        upper,
        region01,
        region10,
        tol,
    )


def coupled_values(spec, scene):
    """Cross-check: the coupled obstacle recursion solved as a 2x2 fixed point.

    V1_k = max(w_k f0 + E[V1_{k+1}], V2_k - c01 e^{-beta t_k}) and symmetrically
    for V2; the two switch branches cannot bind together, so the system has the
    explicit per-node resolution used here.  Returns (V1, V2).
    """
    n = scene.n_steps
    w = step_weights(scene.grid, spec.beta)
    disc = discount_factors(scene.grid, spec.beta)
    v1 = [None] * (n + 1)
    v2 = [None] * (n + 1)
    v1[n] = np.zeros(scene.n_nodes(n))
    v2[n] = np.zeros(scene.n_nodes(n))
    for k in range(n - 1, -1, -1):
        f0 = np.asarray(spec.profit_at(0, scene.states(0, k)), dtype=float)
        f1 = np.asarray(spec.profit_at(1, scene.states(1, k)), dtype=float)
        a1 = w[k] * f0 + scene.condexp(k, v1[k + 1])
        a2 = w[k] * f1 + scene.condexp(k, v2[k + 1])
        lo, hi = -spec.c01 * disc[k], spec.c10 * disc[k]
        d = np.clip(a1 - a2, lo, hi)
        v2[k] = np.where(a1 - a2 > hi, a1 - hi, a2)
        v1[k] = v2[k] + d
    return AdaptedProcess(scene, v1), AdaptedProcess(scene, v2)


def _region_masks(sol: SwitchingSolution, tol: float):
    n = sol.ydiff.n_steps
    r01 = [sol.ydiff.values[k] <= sol.lower.values[k] + tol for k in range(n + 1)]
    r10 = [sol.ydiff.values[k] >= sol.upper.values[k] - tol for k in range(n + 1)]
    return r01, r10


def extract_strategy(sol: SwitchingSolution, scene, tol: float | None = None, max_unroll_steps: int = 20) -> Strategy:
    """Walk each scenario forward through the switch regions.

    In mode 0 the first step with Y1 = -c01 e^{-beta t} + Y2 triggers a switch,
    in mode 1 the first step with Y2 = -c10 e^{-beta t} + Y1; alternating until
    the horizon.  Region disjointness is asserted first, so the produced times
    are strictly increasing.  Lattice scenes are unrolled into their 2^N paths
    (desk scale only).
    """
    tol = sol.region_tol if tol is None else tol
    r01, r10 = _region_masks(sol, tol)
    n = scene.n_steps
    for k in range(n + 1):
        if np.any(r01[k] & r10[k]):
            raise PreconditionError(
                f"switch regions overlap at step {k}: tol too large for the barrier gap"
            )

    if isinstance(scene, LatticeTree):
        if n > max_unroll_steps:
            raise PreconditionError(
                f"per-scenario extraction on a {n}-step lattice would enumerate 2^{n} paths; "
                "use a path scene or raise max_unroll_steps"
            )
        batch = unroll_tree(scene)
        ups = np.concatenate(
            [
                np.zeros((batch.n_paths, 1), dtype=int),
                np.cumsum((batch.increments > 0).astype(int), axis=1),
            ],
            axis=1,
        )
        active01 = np.column_stack([r01[k][ups[:, k]] for k in range(n + 1)])
        active10 = np.column_stack([r10[k][ups[:, k]] for k in range(n + 1)])
    else:
        active01 = np.column_stack(r01)
        active10 = np.column_stack(r10)

    steps_out = []
    for s in range(active01.shape[0]):
        steps = []
        mode = 0
        k = 0
        while k <= n:
            active = active01[s] if mode == 0 else active10[s]
            hits = np.flatnonzero(active[k:])
            if hits.size == 0:
                break
            k = k + int(hits[0])
            steps.append(k)
            mode = 1 - mode
            k += 1  # regions are disjoint, so the next switch is strictly later
        steps_out.append(steps)
    return Strategy(steps_out, n)


def evaluate_gain(spec, strategy: Strategy, batch: PathBatch, include_tail: bool = True) -> GainEstimate:
    """Mean discounted gain of a strategy over the scenarios of a batch.

    Per scenario: sum_k w_k f(xi_k, X^{xi_k}_k) over [0, T) plus, when
    ``include_tail`` is set, the frozen-mode tail e^{-beta T} f(xi_N, X_N)/beta
    (bias at most ||f|| e^{-beta T}/beta), minus the discounted switch costs.
    Truncated accounting (``include_tail=False``) matches the zero-terminal
    solver values exactly.
    """
    if strategy.n_scenarios != batch.n_paths:
        raise ShapeMismatchError(
            f"strategy holds {strategy.n_scenarios} scenarios, batch {batch.n_paths} paths"
        )
    if strategy.n_steps != batch.n_steps:
        raise ShapeMismatchError("strategy and batch use different grids")
    n = batch.n_steps
    w = step_weights(batch.grid, spec.beta)
    disc = discount_factors(batch.grid, spec.beta)
    modes = strategy.mode_paths()
    prof0 = np.asarray(spec.profit_at(0, batch.states0), dtype=float)
    prof1 = np.asarray(spec.profit_at(1, batch.states1), dtype=float)
    prof = np.where(modes == 0, prof0, prof1)
    gains = prof[:, :-1] @ w
    if include_tail:
        if spec.beta <= 0.0:
            raise PreconditionError("the frozen-mode tail needs beta > 0")
        gains = gains + disc[n] * prof[:, n] / spec.beta
    for s, steps in enumerate(strategy.switch_steps):
        mode = 0
        for k in steps:
            gains[s] -= disc[k] * spec.switch_cost(mode)
            mode = 1 - mode
    mean = float(np.mean(gains))
    stderr = float(np.std(gains, ddof=1) / math.sqrt(len(gains))) if len(gains) > 1 else 0.0
    return GainEstimate(mean, stderr, len(gains))


def check_admissible(spec, strategy: Strategy, batch: PathBatch) -> AdmissibilityReport:
    """Admissibility per the two finiteness requirements.

    The discounted profit integral is always finite here (f bounded, beta > 0)
    and is reported; the discounted cost sum is finite on a grid exactly when
    the switch count is, so the verdict follows finite_switch_count.
    """
    if strategy.n_scenarios != batch.n_paths:
        raise ShapeMismatchError("strategy/batch scenario counts differ")
    w = step_weights(batch.grid, spec.beta)
    disc = discount_factors(batch.grid, spec.beta)
    modes = strategy.mode_paths()
    prof0 = np.asarray(spec.profit_at(0, batch.states0), dtype=float)
    prof1 = np.asarray(spec.profit_at(1, batch.states1), dtype=float)
    prof = np.where(modes == 0, prof0, prof1)
    profit = float(np.mean(prof[:, :-1] @ w))
    cost = 0.0
    for steps in strategy.switch_steps:
        mode = 0
        for k in steps:
            cost += disc[k] * spec.switch_cost(mode)
            mode = 1 - mode
    cost /= max(strategy.n_scenarios, 1)
    return AdmissibilityReport(
        admissible=strategy.finite_switch_count,
        profit_estimate=profit,
        cost_estimate=cost,
        finite_switch_count=strategy.finite_switch_count,
    )


def switch_boundaries(sol: SwitchingSolution):
    """Per-step boundary states (time, lower boundary state, upper boundary state).

    The lower boundary is the largest mode-0 state inside the 0 -> 1 region,
    the upper boundary the smallest mode-1 state inside the 1 -> 0 region
    (NaN when a region is empty at that step); a plot-ready table.
    """
    scene = sol.ydiff.scene
    times = scene.grid.times
    rows = []
    for k in range(scene.n_steps + 1):
        x0 = np.asarray(scene.states(0, k), dtype=float)
        x1 = np.asarray(scene.states(1, k), dtype=float)
        r01 = sol.switch_region_0to1[k]
        r10 = sol.switch_region_1to0[k]
        low = float(np.max(x0[r01])) if np.any(r01) else math.nan
        high = float(np.min(x1[r10])) if np.any(r10) else math.nan
        rows.append((times[k], low, high))
    return rows
