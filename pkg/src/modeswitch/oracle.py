"""Brute-force references for desk-scale verification.

Stopping and switching optima are recomputed on the non-recombining tree of
up/down histories: every decision point of every history is enumerated
explicitly with its path probability, and values of sibling subtrees combine
additively, so enumerating rule combinations reduces to per-subtree maxima
(scalar dominance pruning).  Nothing is shared with the production solvers:
no conditional-expectation operator, no clamp recursion.

Strategy families are additionally materialised one by one when small enough
to list, which cross-checks the subtree-max logic itself on tiny scenes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BudgetExceededError, PreconditionError
from .grid import AdaptedProcess, LatticeTree, TimeGrid, discount_factors, step_weights
from .switching import Strategy


@dataclass(frozen=True)
class EnumerationBudget:
    """Hard caps enforced before any enumeration starts."""

    max_steps: int = 12
    max_switches: int = 4

    def __post_init__(self):
        if not 1 <= self.max_steps <= 12:
            raise ValueError("max_steps must lie in [1, 12]")
        if not 0 <= self.max_switches <= 4:
            raise ValueError("max_switches must lie in [0, 4]")


def _require_lattice(scene, budget):
    if not isinstance(scene, LatticeTree):
        raise PreconditionError("enumeration oracles run on lattice scenes only")
    n = scene.n_steps
    if n > budget.max_steps:
        raise BudgetExceededError(
            f"{n}-step lattice exceeds the {budget.max_steps}-step budget: "
            f"2^{n} = {1 << n} histories"
        )
    if scene.p != 0.5:
        raise PreconditionError("oracles assume p = 1/2 branching")
    return n


@dataclass(frozen=True)
class StoppingEnumeration:
    value: float
    stop_rule: list  # per-level boolean arrays: stop at first marked node
    n_histories: int


def enumerate_stopping_values(reward: AdaptedProcess, budget: EnumerationBudget) -> StoppingEnumeration:
    """Exact sup over adapted stopping rules of E[U_theta] on a small lattice.

    Walks the binary history tree: at each history the rule either stops
    (collect U there) or continues into the two half-probability subtrees,
    whose contributions are independent, so the best rule is assembled from
    per-subtree maxima.  No memoisation across recombining histories.
    """
    scene = reward.scene
    n = _require_lattice(scene, budget)
    u = reward.values

    def best(k: int, j: int) -> float:
        # memo-free walk of the full binary history tree
        if k == n:
            return float(u[n][j])
        cont = 0.5 * best(k + 1, j) + 0.5 * best(k + 1, j + 1)
        return max(float(u[k][j]), cont)

    value = best(0, 0)

    # stopping rule from per-level subtree maxima (same arithmetic, level form)
    vals = [None] * (n + 1)
    vals[n] = np.asarray(u[n], dtype=float).copy()
    rule = [None] * (n + 1)
    rule[n] = np.ones(n + 1, dtype=bool)
    for k in range(n - 1, -1, -1):
        cont = 0.5 * vals[k + 1][:-1] + 0.5 * vals[k + 1][1:]
        rule[k] = np.asarray(u[k], dtype=float) >= cont
        vals[k] = np.maximum(u[k], cont)
    assert abs(vals[0][0] - value) <= 1e-12 * max(1.0, abs(value))
    return StoppingEnumeration(value, rule, 1 << n)


@dataclass(frozen=True)
class SwitchingEnumeration:
    best_gain: float
    best_strategy: Strategy
    strategies: list  # [(Strategy, gain)] when materialised, else []
    n_histories: int
    listed: bool


def _switch_ingredients(spec, tree):
    n = tree.n_steps
    w = step_weights(tree.grid, spec.beta)
    disc = discount_factors(tree.grid, spec.beta)
    prof = [
        [np.asarray(spec.profit_at(m, tree.states(m, k)), dtype=float) for k in range(n + 1)]
        for m in (0, 1)
    ]
    return n, w, disc, prof


def enumerate_switching_strategies(
    spec,
    tree: LatticeTree,
    budget: EnumerationBudget,
    list_cap: int = 5000,
) -> SwitchingEnumeration:
    """Exact optimum over adapted switching strategies (truncated accounting).

    Strategies start in mode 0, may switch at any step paying the discounted
    cost, alternate modes, and are capped at ``max_switches``; gains are the
    zero-terminal sums matching the reflected solver.  The family is
    materialised as an explicit list when its size fits ``list_cap``.
    """
    _require_lattice(tree, budget)
    n, w, disc, prof = _switch_ingredients(spec, tree)
    cap = budget.max_switches
    memo = {}

    def best(k: int, j: int, mode: int, used: int) -> float:
        # histories meeting at node (k, j) carry identical subtree families,
        # so their per-subtree maxima coincide and may be shared
        if k == n:
            return 0.0
        key = (k, j, mode, used)
        if key in memo:
            return memo[key]
        stay = (
            w[k] * float(prof[mode][k][j])
            + 0.5 * best(k + 1, j, mode, used)
            + 0.5 * best(k + 1, j + 1, mode, used)
        )
        out = stay
        if used < cap:
            flip = -disc[k] * spec.switch_cost(mode) + best(k, j, 1 - mode, used + 1)
            out = max(stay, flip)
        memo[key] = out
        return out

    value = best(0, 0, 0, 0)

    # forward argmax walk over all histories; ties break toward staying
    n_hist = 1 << n
    steps_out = []
    for h in range(n_hist):
        bits = [(h >> b) & 1 for b in range(n)]
        j = 0
        mode = 0
        used = 0
        steps = []
        for k in range(n):
            while used < cap:
                stay = (
                    w[k] * float(prof[mode][k][j])
                    + 0.5 * best(k + 1, j, mode, used)
                    + 0.5 * best(k + 1, j + 1, mode, used)
                )
                flip = -disc[k] * spec.switch_cost(mode) + best(k, j, 1 - mode, used + 1)
                if flip > stay:
                    steps.append(k)
                    mode = 1 - mode
                    used += 1
                else:
                    break
            j += bits[k]
        steps_out.append(steps)
    best_strategy = Strategy(steps_out, n)

    count = _count_strategies(n, cap)
    listed = count <= list_cap
    strategies = _materialise_strategies(spec, tree, budget) if listed else []
    return SwitchingEnumeration(value, best_strategy, strategies, n_hist, listed)


def _count_strategies(n: int, cap: int, _memo=None) -> int:
    """Number of adapted switching rules on the depth-n history tree."""
    if _memo is None:
        _memo = {}

    def cnt(k: int, used: int) -> int:
        # decision trees below one history node in a fixed (mode parity-free) state
        if k == n:
            return 1
        key = (k, used)
        if key in _memo:
            return _memo[key]
        stay = cnt(k + 1, used) ** 2
        out = stay
        if used < cap:
            out += cnt(k, used + 1)
        _memo[key] = out
        return out

    return cnt(0, 0)


def _materialise_strategies(spec, tree, budget):
    """Every adapted strategy as per-history switch steps, with its exact gain.

    Strategies are decision assignments on reachable (history, mode, used)
    states; gains are averaged over the 2^n equally likely histories by direct
    forward accounting, fully independent of the recursion in
    ``enumerate_switching_strategies``.
    """
    n, w, disc, prof = _switch_ingredients(spec, tree)
    cap = budget.max_switches
    n_hist = 1 << n

    def expand(k, j, mode, used):
        """All (decision-map) subtrees from one state; map: history-suffix -> steps."""
        if k == n:
            return [{(): []}]
        out = []
        # stay: combine every down-subtree with every up-subtree
        downs = expand(k + 1, j, mode, used)
        ups = expand(k + 1, j + 1, mode, used)
        for d in downs:
            for ugra in ups:
                merged = {}
                for suf, steps in d.items():
                    merged[(0,) + suf] = steps
                for suf, steps in ugra.items():
                    merged[(1,) + suf] = steps
                out.append(merged)
        if used < cap:
            for sub in expand(k, j, 1 - mode, used + 1):
                out.append({suf: [k] + steps for suf, steps in sub.items()})
        return out

    results = []
    for rule in expand(0, 0, 0, 0):
        steps_out = []
        gains = np.zeros(n_hist)
        for h in range(n_hist):
            bits = tuple((h >> b) & 1 for b in range(n))
            steps = rule[bits]
            steps_out.append(list(steps))
            j = 0
            mode = 0
            used = 0
            g = 0.0
            si = 0
            for k in range(n):
                while si < len(steps) and steps[si] == k:
                    g -= disc[k] * spec.switch_cost(mode)
                    mode = 1 - mode
                    si += 1
                g += w[k] * float(prof[mode][k][j])
                j += bits[k]
            while si < len(steps):  # switches exactly at the horizon
                g -= disc[n] * spec.switch_cost(mode)
                mode = 1 - mode
                si += 1
            gains[h] = g
        results.append((Strategy(steps_out, n), float(np.mean(gains))))
    return results


def strategy_gain_on_tree(spec, tree: LatticeTree, strategy: Strategy) -> float:
    """Exact truncated gain of a per-history strategy by forward accounting."""
    n, w, disc, prof = _switch_ingredients(spec, tree)
    n_hist = 1 << n
    if strategy.n_scenarios != n_hist:
        raise PreconditionError("strategy must cover all 2^n histories of the tree")
    gains = np.zeros(n_hist)
    for h in range(n_hist):
        bits = tuple((h >> b) & 1 for b in range(n))
        steps = strategy.switch_steps[h]
        j = 0
        mode = 0
        si = 0
        g = 0.0
        for k in range(n):
            while si < len(steps) and steps[si] == k:
                g -= disc[k] * spec.switch_cost(mode)
                mode = 1 - mode
                si += 1
            g += w[k] * float(prof[mode][k][j])
            j += bits[k]
        while si < len(steps):
            g -= disc[n] * spec.switch_cost(mode)
            mode = 1 - mode
            si += 1
        gains[h] = g
    return float(np.mean(gains))


def gronwall_bound(phi, psi, grid: TimeGrid) -> np.ndarray:
    """t -> phi(t) exp(integral_t^T psi(u) du) by trapezoidal quadrature.

    The sharpened closed form requires phi nonincreasing; violated inputs are
    rejected.  Quadrature error is O(dt^2).
    """
    phi = np.asarray(phi, dtype=float)
    psi = np.asarray(psi, dtype=float)
    if phi.shape != (grid.steps + 1,) or psi.shape != (grid.steps + 1,):
        raise ValueError("phi and psi must carry one value per grid instant")
    scale = max(1.0, float(np.max(np.abs(phi))))
    if np.any(np.diff(phi) > 1e-12 * scale):
        raise PreconditionError("gronwall_bound needs a nonincreasing phi")
    panels = 0.5 * (psi[:-1] + psi[1:]) * grid.dt
    tail = np.concatenate([np.cumsum(panels[::-1])[::-1], [0.0]])
    return phi * np.exp(tail)
