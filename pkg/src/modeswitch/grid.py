"""Time grids, simulated path batches, recombining lattices, and adapted processes.

Both scene kinds expose the same small surface used by every backward solver:

* ``n_steps`` and ``n_nodes(k)`` describe the cross section,
* ``states(mode, k)`` returns the mode-frozen diffusion states,
* ``condexp(k, next_values)`` maps step ``k+1`` values to their one-step
  conditional expectation: the exact child average on a lattice, a
  cross-sectional polynomial regression on paths.

The two mode-frozen diffusions always share one Brownian driver: a path batch
reuses the same increments for both modes, a lattice branches both mode states
on the same up/down move.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateLatticeError,
    IllPosedRegressionError,
    NumericalBlowupError,
    PreconditionError,
    ShapeMismatchError,
)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid 0 = t_0 < t_1 < ... < t_N = T."""

    horizon: float
    steps: int

    def __post_init__(self):
        if not np.isfinite(self.horizon) or self.horizon <= 0.0:
            raise ValueError(f"horizon must be a positive real, got {self.horizon}")
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.steps + 1)


def discount_factors(grid: TimeGrid, beta: float) -> np.ndarray:
    """e^{-beta t_k} for every grid instant."""
    return np.exp(-beta * grid.times)


def step_weights(grid: TimeGrid, beta: float) -> np.ndarray:
    """Exact per-step discount mass w_k = integral of e^{-beta s} over [t_k, t_{k+1}].

    Using the exact integral instead of e^{-beta t_k} dt keeps constant-rate
    discounted sums closed-form on any grid; for beta = 0 the weight is dt.
    """
    if beta == 0.0:
        return np.full(grid.steps, grid.dt)
    t = grid.times
    return (np.exp(-beta * t[:-1]) - np.exp(-beta * t[1:])) / beta


class PathBatch:
    """Euler-Maruyama paths of both mode-frozen diffusions on shared increments.

    states0/states1 have shape (n_paths, N+1); increments holds the Brownian
    increments (n_paths, N) used by both modes.
    """

    kind = "paths"

    def __init__(self, grid, states0, states1, increments, seed=None, regression_degree=2):
        states0 = np.asarray(states0, dtype=float)
        states1 = np.asarray(states1, dtype=float)
        increments = np.asarray(increments, dtype=float)
        if states0.shape != states1.shape:
            raise ShapeMismatchError("states0 and states1 must have identical shape")
        if states0.shape[1] != grid.steps + 1:
            raise ShapeMismatchError(
                f"states carry {states0.shape[1]} instants for a grid with {grid.steps + 1}"
            )
        if increments.shape != (states0.shape[0], grid.steps):
            raise ShapeMismatchError("increments must have shape (n_paths, steps)")
        self.grid = grid
        self.states0 = states0
        self.states1 = states1
        self.increments = increments
        self.seed = seed
        self.regression_degree = int(regression_degree)

    @property
    def n_paths(self) -> int:
        return self.states0.shape[0]

    @property
    def n_steps(self) -> int:
        return self.grid.steps

    def n_nodes(self, k: int) -> int:
        return self.n_paths

    def states(self, mode: int, k: int) -> np.ndarray:
        return (self.states0 if mode == 0 else self.states1)[:, k]

    def basis(self, k: int) -> np.ndarray:
        """Polynomial features in (X0_k, X1_k) up to total degree regression_degree."""
        x0 = self.states0[:, k]
        x1 = self.states1[:, k]
        cols = []
        for total in range(self.regression_degree + 1):
            for a in range(total + 1):
                cols.append(x0 ** (total - a) * x1**a)
        return np.column_stack(cols)

    def condexp(self, k: int, next_values: np.ndarray) -> np.ndarray:
        """Least-squares projection of step k+1 values on the step-k basis."""
        design = self.basis(k)
        if self.n_paths < design.shape[1]:
            raise IllPosedRegressionError(
                f"regression at step {k} needs at least {design.shape[1]} paths "
                f"(basis degree {self.regression_degree}), got {self.n_paths}"
            )
        coeffs, *_ = np.linalg.lstsq(design, np.asarray(next_values, dtype=float), rcond=None)
        return design @ coeffs

    def to_rows(self):
        """Rows (path, step, time, x0_state, x1_state) for CSV export."""
        times = self.grid.times
        for p in range(self.n_paths):
            for k in range(self.n_steps + 1):
                yield (p, k, times[k], self.states0[p, k], self.states1[p, k])


class LatticeTree:
    """Recombining binomial lattice for both modes on a shared branching.

    Level k holds k+1 nodes ordered by up-move count j = 0..k.  Node states are
    built around the central (all-moves-average) state of each level with the
    volatility frozen at that central state, so constant-coefficient instances
    have exact one-step moments while state-dependent coefficients carry an
    O(dt) freeze bias (the Monte Carlo backend is the reference there).
    """

    kind = "lattice"

    def __init__(self, grid, states0, states1, p=0.5):
        if len(states0) != grid.steps + 1 or len(states1) != grid.steps + 1:
            raise ShapeMismatchError("lattice needs states for every level 0..N")
        for k, (a, b) in enumerate(zip(states0, states1)):
            if len(a) != k + 1 or len(b) != k + 1:
                raise ShapeMismatchError(f"level {k} must hold {k + 1} nodes")
        if not 0.0 < p < 1.0:
            raise ValueError("branch probability must lie in (0,1)")
        self.grid = grid
        self.states0 = [np.asarray(a, dtype=float) for a in states0]
        self.states1 = [np.asarray(a, dtype=float) for a in states1]
        self.p = float(p)

    @property
    def n_steps(self) -> int:
        return self.grid.steps

    def n_nodes(self, k: int) -> int:
        return k + 1

    def states(self, mode: int, k: int) -> np.ndarray:
        return (self.states0 if mode == 0 else self.states1)[k]

    def condexp(self, k: int, next_values: np.ndarray) -> np.ndarray:
        """Exact child average: node j branches to j (down) and j+1 (up)."""
        v = np.asarray(next_values, dtype=float)
        if v.shape != (k + 2,):
            raise ShapeMismatchError(f"expected {k + 2} values at level {k + 1}, got {v.shape}")
        return self.p * v[1:] + (1.0 - self.p) * v[:-1]

    def level_probabilities(self, k: int) -> np.ndarray:
        """Binomial reach probabilities of the level-k nodes.

        Built by the forward Pascal recursion, which stays finite in float
        arithmetic for arbitrarily deep lattices.
        """
        probs = np.array([1.0])
        for level in range(k):
            nxt = np.zeros(level + 2)
            nxt[:-1] += (1.0 - self.p) * probs
            nxt[1:] += self.p * probs
            probs = nxt
        return probs


class AdaptedProcess:
    """Values of a process on every (step, node-or-path) of a scene."""

    def __init__(self, scene, values):
        values = [np.asarray(v, dtype=float) for v in values]
        if len(values) != scene.n_steps + 1:
            raise ShapeMismatchError("need one value array per grid instant")
        for k, v in enumerate(values):
            if v.shape != (scene.n_nodes(k),):
                raise ShapeMismatchError(
                    f"step {k}: expected {scene.n_nodes(k)} values, got {v.shape}"
                )
            if not np.all(np.isfinite(v)):
                raise ValueError(f"non-finite process value at step {k}")
        self.scene = scene
        self.values = values

    @classmethod
    def constant(cls, scene, value):
        return cls(scene, [np.full(scene.n_nodes(k), float(value)) for k in range(scene.n_steps + 1)])

    @classmethod
    def from_time_function(cls, scene, fn):
        times = scene.grid.times
        return cls(
            scene,
            [np.full(scene.n_nodes(k), float(fn(times[k]))) for k in range(scene.n_steps + 1)],
        )

    @classmethod
    def from_node_function(cls, scene, fn):
        """fn(k, x0_states, x1_states) -> per-node values at step k."""
        vals = []
        for k in range(scene.n_steps + 1):
            v = np.broadcast_to(
                np.asarray(fn(k, scene.states(0, k), scene.states(1, k)), dtype=float),
                (scene.n_nodes(k),),
            )
            vals.append(np.array(v, dtype=float))
        return cls(scene, vals)

    @property
    def n_steps(self) -> int:
        return self.scene.n_steps

    def copy(self):
        return AdaptedProcess(self.scene, [v.copy() for v in self.values])

    def max_abs(self) -> float:
        return max(float(np.max(np.abs(v))) for v in self.values)

    def max_over(self, other, transform=lambda a, b: a - b) -> float:
        """Max over all nodes of transform(self, other)."""
        self._check_same_scene(other)
        return max(
            float(np.max(transform(a, b))) for a, b in zip(self.values, other.values)
        )

    def _check_same_scene(self, other):
        if other.scene is not self.scene and (
            other.n_steps != self.n_steps
            or any(
                other.scene.n_nodes(k) != self.scene.n_nodes(k)
                for k in range(self.n_steps + 1)
            )
        ):
            raise ShapeMismatchError("processes live on different scenes")

    def __add__(self, other):
        if isinstance(other, AdaptedProcess):
            self._check_same_scene(other)
            return AdaptedProcess(self.scene, [a + b for a, b in zip(self.values, other.values)])
        return AdaptedProcess(self.scene, [v + other for v in self.values])

    def __sub__(self, other):
        if isinstance(other, AdaptedProcess):
            self._check_same_scene(other)
            return AdaptedProcess(self.scene, [a - b for a, b in zip(self.values, other.values)])
        return AdaptedProcess(self.scene, [v - other for v in self.values])

    def __mul__(self, scalar):
        return AdaptedProcess(self.scene, [v * scalar for v in self.values])

    __rmul__ = __mul__

    def to_rows(self, label_time=True):
        """Rows (step, node, [time,] value) for CSV export."""
        times = self.scene.grid.times
        for k, v in enumerate(self.values):
            for node, x in enumerate(v):
                if label_time:
                    yield (k, node, times[k], x)
                else:
                    yield (k, node, x)


def _philox_stream(seed: int, path_index: int) -> np.random.Generator:
    # counter-based substream: one disjoint 2^128 Philox block per path
    key = np.random.SeedSequence(seed).generate_state(2, np.uint64)
    return np.random.Generator(np.random.Philox(key=key).jumped(path_index))


def simulate_paths(spec, grid: TimeGrid, n_paths: int, seed: int) -> PathBatch:
    """Euler-Maruyama on shared increments for both frozen modes.

    X^i_{k+1} = X^i_k + b(i, X^i_k) dt + sigma(i, X^i_k) dW_k, with dW drawn
    from per-path counter-based Philox substreams, so the batch is
    bit-reproducible from (spec, grid, n_paths, seed) whatever the worker
    count downstream.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    n = grid.steps
    dt = grid.dt
    sqdt = np.sqrt(dt)
    increments = np.empty((n_paths, n))
    for p in range(n_paths):
        increments[p] = _philox_stream(seed, p).standard_normal(n) * sqdt

    states0 = np.empty((n_paths, n + 1))
    states1 = np.empty((n_paths, n + 1))
    states0[:, 0] = spec.x0
    states1[:, 0] = spec.x0
    for k in range(n):
        for mode, states in ((0, states0), (1, states1)):
            x = states[:, k]
            nxt = x + spec.drift_at(mode, x) * dt + spec.vol_at(mode, x) * increments[:, k]
            if not np.all(np.isfinite(nxt)):
                bad = int(np.flatnonzero(~np.isfinite(nxt))[0])
                raise NumericalBlowupError(
                    f"state overflow in mode {mode} on path {bad} at step {k + 1}"
                )
            states[:, k + 1] = nxt
    return PathBatch(grid, states0, states1, increments, seed=seed)


def _central_states(spec, grid, mode):
    c = np.empty(grid.steps + 1)
    c[0] = spec.x0
    for k in range(grid.steps):
        c[k + 1] = c[k] + spec.drift_at(mode, c[k]) * grid.dt
    return c


def build_tree(spec, grid: TimeGrid) -> LatticeTree:
    """Recombining binomial lattice with level-frozen coefficients, p = 1/2.

    Node states at level k are c_k + sigma(i, c_k) sqrt(dt) (2j - k) around the
    drifted central state c_k.  Constant coefficients reproduce b dt +/- sigma
    sqrt(dt) branching exactly.
    """
    dt = grid.dt
    sqdt = np.sqrt(dt)
    levels = ([], [])
    for mode in (0, 1):
        if spec.vol_at(mode, spec.x0) == 0.0 and spec.vol.state_dependent:
            raise DegenerateLatticeError(
                f"sigma({mode}, x0) = 0 with state-dependent volatility: the lattice "
                "degenerates at the root; use the Monte Carlo path backend instead"
            )
        c = _central_states(spec, grid, mode)
        for k in range(grid.steps + 1):
            spread = spec.vol_at(mode, c[k]) * sqdt
            j = np.arange(k + 1)
            levels[mode].append(c[k] + spread * (2.0 * j - k))
    return LatticeTree(grid, levels[0], levels[1], p=0.5)


def unroll_tree(tree: LatticeTree, max_paths: int = 1 << 20) -> PathBatch:
    """Expand a lattice into the batch of all 2^N up/down paths.

    Requires p = 1/2 so that equally weighted path averages are exact lattice
    expectations; used by strategy extraction and exact gain accounting at
    desk scale.
    """
    if tree.p != 0.5:
        raise PreconditionError("unroll_tree requires p = 1/2 for uniform path weights")
    n = tree.n_steps
    n_paths = 1 << n
    if n_paths > max_paths:
        raise ShapeMismatchError(
            f"unrolling a {n}-step lattice needs {n_paths} paths (> cap {max_paths})"
        )
    bits = (np.arange(n_paths)[:, None] >> np.arange(n)[None, :]) & 1
    ups = np.concatenate([np.zeros((n_paths, 1), dtype=int), np.cumsum(bits, axis=1)], axis=1)
    states0 = np.empty((n_paths, n + 1))
    states1 = np.empty((n_paths, n + 1))
    for k in range(n + 1):
        states0[:, k] = tree.states0[k][ups[:, k]]
        states1[:, k] = tree.states1[k][ups[:, k]]
    increments = (2.0 * bits - 1.0) * np.sqrt(tree.grid.dt)
    return PathBatch(tree.grid, states0, states1, increments, seed=None)
