"""Discrete Snell envelopes: smallest dominating supermartingale and stopping rules.

The envelope of a reward process U is computed by the backward recursion

    Z_N = U_N,      Z_k = max(U_k, E[Z_{k+1} | F_k]),

which on a lattice is the definition of the discrete envelope (exact child
averages) and on a path batch uses the regression conditional-expectation
estimate of the scene.

No class-(D) (uniform integrability) verification is performed: rewards on
finite scenes are bounded, so the condition is vacuous here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import AdaptedProcess, LatticeTree, PathBatch


@dataclass
class SnellResult:
    """Envelope Z with its Doob pieces Z = M - A.

    ``compensator_increments`` holds the F_k-measurable increment
    dA_k = Z_k - E[Z_{k+1} | F_k] >= 0 on step-k nodes (zero at the last
    step).  On a path batch, ``compensator`` and ``martingale`` are the
    cumulative A (A_0 = 0) and M = Z + A per path.  On a recombining lattice
    the cumulative compensator is path dependent, so only the increments are
    node-representable: accumulate them along any up/down path (for instance
    after ``grid.unroll_tree``) to materialise A and M there.
    """

    envelope: AdaptedProcess
    compensator_increments: AdaptedProcess
    compensator: AdaptedProcess | None
    martingale: AdaptedProcess | None

    # spec aliases
    @property
    def Z(self):
        return self.envelope

    @property
    def A(self):
        return self.compensator

    @property
    def M(self):
        return self.martingale


def snell_envelope(reward: AdaptedProcess) -> SnellResult:
    """Backward envelope of ``reward`` with its Doob decomposition."""
    scene = reward.scene
    n = scene.n_steps
    z = [None] * (n + 1)
    da = [None] * (n + 1)
    z[n] = reward.values[n].copy()
    da[n] = np.zeros_like(z[n])
    for k in range(n - 1, -1, -1):
        cont = scene.condexp(k, z[k + 1])
        z[k] = np.maximum(reward.values[k], cont)
        da[k] = z[k] - cont
    envelope = AdaptedProcess(scene, z)
    increments = AdaptedProcess(scene, da)

    compensator = martingale = None
    if isinstance(scene, PathBatch):
        acc = [np.zeros(scene.n_paths)]
        for k in range(n):
            acc.append(acc[-1] + da[k])
        compensator = AdaptedProcess(scene, acc)
        martingale = envelope + compensator
    return SnellResult(envelope, increments, compensator, martingale)


def export_rows(result: SnellResult, reward: AdaptedProcess):
    """Rows (step, node, U, Z, A) for CSV export.

    The compensator column carries the cumulative A on path scenes and the
    per-step increment dA on lattices (see SnellResult).
    """
    comp = result.compensator or result.compensator_increments
    for k in range(reward.n_steps + 1):
        for node in range(reward.scene.n_nodes(k)):
            yield (
                k,
                node,
                reward.values[k][node],
                result.envelope.values[k][node],
                comp.values[k][node],
            )


def first_optimal_time(result: SnellResult, reward: AdaptedProcess, gamma: int = 0, tol: float = 1e-10):
    """First step >= gamma where the envelope touches the reward.

    Ties Z = U break toward stopping.  On a path batch returns the
    per-scenario stopping step (sentinel -1 when no step in [gamma, N]
    qualifies, which needs tol < 0 since Z_N = U_N).  On a lattice returns the
    stopping rule as a node-set: a boolean AdaptedProcess marking
    Z <= U + tol from gamma on.
    """
    scene = reward.scene
    n = scene.n_steps
    if not 0 <= gamma <= n:
        raise ValueError(f"gamma must lie in [0, {n}], got {gamma}")
    hit = [
        np.zeros(scene.n_nodes(k), dtype=bool)
        if k < gamma
        else result.envelope.values[k] <= reward.values[k] + tol
        for k in range(n + 1)
    ]
    if isinstance(scene, LatticeTree):
        return hit
    steps = np.full(scene.n_paths, -1, dtype=int)
    for k in range(n, gamma - 1, -1):
        steps[hit[k]] = k
    return steps
