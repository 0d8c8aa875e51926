import math

import numpy as np
import pytest

from modeswitch import (
    AdaptedProcess,
    TimeGrid,
    build_tree,
    discount_factors,
    simulate_paths,
    step_weights,
    unroll_tree,
)
from modeswitch.errors import (
    DegenerateLatticeError,
    IllPosedRegressionError,
    NumericalBlowupError,
)
from modeswitch.model import ModelSpec

from conftest import make_spec


def test_time_grid_shape():
    grid = TimeGrid(2.0, 8)
    assert grid.dt == 0.25
    t = grid.times
    assert t[0] == 0.0 and t[-1] == 2.0
    assert np.all(np.diff(t) > 0)
    np.testing.assert_allclose(np.diff(t), grid.dt)
    with pytest.raises(ValueError):
        TimeGrid(-1.0, 4)
    with pytest.raises(ValueError):
        TimeGrid(1.0, 0)


def test_step_weights_are_exact_discount_masses():
    grid = TimeGrid(2.0, 16)
    beta = 0.7
    w = step_weights(grid, beta)
    assert w.sum() == pytest.approx((1.0 - math.exp(-beta * 2.0)) / beta, abs=1e-15)
    np.testing.assert_allclose(step_weights(grid, 0.0), grid.dt)
    assert discount_factors(grid, beta)[0] == 1.0


def test_degenerate_sde_paths_are_constant():
    spec = make_spec(drift=(0.0, 0.0), vol=(0.0, 0.0), x0=3.0)
    batch = simulate_paths(spec, TimeGrid(1.0, 5), 7, seed=1)
    np.testing.assert_array_equal(batch.states0, 3.0)
    np.testing.assert_array_equal(batch.states1, 3.0)


def test_deterministic_drift_integrates_exactly():
    spec = make_spec(drift=(0.5, -1.25), vol=(0.0, 0.0), x0=0.0)
    batch = simulate_paths(spec, TimeGrid(1.0, 64), 3, seed=2)
    np.testing.assert_allclose(batch.states0[:, -1], 0.5, atol=1e-12)
    np.testing.assert_allclose(batch.states1[:, -1], -1.25, atol=1e-12)


def test_brownian_terminal_variance_within_three_standard_errors():
    spec = make_spec(drift=(0.0, 0.0), vol=(1.0, 1.0))
    n_paths = 100_000
    batch = simulate_paths(spec, TimeGrid(1.0, 4), n_paths, seed=3)
    x = batch.states0[:, -1]
    var = x.var(ddof=1)
    se = math.sqrt(2.0 / (n_paths - 1))  # var of sample variance of N(0,1)
    assert abs(var - 1.0) < 3.0 * se


def test_resimulation_is_bit_identical():
    spec = make_spec()
    a = simulate_paths(spec, TimeGrid(1.0, 10), 50, seed=11)
    b = simulate_paths(spec, TimeGrid(1.0, 10), 50, seed=11)
    assert np.array_equal(a.states0, b.states0)
    assert np.array_equal(a.increments, b.increments)
    c = simulate_paths(spec, TimeGrid(1.0, 10), 50, seed=12)
    assert not np.array_equal(a.states0, c.states0)


def test_identical_modes_coincide_pathwise():
    spec = make_spec(drift=(0.3, 0.3), vol=(0.7, 0.7))
    batch = simulate_paths(spec, TimeGrid(1.0, 8), 20, seed=4)
    np.testing.assert_array_equal(batch.states0, batch.states1)


@pytest.mark.filterwarnings("ignore:overflow encountered")
def test_blowup_error_names_path_and_step():
    spec = ModelSpec.from_dict(
        {
            **make_spec().to_dict(),
            "drift": {"family": "affine", "a": [0.0, 0.0], "m": [1e200, 0.0]},
            "x0": 1.0,
            "lipschitz_K": 1e200,
        }
    )
    with pytest.raises(NumericalBlowupError, match=r"mode 0 on path \d+ at step \d+"):
        simulate_paths(spec, TimeGrid(1.0, 8), 3, seed=5)


def test_symmetric_walk_children():
    # b = 0, sigma = 1, dt = 0.01: children at x +/- 0.1
    spec = make_spec()
    tree = build_tree(spec, TimeGrid(0.02, 2))
    assert tree.p == 0.5
    np.testing.assert_allclose(tree.states0[1], [-math.sqrt(0.01), math.sqrt(0.01)])


def test_drifted_walk_children():
    mu = 0.8
    spec = make_spec(drift=(mu, mu))
    dt = 0.25
    tree = build_tree(spec, TimeGrid(1.0, 4))
    np.testing.assert_allclose(
        tree.states0[1], [mu * dt - math.sqrt(dt), mu * dt + math.sqrt(dt)]
    )


def test_lattice_mean_telescopes_to_drift():
    # constant coefficients: E[X_T] = x0 + mu T exactly under binomial weights
    mu, x0 = -0.4, 1.5
    spec = make_spec(drift=(mu, mu), x0=x0)
    tree = build_tree(spec, TimeGrid(2.0, 12))
    weights = tree.level_probabilities(12)
    assert weights.sum() == pytest.approx(1.0, abs=1e-14)
    assert weights @ tree.states0[12] == pytest.approx(x0 + mu * 2.0, abs=1e-12)


def test_lattice_one_step_moments_exact_for_constant_coefficients():
    spec = make_spec(drift=(0.3, -0.2), vol=(0.9, 1.1))
    grid = TimeGrid(1.0, 5)
    tree = build_tree(spec, grid)
    for mode in (0, 1):
        b = spec.drift_at(mode, 0.0)
        s = spec.vol_at(mode, 0.0)
        for k in range(5):
            parent = tree.states(mode, k)
            child = tree.states(mode, k + 1)
            mean = 0.5 * (child[1:] + child[:-1]) - parent
            var = 0.25 * (child[1:] - child[:-1]) ** 2
            np.testing.assert_allclose(mean, b * grid.dt, atol=1e-12)
            np.testing.assert_allclose(var, s**2 * grid.dt, atol=1e-12)


def test_degenerate_state_dependent_vol_rejected():
    spec = ModelSpec.from_dict(
        {
            **make_spec().to_dict(),
            "vol": {"family": "affine_clipped", "s": [0.0, 1.0], "v": [1.0, 0.0]},
            "lipschitz_K": 1.0,
        }
    )
    with pytest.raises(DegenerateLatticeError, match="path"):
        build_tree(spec, TimeGrid(1.0, 4))


def test_unrolled_tree_reproduces_node_states_and_weights():
    spec = make_spec(drift=(0.1, -0.1))
    tree = build_tree(spec, TimeGrid(1.0, 6))
    batch = unroll_tree(tree)
    assert batch.n_paths == 64
    # uniform path averages match probability-weighted node averages
    for k in range(7):
        node_mean = tree.level_probabilities(k) @ tree.states0[k]
        assert batch.states0[:, k].mean() == pytest.approx(node_mean, abs=1e-12)
    assert set(np.round(batch.states1[:, 3], 12)) == set(np.round(tree.states1[3], 12))


def test_lattice_condexp_is_child_average():
    spec = make_spec()
    tree = build_tree(spec, TimeGrid(1.0, 3))
    v = np.array([1.0, 5.0, 9.0])
    np.testing.assert_allclose(tree.condexp(1, v), [3.0, 7.0])


def test_path_condexp_recovers_polynomials_exactly():
    spec = make_spec(drift=(0.0, 0.1), vol=(1.0, 0.8))
    batch = simulate_paths(spec, TimeGrid(1.0, 4), 500, seed=6)
    k = 2
    target = 1.0 + 2.0 * batch.states0[:, k] - 0.5 * batch.states1[:, k] ** 2
    np.testing.assert_allclose(batch.condexp(k, target), target, atol=1e-8)


def test_regression_needs_enough_paths():
    spec = make_spec()
    batch = simulate_paths(spec, TimeGrid(1.0, 3), 4, seed=7)
    with pytest.raises(IllPosedRegressionError, match="at least 6 paths"):
        batch.condexp(1, np.zeros(4))
    batch.regression_degree = 0
    np.testing.assert_allclose(batch.condexp(1, np.arange(4.0)), 1.5)


def test_adapted_process_shape_and_finiteness_guards():
    spec = make_spec()
    tree = build_tree(spec, TimeGrid(1.0, 3))
    with pytest.raises(Exception):
        AdaptedProcess(tree, [np.zeros(2)] * 4)
    with pytest.raises(ValueError, match="non-finite"):
        AdaptedProcess(tree, [np.array([np.nan]), np.zeros(2), np.zeros(3), np.zeros(4)])
    proc = AdaptedProcess.from_time_function(tree, lambda t: 2.0 * t)
    rows = list(proc.to_rows())
    assert rows[0] == (0, 0, 0.0, 0.0)
    assert len(rows) == 1 + 2 + 3 + 4
