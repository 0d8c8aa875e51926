import math

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from modeswitch import (
    Strategy,
    TimeGrid,
    gronwall_bound,
    k_integral_bound,
    tail_constant,
    truncation_horizon,
)

from conftest import make_spec

positive = st.floats(0.05, 5.0, allow_nan=False)


@given(bound_f=positive, beta=positive, c=st.floats(0.0, 3.0), frac=st.floats(1e-3, 0.95))
def test_truncation_horizon_meets_its_tail_target(bound_f, beta, c, frac):
    spec = make_spec(beta=beta, profit=(bound_f, bound_f), bound_f=bound_f)
    tol = frac * tail_constant(bound_f, beta, c)
    t = truncation_horizon(spec, c, tol)
    assert tail_constant(bound_f, beta, c) * math.exp(-beta * t) <= tol * (1 + 1e-12)
    assert t >= 0.0


@given(
    bound_f=positive,
    beta=positive,
    c10=positive,
    sup_sq=st.floats(0.0, 10.0),
    frac=st.floats(0.05, 0.95),
)
def test_k_integral_bound_positive_and_monotone_in_data(bound_f, beta, c10, sup_sq, frac):
    eps = frac / (6.0 * math.exp(1.0 / beta))
    base = k_integral_bound(bound_f, beta, c10, sup_sq, eps)
    assert base > 0.0
    assert k_integral_bound(bound_f + 0.5, beta, c10, sup_sq, eps) >= base
    assert k_integral_bound(bound_f, beta, c10, sup_sq + 1.0, eps) >= base


@settings(max_examples=30)
@given(
    steps=st.integers(2, 30),
    horizon=st.floats(0.1, 5.0),
    rate=st.floats(0.0, 2.0),
    scale=st.floats(0.1, 3.0),
)
def test_gronwall_bound_dominates_its_input(steps, horizon, rate, scale):
    grid = TimeGrid(horizon, steps)
    phi = scale * np.exp(-grid.times)
    psi = np.full(steps + 1, rate)
    bound = gronwall_bound(phi, psi, grid)
    assert np.all(bound >= phi - 1e-12)
    assert bound[-1] == phi[-1]


@settings(max_examples=50)
@given(st.data())
def test_mode_paths_flip_at_switches_and_pairs_cancel(data):
    n = data.draw(st.integers(1, 12))
    steps = sorted(data.draw(st.lists(st.integers(0, n), max_size=4)))
    modes = Strategy([steps], n).mode_paths()[0]
    # the mode at step k is the parity of switches scheduled at or before k
    for k in range(n + 1):
        assert modes[k] == sum(1 for s in steps if s <= k) % 2
    # duplicating every switch makes all excursions zero-length: mode stays 0
    doubled = Strategy([sorted(steps + steps)], n)
    assert np.all(doubled.mode_paths()[0] == 0)
