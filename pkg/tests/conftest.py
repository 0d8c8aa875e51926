import numpy as np
import pytest

from modeswitch import ModelSpec, TimeGrid, build_tree


def make_spec(
    beta=1.0,
    c01=2.0,
    c10=1.0,
    x0=0.0,
    drift=(0.0, 0.0),
    vol=(1.0, 1.0),
    profit=(1.0, 1.0),
    lipschitz_K=0.0,
    bound_f=None,
):
    """Constant-coefficient spec, the workhorse of the exact lattice tests."""
    if bound_f is None:
        bound_f = max(abs(p) for p in profit)
    return ModelSpec.from_dict(
        {
            "beta": beta,
            "c01": c01,
            "c10": c10,
            "x0": x0,
            "lipschitz_K": lipschitz_K,
            "bound_f": bound_f,
            "drift": {"family": "constant", "value": list(drift)},
            "vol": {"family": "constant", "value": list(vol)},
            "profit": {"family": "constant", "value": list(profit)},
        }
    )


def make_affine_spec(
    beta=1.0,
    c01=2.0,
    c10=1.0,
    x0=0.1,
    drift_a=(0.1, -0.1),
    drift_m=(-0.5, -0.3),
    vol=(0.8, 1.2),
    profit_p=(0.6, 0.8),
    profit_q=(0.7, 0.5),
    profit_r=(0.0, 0.2),
    profit_floor=(0.1, 0.1),
):
    """Mean-reverting drifts with saturating profits; declared constants exact."""
    bound = max(p + f for p, f in zip(profit_p, profit_floor))
    lip = max(max(abs(m) for m in drift_m), 0.0)
    return ModelSpec.from_dict(
        {
            "beta": beta,
            "c01": c01,
            "c10": c10,
            "x0": x0,
            "lipschitz_K": lip,
            "bound_f": bound,
            "drift": {"family": "affine", "a": list(drift_a), "m": list(drift_m)},
            "vol": {"family": "constant", "value": list(vol)},
            "profit": {
                "family": "saturating",
                "p": list(profit_p),
                "q": list(profit_q),
                "r": list(profit_r),
                "floor": list(profit_floor),
            },
        }
    )


def random_spec(rng, state_dependent=True):
    """Random in-hypothesis instance with c01 > c10 > 0."""
    c10 = float(rng.uniform(0.05, 0.6))
    c01 = c10 + float(rng.uniform(0.05, 0.8))
    if state_dependent:
        return make_affine_spec(
            beta=float(rng.uniform(0.6, 1.8)),
            c01=c01,
            c10=c10,
            x0=float(rng.uniform(-0.5, 0.5)),
            drift_a=tuple(rng.uniform(-0.3, 0.3, 2)),
            drift_m=tuple(rng.uniform(-0.6, 0.0, 2)),
            vol=tuple(rng.uniform(0.3, 1.2, 2)),
            profit_p=tuple(rng.uniform(0.2, 0.9, 2)),
            profit_q=tuple(rng.uniform(0.2, 1.0, 2)),
            profit_r=tuple(rng.uniform(-0.5, 0.5, 2)),
            profit_floor=tuple(rng.uniform(0.05, 0.3, 2)),
        )
    return make_spec(
        beta=float(rng.uniform(0.6, 1.8)),
        c01=c01,
        c10=c10,
        profit=tuple(rng.uniform(0.1, 1.0, 2)),
        vol=tuple(rng.uniform(0.3, 1.2, 2)),
    )


@pytest.fixture
def flat_spec():
    return make_spec()


def small_tree(spec, horizon=1.0, steps=6):
    return build_tree(spec, TimeGrid(horizon, steps))


def manual_tree(level_values, horizon=1.0):
    """Lattice with prescribed per-level states (same for both modes)."""
    from modeswitch import LatticeTree

    steps = len(level_values) - 1
    states = [np.asarray(v, dtype=float) for v in level_values]
    return LatticeTree(TimeGrid(horizon, steps), states, [s.copy() for s in states])
