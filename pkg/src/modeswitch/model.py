"""Problem instances: coefficient catalog, costs, discount, hypothesis checks.

A ModelSpec carries per-mode drift b(i,x), volatility sigma(i,x) >= 0 and
bounded positive profit rate f(i,x) drawn from a small parametric catalog,
plus the declared Lipschitz constant for (b, sigma) and the declared sup-norm
of f.  ``validate_spec`` probes the declared constants by finite sampling; it
is a guardrail on user declarations, not a symbolic verifier.

The firm value is S = exp(X); only X is modelled here.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

_TWO = "needs one value per mode (length-2 sequence)"


def _pair(raw, name):
    try:
        pair = tuple(float(v) for v in raw)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"{name} {_TWO}: {raw!r}") from exc
    if len(pair) != 2:
        raise ConfigurationError(f"{name} {_TWO}: {raw!r}")
    return pair


@dataclass(frozen=True)
class AffineCoefficient:
    """b(i, x) = a_i + m_i x; Lipschitz constant |m_i|."""

    a: tuple
    m: tuple
    family = "affine"
    clip_nonnegative = False

    def __call__(self, mode, x):
        out = self.a[mode] + self.m[mode] * np.asarray(x, dtype=float)
        if self.clip_nonnegative:
            out = np.maximum(out, 0.0)
        return out

    @property
    def state_dependent(self):
        return any(m != 0.0 for m in self.m)

    def lipschitz(self):
        return max(abs(m) for m in self.m)

    def params(self):
        return {"a": list(self.a), "m": list(self.m)}


@dataclass(frozen=True)
class ClippedAffineVol(AffineCoefficient):
    """sigma(i, x) = max(0, s_i + v_i x); clipping keeps the 1-Lipschitz bound."""

    family = "affine_clipped"
    clip_nonnegative = True

    def params(self):
        return {"s": list(self.a), "v": list(self.m)}


@dataclass(frozen=True)
class ConstantCoefficient:
    value: tuple
    family = "constant"

    def __call__(self, mode, x):
        return np.full_like(np.asarray(x, dtype=float), self.value[mode])

    @property
    def state_dependent(self):
        return False

    def lipschitz(self):
        return 0.0

    def params(self):
        return {"value": list(self.value)}


@dataclass(frozen=True)
class SaturatingProfit:
    """f(i, x) = p_i (1 + tanh(q_i x + r_i)) / 2 + floor_i, bounded in (floor, p + floor]."""

    p: tuple
    q: tuple
    r: tuple
    floor: tuple
    family = "saturating"

    def __call__(self, mode, x):
        x = np.asarray(x, dtype=float)
        return self.p[mode] * 0.5 * (1.0 + np.tanh(self.q[mode] * x + self.r[mode])) + self.floor[mode]

    @property
    def state_dependent(self):
        return any(p != 0.0 and q != 0.0 for p, q in zip(self.p, self.q))

    def sup_bound(self):
        return max(p + fl for p, fl in zip(self.p, self.floor))

    def params(self):
        return {"p": list(self.p), "q": list(self.q), "r": list(self.r), "floor": list(self.floor)}


_ROLE_FAMILIES = {
    "drift": {"affine", "constant"},
    "vol": {"affine_clipped", "constant"},
    "profit": {"saturating", "constant"},
}


def coefficient_from_dict(role: str, raw: dict):
    """Build a catalog member from its JSON form; unknown families and fields are rejected."""
    if not isinstance(raw, dict) or "family" not in raw:
        raise ConfigurationError(f"{role} descriptor must be an object with a 'family' id")
    family = raw["family"]
    if family not in _ROLE_FAMILIES[role]:
        raise ConfigurationError(
            f"unknown {role} family {family!r}; allowed: {sorted(_ROLE_FAMILIES[role])}"
        )
    body = {k: v for k, v in raw.items() if k != "family"}

    def take(expected):
        extra = set(body) - set(expected)
        missing = set(expected) - set(body)
        if extra or missing:
            raise ConfigurationError(
                f"{role}/{family}: unknown fields {sorted(extra)}, missing {sorted(missing)}"
            )
        return [_pair(body[k], f"{role}.{k}") for k in expected]

    if family == "constant":
        (value,) = take(["value"])
        return ConstantCoefficient(value)
    if family == "affine":
        a, m = take(["a", "m"])
        return AffineCoefficient(a, m)
    if family == "affine_clipped":
        s, v = take(["s", "v"])
        return ClippedAffineVol(s, v)
    p, q, r, floor = take(["p", "q", "r", "floor"])
    return SaturatingProfit(p, q, r, floor)


def coefficient_to_dict(coef) -> dict:
    return {"family": coef.family, **coef.params()}


_SPEC_FIELDS = ("beta", "c01", "c10", "x0", "lipschitz_K", "bound_f", "drift", "vol", "profit")


@dataclass(frozen=True)
class ModelSpec:
    """The full problem datum.

    Semantic hypotheses (beta > 0, c01 > c10 > 0, declared constants) are
    checked by ``validate_spec``, which reports violations instead of raising,
    so a deliberately broken spec is constructible for diagnosis.
    """

    beta: float
    c01: float
    c10: float
    x0: float
    lipschitz_K: float
    bound_f: float
    drift: object
    vol: object
    profit: object

    def __post_init__(self):
        for name in ("beta", "c01", "c10", "x0", "lipschitz_K", "bound_f"):
            v = getattr(self, name)
            if not np.isfinite(v):
                raise ConfigurationError(f"{name} must be finite, got {v}")

    def drift_at(self, mode, x):
        return self.drift(mode, x)

    def vol_at(self, mode, x):
        return self.vol(mode, x)

    def profit_at(self, mode, x):
        return self.profit(mode, x)

    def switch_cost(self, from_mode: int) -> float:
        return self.c01 if from_mode == 0 else self.c10

    def to_dict(self) -> dict:
        return {
            "beta": self.beta,
            "c01": self.c01,
            "c10": self.c10,
            "x0": self.x0,
            "lipschitz_K": self.lipschitz_K,
            "bound_f": self.bound_f,
            "drift": coefficient_to_dict(self.drift),
            "vol": coefficient_to_dict(self.vol),
            "profit": coefficient_to_dict(self.profit),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "ModelSpec":
        if not isinstance(raw, dict):
            raise ConfigurationError("model spec must be a JSON object")
        unknown = set(raw) - set(_SPEC_FIELDS)
        if unknown:
            raise ConfigurationError(f"unknown model fields: {sorted(unknown)}")
        missing = set(_SPEC_FIELDS) - set(raw)
        if missing:
            raise ConfigurationError(f"missing model fields: {sorted(missing)}")
        scalars = {}
        for name in ("beta", "c01", "c10", "x0", "lipschitz_K", "bound_f"):
            try:
                scalars[name] = float(raw[name])
            except (TypeError, ValueError) as exc:
                raise ConfigurationError(f"model field {name} must be a number") from exc
        return cls(
            drift=coefficient_from_dict("drift", raw["drift"]),
            vol=coefficient_from_dict("vol", raw["vol"]),
            profit=coefficient_from_dict("profit", raw["profit"]),
            **scalars,
        )

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_json(cls, text: str) -> "ModelSpec":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class Violation:
    hypothesis: str
    witness: tuple
    measured: float


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    violations: tuple

    def __bool__(self):
        return self.ok


def _report(violations) -> ValidationReport:
    violations = tuple(violations)
    return ValidationReport(ok=not violations, violations=violations)


def validate_spec(spec: ModelSpec, probes: int, seed: int, quotient_slack: float = 1e-9) -> ValidationReport:
    """Probe the standing hypotheses at deterministically sampled points.

    Checks beta > 0, c01 > c10 > 0, sigma >= 0, |f| <= bound_f, and
    finite-difference Lipschitz quotients of b and sigma against the declared
    constant (allowing relative slack ``quotient_slack``).  Violations are
    collected, never raised.
    """
    if probes < 1:
        raise ValueError("probes must be >= 1")
    violations = []
    if not spec.beta > 0.0:
        violations.append(Violation("beta_positive", (), spec.beta))
    if not (spec.c01 > spec.c10 > 0.0):
        violations.append(Violation("cost_order_c01_gt_c10_gt_0", (), spec.c01 - spec.c10))

    rng = np.random.default_rng(seed)
    cap = spec.lipschitz_K * (1.0 + quotient_slack)
    for mode in (0, 1):
        x = spec.x0 + 4.0 * rng.standard_normal(probes)
        y = x + 10.0 ** rng.uniform(-6, 0, probes)

        sig = spec.vol_at(mode, x)
        for xi, si in zip(x, sig):
            if si < 0.0:
                violations.append(Violation("vol_nonnegative", (mode, float(xi)), float(si)))
        prof = np.abs(spec.profit_at(mode, x))
        for xi, fi in zip(x, prof):
            if fi > spec.bound_f:
                violations.append(Violation("profit_bound", (mode, float(xi)), float(fi)))
        for name, coef in (("lipschitz_b", spec.drift_at), ("lipschitz_sigma", spec.vol_at)):
            quot = np.abs(coef(mode, x) - coef(mode, y)) / np.abs(x - y)
            worst = int(np.argmax(quot))
            if quot[worst] > cap:
                violations.append(
                    Violation(name, (mode, float(x[worst]), float(y[worst])), float(quot[worst]))
                )
    return _report(violations)
