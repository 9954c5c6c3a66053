"""Objectives, summable step sizes and the superiorized DSAP iteration.

Each outer iteration ``k`` first takes ``N_k`` short steps along negative
unit subgradients of the objective,

    y^{k,n+1} = y^{k,n} + beta_{k,n} v^{k,n},   v = -s / ||s||  (or 0),

and then applies one DSAP operator to the result.  Step sizes are drawn in
order from a single geometric sequence ``eta0 * rho**l`` whose cursor ``l``
advances once per inner step over the whole run, so their total is bounded
by ``eta0 / (1 - rho)``.
"""
from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError, InputError, ObjectiveError
from .feasibility import StopRule, Trace, drive
from .geometry import ConstraintFamily, as_point

__all__ = [
    "Objective",
    "LinearObjective",
    "QuadraticObjective",
    "OneNormObjective",
    "MaxLinearObjective",
    "CustomObjective",
    "objective_from_dict",
    "negative_unit_subgradient",
    "BetaSchedule",
    "make_beta_schedule",
    "InnerLoopPlan",
    "AnalysisConstants",
    "superiorized_inner_loop",
    "run_superiorized_dsap",
]

DEFAULT_ZERO_TOL = 1e-12


class Objective:
    """A convex function with a value oracle and a subgradient oracle."""

    label = "objective"

    def value(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def subgradient(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, x) -> float:
        return self.value(np.asarray(x, dtype=np.float64))

    def lipschitz(self) -> float | None:
        """Global Lipschitz constant when one exists in closed form."""
        return None

    def to_dict(self) -> dict:
        raise InputError(f"objective {self.label!r} has no JSON form")

    @property
    def key(self) -> str:
        """Identity used to check that two traces share an objective."""
        try:
            return json.dumps(self.to_dict(), sort_keys=True)
        except InputError:
            return self.label


class LinearObjective(Objective):
    """phi(x) = <c, x>.  With ``c = 0`` this is the constant objective."""

    def __init__(self, c):
        self.c = as_point(c, name="linear.c")
        self.label = "linear"

    def value(self, x):
        return float(self.c @ x)

    def subgradient(self, x):
        return self.c.copy()

    def lipschitz(self):
        return float(np.linalg.norm(self.c))

    def to_dict(self):
        return {"kind": "linear", "c": self.c.tolist()}


class QuadraticObjective(Objective):
    """phi(x) = ||x - r||^2."""

    def __init__(self, r):
        self.r = as_point(r, name="quadratic.r")
        self.label = "quadratic"

    def value(self, x):
        d = x - self.r
        return float(d @ d)

    def subgradient(self, x):
        return 2.0 * (x - self.r)

    def to_dict(self):
        return {"kind": "quadratic", "r": self.r.tolist()}


class OneNormObjective(Objective):
    """phi(x) = ||x||_1; the subgradient picks 0 on zero coordinates."""

    label = "one_norm"

    def value(self, x):
        return float(np.sum(np.abs(x)))

    def subgradient(self, x):
        return np.sign(x).astype(np.float64)

    def lipschitz(self):
        return None  # sqrt(J), dimension dependent

    def to_dict(self):
        return {"kind": "one_norm"}


class MaxLinearObjective(Objective):
    """phi(x) = max_i <c_i, x> + d_i; ties resolve to the lowest index."""

    def __init__(self, C, d):
        C = np.array(C, dtype=np.float64)
        d = np.array(d, dtype=np.float64).reshape(-1)
        if C.ndim != 2 or C.shape[0] == 0 or C.shape[0] != d.size:
            raise InputError("max_linear: need a non-empty list of pieces with matching c and d")
        if not (np.all(np.isfinite(C)) and np.all(np.isfinite(d))):
            raise InputError("max_linear: entries must be finite")
        self.C, self.d = C, d
        self.label = "max_linear"

    def value(self, x):
        return float(np.max(self.C @ x + self.d))

    def subgradient(self, x):
        return self.C[int(np.argmax(self.C @ x + self.d))].copy()

    def lipschitz(self):
        return float(np.max(np.linalg.norm(self.C, axis=1)))

    def to_dict(self):
        return {
            "kind": "max_linear",
            "pieces": [{"c": c.tolist(), "d": float(dd)} for c, dd in zip(self.C, self.d)],
        }


class CustomObjective(Objective):
    """Wrap user callables.  Convexity is the caller's responsibility."""

    def __init__(self, value: Callable, subgradient: Callable, label: str = "custom"):
        self._value = value
        self._subgradient = subgradient
        self.label = label

    def value(self, x):
        return float(self._value(x))

    def subgradient(self, x):
        return np.asarray(self._subgradient(x), dtype=np.float64)


def objective_from_dict(d: dict, where: str = "objective") -> Objective:
    if not isinstance(d, dict):
        raise InputError(f"{where}: expected an object")
    kind = d.get("kind")
    if kind == "linear":
        if "c" not in d:
            raise InputError(f"{where}.c: missing field")
        return LinearObjective(d["c"])
    if kind == "quadratic":
        if "r" not in d:
            raise InputError(f"{where}.r: missing field")
        return QuadraticObjective(d["r"])
    if kind == "one_norm":
        return OneNormObjective()
    if kind == "max_linear":
        pieces = d.get("pieces")
        if not isinstance(pieces, list) or not pieces:
            raise InputError(f"{where}.pieces: expected a non-empty array")
        try:
            return MaxLinearObjective([p["c"] for p in pieces], [p["d"] for p in pieces])
        except (KeyError, TypeError):
            raise InputError(f"{where}.pieces: each piece needs 'c' and 'd'") from None
    raise InputError(f"{where}.kind: unknown objective kind {kind!r}")


def negative_unit_subgradient(obj: Objective, x, zero_tol: float = DEFAULT_ZERO_TOL) -> np.ndarray:
    """Return ``-s/||s||`` for the oracle's subgradient ``s``, or 0 when ``||s|| <= zero_tol``."""
    if not zero_tol > 0:
        raise ConfigurationError("zero_tol must be positive")
    x = np.asarray(x, dtype=np.float64)
    s = np.asarray(obj.subgradient(x), dtype=np.float64)
    if s.shape != x.shape or not np.all(np.isfinite(s)):
        raise ObjectiveError(f"subgradient oracle of {obj.label!r} returned a bad vector at x={x}")
    nrm = float(np.linalg.norm(s))
    if nrm <= zero_tol:
        return np.zeros_like(x)
    return -s / nrm


class BetaSchedule:
    """Geometric step sizes ``eta0 * rho**l`` consumed through a cursor ``l``.

    ``next()`` returns the current term and advances the cursor.  Once
    ``rho**l`` underflows the emission is the smallest positive double, which
    keeps every step inside ]0, 1] while contributing nothing to an O(1)
    iterate.
    """

    def __init__(self, eta0: float, rho: float, cursor: int = 0):
        if not (0.0 < eta0 <= 1.0):
            raise ConfigurationError(f"eta0={eta0!r} must lie in ]0, 1]")
        if not (0.0 < rho < 1.0):
            raise ConfigurationError(f"rho={rho!r} must lie in ]0, 1[")
        self.eta0 = float(eta0)
        self.rho = float(rho)
        self.cursor = int(cursor)
        self.consumed = 0.0

    @property
    def total_bound(self) -> float:
        return self.eta0 / (1.0 - self.rho)

    def peek(self) -> float:
        return max(self.eta0 * self.rho**self.cursor, math.ulp(0.0))

    def next(self) -> float:
        b = self.peek()
        self.cursor += 1
        self.consumed += b
        return b

    def advance(self, n: int) -> "BetaSchedule":
        """Skip ``n`` terms without emitting them."""
        self.cursor += int(n)
        return self

    def tail_bound(self) -> float:
        """Upper bound on the sum of all terms not yet emitted."""
        return self.eta0 * self.rho**self.cursor / (1.0 - self.rho)

    def copy(self) -> "BetaSchedule":
        return copy.copy(self)

    def __repr__(self):
        return f"BetaSchedule(eta0={self.eta0!r}, rho={self.rho!r}, cursor={self.cursor})"


def make_beta_schedule(eta0: float, rho: float) -> BetaSchedule:
    return BetaSchedule(eta0, rho)


class InnerLoopPlan:
    """Chooses the inner-loop length ``N_k`` in ``1..cap`` for each ``k``."""

    def __init__(self, cap: int, rule: Callable[[int], int], name: str = "custom"):
        if int(cap) != cap or cap < 1:
            raise ConfigurationError("inner-loop cap N must be an integer >= 1")
        self.cap = int(cap)
        self.rule = rule
        self.name = name

    def __call__(self, k: int) -> int:
        n = self.rule(k)
        if int(n) != n or not 1 <= n <= self.cap:
            raise ConfigurationError(f"inner-loop plan '{self.name}' gave N_{k}={n!r} outside 1..{self.cap}")
        return int(n)

    @classmethod
    def constant(cls, N: int) -> "InnerLoopPlan":
        return cls(N, lambda k: N, "const")

    @classmethod
    def cycle(cls, N: int) -> "InnerLoopPlan":
        return cls(N, lambda k: k % N + 1, "cycle")

    @classmethod
    def seeded_random(cls, N: int, seed: int) -> "InnerLoopPlan":
        return cls(N, lambda k: int(np.random.default_rng((seed, k)).integers(1, N + 1)), "random")

    @classmethod
    def from_name(cls, name: str, N: int, seed: int = 0) -> "InnerLoopPlan":
        if name == "const":
            return cls.constant(N)
        if name == "cycle":
            return cls.cycle(N)
        if name == "random":
            return cls.seeded_random(N, seed)
        raise ConfigurationError(f"unknown inner-loop schedule {name!r}")


@dataclass(frozen=True)
class AnalysisConstants:
    """Local Lipschitz data around the reference minimizers.

    Only diagnostics read these; the algorithm itself never does.
    """

    r0: float = 1.0
    lbar: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.r0 <= 1.0:
            raise ConfigurationError("r0 must lie in ]0, 1]")
        if not self.lbar >= 1.0:
            raise ConfigurationError("Lbar must be >= 1")


def _inner_loop(obj, beta: BetaSchedule, y, n_steps: int, zero_tol: float):
    y = y.copy()
    used = []
    for _ in range(n_steps):
        b = beta.next()
        v = negative_unit_subgradient(obj, y, zero_tol)
        y = y + b * v
        used.append(b)
    return y, used


def superiorized_inner_loop(
    obj: Objective, beta: BetaSchedule, y_k, N_k: int, zero_tol: float = DEFAULT_ZERO_TOL
) -> np.ndarray:
    """Run ``N_k`` perturbation steps from ``y_k``; consumes ``N_k`` terms of ``beta``."""
    if int(N_k) != N_k or N_k < 1:
        raise ConfigurationError("N_k must be an integer >= 1")
    y_k = as_point(y_k, name="y_k")
    return _inner_loop(obj, beta, y_k, int(N_k), zero_tol)[0]


def run_superiorized_dsap(
    family: ConstraintFamily,
    plan,
    obj: Objective,
    beta: BetaSchedule,
    inner: InnerLoopPlan | int,
    x0,
    stop: StopRule = StopRule(),
    zero_tol: float = DEFAULT_ZERO_TOL,
    *,
    refs=None,
    stride: int = 1,
) -> Trace:
    """Superiorized DSAP: inner subgradient loop, then one DSAP step, per ``k``.

    ``beta`` is copied, so the caller's schedule (including its cursor) is
    left untouched and independent runs never share step-size state.  The
    returned trace's ``beta_sums[k]`` is the total step size consumed by the
    inner loop of outer iteration ``k`` and ``displacements[k]`` the distance
    the inner loop moved the iterate.
    """
    if not zero_tol > 0:
        raise ConfigurationError("zero_tol must be positive")
    if isinstance(inner, int):
        inner = InnerLoopPlan.constant(inner)
    beta = beta.copy()
    beta.consumed = 0.0

    def step(k, y):
        z, used = _inner_loop(obj, beta, y, inner(k), zero_tol)
        return z, math.fsum(used)

    return drive(family, plan, x0, stop, step, obj, refs, stride)
