"""Index vectors, string operators and amalgamators.

An index vector ``t = (t_1, ..., t_q)`` names a string of successive
projections ``P[t] = P_{t_q} ... P_{t_1}``.  An amalgamator ``(Omega, w)``
averages the end-points of several strings with positive weights summing to
one.  Indices are 1-based throughout the public API.

Plan schedules produce one amalgamator per outer iteration ``k`` and check
membership in the admissible class (string lengths bounded by ``qbar``,
weights bounded below by ``delta``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ConfigurationError, InputError, InvalidAmalgamatorError
from .geometry import ConstraintFamily, as_point

WEIGHT_SUM_TOL = 1e-12

IndexVector = tuple  # tuple[int, ...], 1-based


def _as_index_vector(t) -> tuple[int, ...]:
    try:
        tv = tuple(int(i) for i in t)
    except (TypeError, ValueError):
        raise InputError(f"index vector must be a sequence of integers, got {t!r}") from None
    if any(int(i) != i for i in t):
        raise InputError(f"index vector must be a sequence of integers, got {t!r}")
    if not tv:
        raise InputError("index vector must have length >= 1")
    return tv


@dataclass(frozen=True, eq=False)
class Amalgamator:
    """A fit set of index vectors ``strings`` with positive ``weights``.

    Construction requires the weights to sum to one within ``1e-12``; use
    :meth:`normalized` to rescale raw positive weights instead.  Fitness with
    respect to a particular family size ``m`` is checked separately by
    :func:`validate_fit` / :meth:`check`.
    """

    strings: tuple[tuple[int, ...], ...]
    weights: np.ndarray
    _zero_based: tuple[tuple[int, ...], ...] = field(init=False, repr=False)

    def __post_init__(self):
        strings = tuple(_as_index_vector(t) for t in self.strings)
        if not strings:
            raise InvalidAmalgamatorError("amalgamator needs at least one string")
        if len(set(strings)) != len(strings):
            raise InvalidAmalgamatorError("duplicate index vectors in amalgamator")
        for t in strings:
            if min(t) < 1:
                raise InvalidAmalgamatorError(f"indices are 1-based, got {t}")
        w = np.array(self.weights, dtype=np.float64).reshape(-1)
        if w.size != len(strings):
            raise InvalidAmalgamatorError(
                f"{len(strings)} strings but {w.size} weights"
            )
        if not np.all(np.isfinite(w)) or np.any(w <= 0.0):
            raise InvalidAmalgamatorError("weights must be finite and strictly positive")
        total = math.fsum(w.tolist())
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            raise InvalidAmalgamatorError(f"weights sum to {total!r}, not 1")
        w.setflags(write=False)
        object.__setattr__(self, "strings", strings)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "_zero_based", tuple(tuple(i - 1 for i in t) for t in strings))

    @classmethod
    def normalized(cls, strings: Iterable[Sequence[int]], weights: Sequence[float]) -> "Amalgamator":
        w = np.array(weights, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(w)) or np.any(w <= 0.0):
            raise InvalidAmalgamatorError("weights must be finite and strictly positive")
        return cls(tuple(strings), w / math.fsum(w.tolist()))

    @property
    def max_index(self) -> int:
        return max(max(t) for t in self.strings)

    @property
    def max_length(self) -> int:
        return max(len(t) for t in self.strings)

    def check(self, m: int) -> None:
        """Raise unless every index lies in ``1..m`` and the set is fit."""
        if self.max_index > m:
            raise InputError(f"index {self.max_index} out of range for m={m}")
        if not validate_fit(self.strings, m):
            raise InvalidAmalgamatorError(f"strings are not fit for m={m}")

    def to_dict(self) -> dict:
        return {"strings": [list(t) for t in self.strings], "weights": self.weights.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Amalgamator":
        if not isinstance(d, dict):
            raise InputError("amalgamator: expected an object")
        for key in ("strings", "weights"):
            if key not in d:
                raise InputError(f"amalgamator.{key}: missing field")
        if not isinstance(d["strings"], list) or not all(isinstance(t, list) for t in d["strings"]):
            raise InputError("amalgamator.strings: expected an array of integer arrays")
        if not isinstance(d["weights"], list):
            raise InputError("amalgamator.weights: expected an array of numbers")
        return cls(tuple(tuple(t) for t in d["strings"]), d["weights"])

    def __eq__(self, other):
        if not isinstance(other, Amalgamator):
            return NotImplemented
        return self.strings == other.strings and np.array_equal(self.weights, other.weights)

    def __hash__(self):
        return hash((self.strings, self.weights.tobytes()))


@dataclass(frozen=True)
class MStarParams:
    """Admissibility bounds: weights ``>= delta`` and string lengths ``<= qbar``."""

    delta: float
    qbar: int

    def check(self, m: int) -> None:
        if not (0.0 < self.delta < 1.0 / m):
            raise ConfigurationError(f"delta={self.delta} must lie in ]0, 1/m[ with m={m}")
        if int(self.qbar) != self.qbar or self.qbar < m:
            raise ConfigurationError(f"qbar={self.qbar} must be an integer >= m={m}")

    @classmethod
    def default_for(cls, am: Amalgamator, m: int) -> "MStarParams":
        """Loosest bounds that still admit ``am`` (half its smallest weight)."""
        delta = 0.5 * min(float(am.weights.min()), 1.0 / m)
        return cls(delta=delta, qbar=max(m, am.max_length))


def validate_fit(strings: Iterable[Sequence[int]], m: int) -> bool:
    """True iff every index ``1..m`` occurs in at least one string."""
    seen = set()
    for t in strings:
        seen.update(int(i) for i in t)
    return all(i in seen for i in range(1, m + 1))


def validate_m_star(am: Amalgamator, params: MStarParams, m: int) -> bool:
    """True iff ``am`` is fit for ``m`` and meets ``params``; never raises.

    Out-of-range ``params`` (for instance ``qbar < m``) admit nothing, so the
    answer is then ``False``.
    """
    try:
        params.check(m)
    except ConfigurationError:
        return False
    if am.max_index > m:
        return False
    if not validate_fit(am.strings, m):
        return False
    if am.max_length > params.qbar:
        return False
    return bool(np.all(am.weights >= params.delta))


def kaczmarz_plan(m: int) -> Amalgamator:
    """One string through every set in order: the sequential cyclic method."""
    if m < 1:
        raise InputError("m must be >= 1")
    return Amalgamator((tuple(range(1, m + 1)),), [1.0])


def cimmino_plan(m: int) -> Amalgamator:
    """``m`` singleton strings with equal weights: the simultaneous method."""
    if m < 1:
        raise InputError("m must be >= 1")
    return Amalgamator(tuple((i,) for i in range(1, m + 1)), np.full(m, 1.0 / m))


def apply_string_unchecked(t0: Sequence[int], family: ConstraintFamily, x: np.ndarray) -> np.ndarray:
    # t0 is 0-based here
    sets = family.sets
    for i in t0:
        x = sets[i].project_unchecked(x)
    return x


def apply_string(t: Sequence[int], family: ConstraintFamily, x) -> np.ndarray:
    """Apply ``P[t]``: project onto ``C_{t_1}`` first and ``C_{t_q}`` last."""
    t = _as_index_vector(t)
    if min(t) < 1 or max(t) > family.m:
        raise InputError(f"index vector {t} out of range for m={family.m}")
    x = as_point(x, family.dim)
    return apply_string_unchecked([i - 1 for i in t], family, x)


def apply_amalgamator_unchecked(am: Amalgamator, family: ConstraintFamily, x: np.ndarray) -> np.ndarray:
    strings = am._zero_based
    if len(strings) == 1:
        # weight is exactly 1.0 for a lone string
        return apply_string_unchecked(strings[0], family, x)
    acc = np.zeros_like(x)
    for t0, wt in zip(strings, am.weights):
        acc += wt * apply_string_unchecked(t0, family, x)
    return acc


def apply_amalgamator(am: Amalgamator, family: ConstraintFamily, x) -> np.ndarray:
    """Weighted combination of string end-points, accumulated left to right."""
    if not isinstance(am, Amalgamator):
        raise InvalidAmalgamatorError(f"not an amalgamator: {am!r}")
    am.check(family.m)
    x = as_point(x, family.dim)
    return apply_amalgamator_unchecked(am, family, x)


class PlanSchedule:
    """Maps an outer iteration index ``k`` to an admissible amalgamator.

    ``rule`` is any callable ``k -> Amalgamator``.  Every produced amalgamator
    is checked against ``params`` for the family size ``m``; the check result
    is cached per distinct amalgamator object so constant schedules pay once.
    """

    def __init__(self, rule: Callable[[int], Amalgamator], params: MStarParams, m: int, name: str = "custom"):
        params.check(m)
        self.rule = rule
        self.params = params
        self.m = m
        self.name = name
        self._validated: dict[int, Amalgamator] = {}

    def __call__(self, k: int) -> Amalgamator:
        am = self.rule(k)
        key = id(am)
        if self._validated.get(key) is not am:
            if not isinstance(am, Amalgamator) or not validate_m_star(am, self.params, self.m):
                raise ConfigurationError(
                    f"plan schedule '{self.name}' produced an inadmissible amalgamator at k={k}"
                )
            if len(self._validated) > 4096:
                self._validated.clear()
            self._validated[key] = am
        return am

    @classmethod
    def constant(cls, am: Amalgamator, m: int, params: MStarParams | None = None) -> "PlanSchedule":
        am.check(m)
        params = params or MStarParams.default_for(am, m)
        return cls(lambda k: am, params, m, name="constant")

    @classmethod
    def cyclic_rotation(cls, am: Amalgamator, m: int, params: MStarParams | None = None) -> "PlanSchedule":
        """Relabel indices by ``i -> ((i - 1 + k) mod m) + 1`` at iteration ``k``.

        Rotation preserves string lengths, weights and fitness, so every
        rotated amalgamator stays admissible.
        """
        am.check(m)
        params = params or MStarParams.default_for(am, m)
        rotations = [
            Amalgamator(
                tuple(tuple((i - 1 + s) % m + 1 for i in t) for t in am.strings), am.weights
            )
            for s in range(m)
        ]
        return cls(lambda k: rotations[k % m], params, m, name="cyclic_rotation")

    @classmethod
    def seeded_random(cls, m: int, params: MStarParams, seed: int) -> "PlanSchedule":
        """A fresh random admissible amalgamator per ``k``, reproducible from ``seed``."""
        params.check(m)
        return cls(lambda k: random_amalgamator(m, params, (seed, k)), params, m, name="seeded_random")


def random_amalgamator(m: int, params: MStarParams, seed) -> Amalgamator:
    """Draw an amalgamator satisfying ``params`` (fit, lengths, weight floor).

    A random permutation of ``1..m`` is cut into consecutive strings of
    length at most ``min(qbar, m)``; weights are ``delta`` plus a Dirichlet
    share of the remaining mass.
    """
    params.check(m)
    rng = np.random.default_rng(seed)
    perm = (rng.permutation(m) + 1).tolist()
    cap = min(int(params.qbar), m)
    strings = []
    pos = 0
    while pos < m:
        q = int(rng.integers(1, cap + 1))
        strings.append(tuple(perm[pos:pos + q]))
        pos += q
    s = len(strings)
    spare = 1.0 - s * params.delta
    w = params.delta + spare * rng.dirichlet(np.ones(s))
    return Amalgamator(tuple(strings), w)
