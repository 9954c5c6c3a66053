"""Elementary closed convex sets in R^J with exact metric projections.

Four primitives are supported, each with a closed-form projection:

* ``Hyperplane``  {x : <a, x> = b}
* ``Halfspace``   {x : <a, x> <= b}
* ``Ball``        {x : ||x - c|| <= r}
* ``Box``         {x : l <= x <= u}, bounds may be +-inf

Points are plain one-dimensional ``float64`` numpy arrays.  The ``project``
methods also accept a stack of points with shape ``(n, J)``; this is used by
the grid oracle and by the vectorised violation measure.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import InputError, InvalidSetError

__all__ = [
    "as_point",
    "ConvexSet",
    "Hyperplane",
    "Halfspace",
    "Ball",
    "Box",
    "ConstraintFamily",
    "project",
    "distance",
    "contains",
    "max_violation",
    "set_from_dict",
    "set_to_dict",
]


def as_point(x, dim: int | None = None, name: str = "x") -> np.ndarray:
    """Coerce ``x`` to a finite 1-D float64 array, optionally of length ``dim``."""
    try:
        arr = np.asarray(x, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise InputError(f"{name}: not a numeric vector ({exc})") from None
    if arr.ndim != 1 or arr.size == 0:
        raise InputError(f"{name}: expected a non-empty 1-D vector, got shape {arr.shape}")
    if dim is not None and arr.size != dim:
        raise InputError(f"{name}: dimension {arr.size} does not match {dim}")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name}: entries must be finite")
    return arr


def _vector_field(v, name: str, allow_inf: bool = False) -> np.ndarray:
    arr = np.array(v, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise InvalidSetError(f"{name}: expected a non-empty 1-D vector")
    bad = np.isnan(arr) if allow_inf else ~np.isfinite(arr)
    if np.any(bad):
        raise InvalidSetError(f"{name}: entries must be {'non-NaN' if allow_inf else 'finite'}")
    arr.setflags(write=False)
    return arr


class ConvexSet:
    """Common interface of the closed convex primitives."""

    kind: str = ""

    @property
    def dim(self) -> int:
        raise NotImplementedError

    def project_unchecked(self, x: np.ndarray) -> np.ndarray:
        """Projection without input validation; ``x`` may be ``(J,)`` or ``(n, J)``."""
        raise NotImplementedError

    def distance_unchecked(self, x: np.ndarray) -> np.ndarray | float:
        return np.linalg.norm(x - self.project_unchecked(x), axis=-1)

    def _check(self, x) -> np.ndarray:
        return as_point(x, self.dim)

    def project(self, x) -> np.ndarray:
        return self.project_unchecked(self._check(x))

    def distance(self, x) -> float:
        return float(self.distance_unchecked(self._check(x)))

    def contains(self, x, tol: float = 0.0) -> bool:
        if tol < 0:
            raise InputError("tol must be non-negative")
        return self.distance(x) <= tol

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class _AffineSet(ConvexSet):
    a: np.ndarray
    b: float
    _aa: float = field(init=False, repr=False)
    _anorm: float = field(init=False, repr=False)

    def __post_init__(self):
        a = _vector_field(self.a, f"{self.kind}.a")
        b = float(self.b)
        if not math.isfinite(b):
            raise InvalidSetError(f"{self.kind}.b must be finite")
        aa = float(a @ a)
        if aa <= 0.0:
            raise InvalidSetError(f"{self.kind}: normal vector must be nonzero")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "_aa", aa)
        object.__setattr__(self, "_anorm", math.sqrt(aa))

    @property
    def dim(self) -> int:
        return self.a.size

    def to_dict(self) -> dict:
        return {"kind": self.kind, "a": self.a.tolist(), "b": self.b}


class Hyperplane(_AffineSet):
    kind = "hyperplane"

    def project_unchecked(self, x):
        s = x @ self.a - self.b
        if x.ndim == 1:
            return x - (s / self._aa) * self.a
        return x - np.multiply.outer(s / self._aa, self.a)

    def distance_unchecked(self, x):
        return np.abs(x @ self.a - self.b) / self._anorm


class Halfspace(_AffineSet):
    kind = "halfspace"

    def project_unchecked(self, x):
        s = x @ self.a - self.b
        if x.ndim == 1:
            if s <= 0.0:
                return x
            return x - (s / self._aa) * self.a
        return x - np.multiply.outer(np.maximum(s, 0.0) / self._aa, self.a)

    def distance_unchecked(self, x):
        return np.maximum(x @ self.a - self.b, 0.0) / self._anorm


@dataclass(frozen=True, eq=False)
class Ball(ConvexSet):
    c: np.ndarray
    r: float
    kind = "ball"

    def __post_init__(self):
        c = _vector_field(self.c, "ball.c")
        r = float(self.r)
        if not (math.isfinite(r) and r > 0.0):
            raise InvalidSetError("ball.r must be a finite positive number")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "r", r)

    @property
    def dim(self) -> int:
        return self.c.size

    def project_unchecked(self, x):
        d = x - self.c
        nrm = np.linalg.norm(d, axis=-1)
        if x.ndim == 1:
            # the center itself is inside, so the undefined direction never matters
            if nrm <= self.r:
                return x
            return self.c + (self.r / nrm) * d
        scale = np.where(nrm > self.r, self.r / np.where(nrm > 0, nrm, 1.0), 1.0)
        out = self.c + scale[:, None] * d
        inside = nrm <= self.r
        out[inside] = x[inside]
        return out

    def distance_unchecked(self, x):
        return np.maximum(np.linalg.norm(x - self.c, axis=-1) - self.r, 0.0)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "c": self.c.tolist(), "r": self.r}


@dataclass(frozen=True, eq=False)
class Box(ConvexSet):
    l: np.ndarray  # noqa: E741
    u: np.ndarray
    kind = "box"

    def __post_init__(self):
        lo = _vector_field(self.l, "box.l", allow_inf=True)
        hi = _vector_field(self.u, "box.u", allow_inf=True)
        if lo.size != hi.size:
            raise InvalidSetError("box.l and box.u have different lengths")
        if np.any(lo > hi):
            raise InvalidSetError("box: lower bound exceeds upper bound")
        object.__setattr__(self, "l", lo)
        object.__setattr__(self, "u", hi)

    @property
    def dim(self) -> int:
        return self.l.size

    def project_unchecked(self, x):
        return np.minimum(np.maximum(x, self.l), self.u)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "l": _encode_bounds(self.l), "u": _encode_bounds(self.u)}


def _encode_bounds(v: np.ndarray) -> list:
    out = []
    for t in v.tolist():
        if t == math.inf:
            out.append("inf")
        elif t == -math.inf:
            out.append("-inf")
        else:
            out.append(t)
    return out


def _decode_bounds(v, name: str) -> list[float]:
    if not isinstance(v, list):
        raise InputError(f"{name}: expected an array of numbers")
    out = []
    for t in v:
        if isinstance(t, str):
            if t not in ("inf", "-inf", "+inf"):
                raise InputError(f"{name}: unrecognised bound string {t!r}")
            out.append(float(t))
        elif isinstance(t, (int, float)) and not isinstance(t, bool):
            out.append(float(t))
        else:
            raise InputError(f"{name}: non-numeric entry {t!r}")
    return out


def _numbers(v, name: str) -> list[float]:
    if not isinstance(v, list) or not all(
        isinstance(t, (int, float)) and not isinstance(t, bool) for t in v
    ):
        raise InputError(f"{name}: expected an array of numbers")
    return [float(t) for t in v]


def _number(v, name: str) -> float:
    if not isinstance(v, (int, float)) or isinstance(v, bool):
        raise InputError(f"{name}: expected a number")
    return float(v)


def set_from_dict(d: dict, where: str = "set") -> ConvexSet:
    """Build a set from its JSON object form (see ``set_to_dict``)."""
    if not isinstance(d, dict):
        raise InputError(f"{where}: expected an object")
    kind = d.get("kind")

    def need(key):
        if key not in d:
            raise InputError(f"{where}.{key}: missing field")
        return d[key]

    try:
        if kind == "hyperplane":
            return Hyperplane(_numbers(need("a"), f"{where}.a"), _number(need("b"), f"{where}.b"))
        if kind == "halfspace":
            return Halfspace(_numbers(need("a"), f"{where}.a"), _number(need("b"), f"{where}.b"))
        if kind == "ball":
            return Ball(_numbers(need("c"), f"{where}.c"), _number(need("r"), f"{where}.r"))
        if kind == "box":
            return Box(_decode_bounds(need("l"), f"{where}.l"), _decode_bounds(need("u"), f"{where}.u"))
    except InvalidSetError as exc:
        raise InvalidSetError(f"{where}: {exc}") from None
    raise InputError(f"{where}.kind: unknown set kind {kind!r}")


def set_to_dict(s: ConvexSet) -> dict:
    return s.to_dict()


class ConstraintFamily:
    """An ordered family C_1, ..., C_m of convex sets of a common dimension.

    Indices exposed to users are 1-based; ``family[i]`` is 0-based like any
    Python sequence.  Nonemptiness of the intersection is the caller's
    responsibility.
    """

    def __init__(self, sets: Iterable[ConvexSet]):
        sets = tuple(sets)
        if not sets:
            raise InputError("constraint family must contain at least one set")
        for s in sets:
            if not isinstance(s, ConvexSet):
                raise InputError(f"not a convex set: {s!r}")
        dims = {s.dim for s in sets}
        if len(dims) != 1:
            raise InputError(f"sets have mixed dimensions {sorted(dims)}")
        self.sets = sets
        self.dim = dims.pop()
        self._build_stacks()

    def _build_stacks(self):
        # Stacked affine data makes the per-iterate violation a single mat-vec.
        self._half = [s for s in self.sets if isinstance(s, Halfspace)]
        self._hyper = [s for s in self.sets if isinstance(s, Hyperplane)]
        self._other = [s for s in self.sets if not isinstance(s, _AffineSet)]
        if self._half:
            self._hA = np.array([s.a for s in self._half])
            self._hb = np.array([s.b for s in self._half])
            self._hn = np.array([s._anorm for s in self._half])
        if self._hyper:
            self._pA = np.array([s.a for s in self._hyper])
            self._pb = np.array([s.b for s in self._hyper])
            self._pn = np.array([s._anorm for s in self._hyper])

    def __len__(self) -> int:
        return len(self.sets)

    def __getitem__(self, i: int) -> ConvexSet:
        return self.sets[i]

    def __iter__(self):
        return iter(self.sets)

    @property
    def m(self) -> int:
        return len(self.sets)

    def distances(self, x) -> np.ndarray:
        """Per-set distances d(x, C_i), in family order."""
        x = as_point(x, self.dim)
        return np.array([s.distance_unchecked(x) for s in self.sets])

    def max_violation_unchecked(self, x: np.ndarray) -> float:
        worst = 0.0
        if self._half:
            worst = max(worst, float(np.max((self._hA @ x - self._hb) / self._hn)))
        if self._hyper:
            worst = max(worst, float(np.max(np.abs(self._pA @ x - self._pb) / self._pn)))
        for s in self._other:
            worst = max(worst, float(s.distance_unchecked(x)))
        return worst

    def max_violation(self, x) -> float:
        return self.max_violation_unchecked(as_point(x, self.dim))

    def distances_many(self, X: np.ndarray) -> np.ndarray:
        """Distances for a stack of points; returns shape ``(n, m)``."""
        return np.stack([np.asarray(s.distance_unchecked(X)) for s in self.sets], axis=-1)

    def to_list(self) -> list[dict]:
        return [s.to_dict() for s in self.sets]

    @classmethod
    def from_list(cls, items: Sequence[dict], where: str = "sets") -> "ConstraintFamily":
        if not isinstance(items, list) or not items:
            raise InputError(f"{where}: expected a non-empty array of sets")
        return cls(set_from_dict(d, f"{where}[{i}]") for i, d in enumerate(items))

    def __repr__(self) -> str:
        kinds = ", ".join(s.kind for s in self.sets)
        return f"ConstraintFamily(dim={self.dim}, sets=[{kinds}])"


def project(cset: ConvexSet, x) -> np.ndarray:
    """Metric projection of ``x`` onto ``cset``."""
    return cset.project(x)


def distance(cset: ConvexSet, x) -> float:
    """Euclidean distance from ``x`` to ``cset``."""
    return cset.distance(x)


def contains(cset: ConvexSet, x, tol: float = 0.0) -> bool:
    return cset.contains(x, tol)


def max_violation(family: ConstraintFamily, x) -> float:
    """Largest distance from ``x`` to any set of the family."""
    if not isinstance(family, ConstraintFamily):
        family = ConstraintFamily(family)
    return family.max_violation(x)
