"""Problem instances with certified reference points, and a brute-force minimizer.

Randomness comes only from ``numpy.random.Generator`` over the PCG64 bit
generator (``numpy.random.default_rng``), seeded explicitly; PCG64 output is
specified bit-for-bit, so problem files reproduce across platforms.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .diagnostics import ReferencePoint
from .errors import InputError
from .geometry import ConstraintFamily, Halfspace, as_point
from .strings import apply_string_unchecked
from .superiorize import (
    LinearObjective,
    MaxLinearObjective,
    Objective,
    OneNormObjective,
    QuadraticObjective,
    objective_from_dict,
)

__all__ = [
    "ProblemSpec",
    "gen_consistent_halfspaces",
    "gen_box_corner",
    "OracleResult",
    "oracle_minimize",
]

INTERIOR_TOL = 1e-10
MINIMIZER_TOL = 1e-8
PROVENANCES = ("closed-form", "oracle")


@dataclass
class ProblemSpec:
    dimension: int
    family: ConstraintFamily
    objective: Objective | None = None
    seed: int | None = None
    known_interior: np.ndarray | None = None
    known_minimizer: np.ndarray | None = None
    minimizer_provenance: str | None = None
    x0: np.ndarray | None = None
    name: str = ""

    def __post_init__(self):
        if self.family.dim != self.dimension:
            raise InputError(f"dimension: {self.dimension} does not match set dimension {self.family.dim}")
        for attr in ("known_interior", "known_minimizer", "x0"):
            v = getattr(self, attr)
            if v is not None:
                setattr(self, attr, as_point(v, self.dimension, name=attr))
        if self.known_interior is not None:
            viol = self.family.max_violation(self.known_interior)
            if viol > INTERIOR_TOL:
                raise InputError(f"known_interior: violation {viol:.3e} exceeds {INTERIOR_TOL}")
        if self.known_minimizer is not None:
            if self.minimizer_provenance not in PROVENANCES:
                raise InputError(f"minimizer_provenance: must be one of {PROVENANCES}")
            viol = self.family.max_violation(self.known_minimizer)
            if viol > MINIMIZER_TOL:
                raise InputError(f"known_minimizer: violation {viol:.3e} exceeds {MINIMIZER_TOL}")

    @property
    def m(self) -> int:
        return self.family.m

    def reference_points(self) -> list[ReferencePoint]:
        refs = []
        if self.known_interior is not None:
            refs.append(ReferencePoint("interior", self.known_interior, "feasible", "generator"))
        if self.known_minimizer is not None:
            refs.append(ReferencePoint("minimizer", self.known_minimizer, "minimal", self.minimizer_provenance))
        return refs

    def to_dict(self) -> dict:
        d = {"dimension": self.dimension, "sets": self.family.to_list()}
        if self.name:
            d["name"] = self.name
        if self.seed is not None:
            d["seed"] = self.seed
        if self.objective is not None:
            d["objective"] = self.objective.to_dict()
        if self.known_interior is not None:
            d["known_interior"] = self.known_interior.tolist()
        if self.known_minimizer is not None:
            d["known_minimizer"] = self.known_minimizer.tolist()
            d["minimizer_provenance"] = self.minimizer_provenance
        if self.x0 is not None:
            d["x0"] = self.x0.tolist()
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json())

    @classmethod
    def from_dict(cls, d: dict) -> "ProblemSpec":
        if not isinstance(d, dict):
            raise InputError("problem: expected a JSON object")
        dim = d.get("dimension")
        if not isinstance(dim, int) or isinstance(dim, bool) or dim < 1:
            raise InputError("dimension: expected a positive integer")
        if "sets" not in d:
            raise InputError("sets: missing field")
        family = ConstraintFamily.from_list(d["sets"])
        obj = objective_from_dict(d["objective"]) if d.get("objective") is not None else None
        seed = d.get("seed")
        if seed is not None and (not isinstance(seed, int) or isinstance(seed, bool)):
            raise InputError("seed: expected an integer")
        return cls(
            dimension=dim,
            family=family,
            objective=obj,
            seed=seed,
            known_interior=d.get("known_interior"),
            known_minimizer=d.get("known_minimizer"),
            minimizer_provenance=d.get("minimizer_provenance"),
            x0=d.get("x0"),
            name=d.get("name", ""),
        )

    @classmethod
    def load(cls, path) -> "ProblemSpec":
        with open(path) as fh:
            try:
                d = json.load(fh)
            except json.JSONDecodeError as exc:
                raise InputError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(d)


def gen_consistent_halfspaces(J: int, m: int, seed: int, margin: float = 0.1) -> ProblemSpec:
    """Random halfspaces ``<a_i, x> <= b_i`` that all contain a drawn point ``z``.

    ``z`` is uniform in ``[-1, 1]^J``, normals are Gaussian directions
    normalised to unit length, and ``b_i = <a_i, z> + s_i`` with slack ``s_i``
    uniform in ``[margin, 2 margin]``.  A start point ``x0 = z + 5 g`` with
    standard Gaussian ``g`` is drawn last and stored with the problem.
    """
    if J < 1 or m < 1:
        raise InputError("J and m must be >= 1")
    if not margin >= 0:
        raise InputError("margin must be non-negative")
    rng = np.random.default_rng(seed)
    z = rng.uniform(-1.0, 1.0, J)
    A = rng.standard_normal((m, J))
    A /= np.linalg.norm(A, axis=1, keepdims=True)
    slack = rng.uniform(margin, 2.0 * margin, m)
    x0 = z + 5.0 * rng.standard_normal(J)
    sets = [Halfspace(A[i], float(A[i] @ z + slack[i])) for i in range(m)]
    return ProblemSpec(
        dimension=J,
        family=ConstraintFamily(sets),
        seed=int(seed),
        known_interior=z,
        x0=x0,
        name=f"halfspaces-J{J}-m{m}-seed{seed}",
    )


def gen_box_corner(J: int) -> ProblemSpec:
    """Minimize ``sum(x)`` subject to ``x_j >= 1``; the minimizer is the all-ones corner."""
    if J < 1:
        raise InputError("J must be >= 1")
    sets = []
    for j in range(J):
        a = np.zeros(J)
        a[j] = -1.0
        sets.append(Halfspace(a, -1.0))
    return ProblemSpec(
        dimension=J,
        family=ConstraintFamily(sets),
        objective=LinearObjective(np.ones(J)),
        known_interior=np.full(J, 2.0),
        known_minimizer=np.ones(J),
        minimizer_provenance="closed-form",
        x0=np.full(J, 3.0),
        name=f"box-corner-J{J}",
    )


@dataclass
class OracleResult:
    point: np.ndarray
    phi: float
    violation: float
    mode: str
    flagged: bool = False  # no point met the feasibility tolerance

    def reference(self, label: str = "minimizer") -> ReferencePoint:
        return ReferencePoint(label, self.point, "minimal", "oracle")


MAX_GRID_POINTS = 20_000_000


def _values_many(obj: Objective, X: np.ndarray) -> np.ndarray:
    if isinstance(obj, LinearObjective):
        return X @ obj.c
    if isinstance(obj, QuadraticObjective):
        D = X - obj.r
        return np.einsum("ij,ij->i", D, D)
    if isinstance(obj, OneNormObjective):
        return np.abs(X).sum(axis=1)
    if isinstance(obj, MaxLinearObjective):
        return (X @ obj.C.T + obj.d).max(axis=1)
    return np.array([obj.value(x) for x in X])


def _grid_minimize(spec: ProblemSpec, h: float | None, bounds) -> OracleResult:
    J = spec.dimension
    if J > 5:
        raise InputError("grid mode supports dimension <= 5")
    if h is None:
        h = 1e-3 if J <= 2 else 1e-2
    if bounds is None:
        center = next(
            (p for p in (spec.known_interior, spec.known_minimizer, spec.x0) if p is not None),
            np.zeros(J),
        )
        half = 2.0 if J <= 2 else 1.0
        lo, hi = center - half, center + half
    else:
        lo, hi = (as_point(b, J, name="bounds") for b in bounds)
        if np.any(lo > hi):
            raise InputError("bounds: lower exceeds upper")
    axes = [lo[j] + h * np.arange(int(math.floor((hi[j] - lo[j]) / h + 1e-9)) + 1) for j in range(J)]
    shape = tuple(a.size for a in axes)
    total = int(np.prod(shape))
    if total > MAX_GRID_POINTS:
        raise InputError(f"grid of {total} points exceeds {MAX_GRID_POINTS}; shrink bounds or raise h")
    feas_tol = 2.0 * h
    best_phi, best_x, best_v = math.inf, None, math.inf
    chunk = 1_000_000
    for start in range(0, total, chunk):
        idx = np.unravel_index(np.arange(start, min(start + chunk, total)), shape)
        X = np.stack([axes[j][idx[j]] for j in range(J)], axis=1)
        viol = spec.family.distances_many(X).max(axis=1)
        ok = viol <= feas_tol
        if not np.any(ok):
            continue
        Xf, vf = X[ok], viol[ok]
        phis = _values_many(spec.objective, Xf)
        i = int(np.argmin(phis))
        if phis[i] < best_phi:
            best_phi, best_x, best_v = float(phis[i]), Xf[i].copy(), float(vf[i])
    if best_x is None:
        return OracleResult(np.full(J, np.nan), math.inf, math.inf, "grid", flagged=True)
    return OracleResult(best_x, best_phi, best_v, "grid")


def _long_run_minimize(spec: ProblemSpec, budget: int, tol: float, sweeps: int) -> OracleResult:
    fam, obj = spec.family, spec.objective
    order = list(range(fam.m))

    def restore(x):
        for _ in range(sweeps):
            nxt = apply_string_unchecked(order, fam, x)
            if np.array_equal(nxt, x):
                break
            x = nxt
        return x

    start = next((p for p in (spec.known_interior, spec.x0) if p is not None), np.zeros(spec.dimension))
    x = restore(start.copy())
    best_x, best_phi, best_v = None, math.inf, math.inf
    unchanged = 0
    for n in range(1, budget + 1):
        v = fam.max_violation_unchecked(x)
        phi = obj.value(x)
        if v <= tol and phi < best_phi:
            best_x, best_phi, best_v = x.copy(), phi, v
        s = np.asarray(obj.subgradient(x), dtype=np.float64)
        ns = float(np.linalg.norm(s))
        if ns == 0.0:
            break
        nxt = restore(x - s / (ns * math.sqrt(n)))
        unchanged = unchanged + 1 if np.array_equal(nxt, x) else 0
        x = nxt
        if unchanged >= 100:
            break
    v = fam.max_violation_unchecked(x)
    phi = obj.value(x)
    if v <= tol and phi < best_phi:
        best_x, best_phi, best_v = x.copy(), phi, v
    if best_x is None:
        return OracleResult(x, phi, v, "long_run", flagged=True)
    return OracleResult(best_x, best_phi, best_v, "long_run")


def oracle_minimize(
    spec: ProblemSpec,
    budget: int = 1_000_000,
    *,
    mode: str = "grid",
    h: float | None = None,
    bounds=None,
    tol: float = 1e-8,
    sweeps: int = 200,
) -> OracleResult:
    """Approximate a minimizer of the objective over the feasible set.

    ``grid``: exhaustive search on a lattice of step ``h`` (default ``1e-3``
    in dimension <= 2, ``1e-2`` up to 5) over ``bounds``; points within
    ``2h`` of every set count as feasible.  ``long_run``: projected
    subgradient descent with normalised steps ``1/sqrt(n)``, restoring
    feasibility after each step by up to ``sweeps`` cyclic projection sweeps;
    the best point within ``tol`` is returned.  ``flagged`` marks results
    where no point met the tolerance.
    """
    if spec.objective is None:
        raise InputError("objective: problem has no objective to minimize")
    if mode == "grid":
        return _grid_minimize(spec, h, bounds)
    if mode == "long_run":
        if budget < 1:
            raise InputError("budget must be >= 1")
        return _long_run_minimize(spec, int(budget), tol, sweeps)
    raise InputError(f"unknown oracle mode {mode!r}")
