"""Dynamic string-averaging projection (DSAP) runs and their traces.

``run_dsap`` iterates ``x <- P_{Omega_k, w_k}(x)``; ``run_perturbed_dsap``
applies the same operator to ``y + beta_k v_k``.  Both share one driver, so a
perturbation schedule that is identically zero reproduces the plain run bit
for bit.

Runs terminate on one of three finite proxies for the asymptotic recursion:

* ``converged``: the current iterate violates every set by at most
  ``violation_tol`` *and* the perturbation about to be applied would move it
  by at most ``violation_tol`` (for unperturbed runs the second half is
  vacuous);
* ``max_iters``: ``k`` reached ``max_iters``;
* ``stalled``: the last ``stall_window`` steps each moved the iterate by at
  most ``stall_tol``.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigurationError, InputError, TraceError
from .geometry import ConstraintFamily, as_point
from .strings import Amalgamator, PlanSchedule, apply_amalgamator, apply_amalgamator_unchecked

__all__ = [
    "StopRule",
    "PerturbationSchedule",
    "random_unit_directions",
    "TraceRecord",
    "Trace",
    "dsap_step",
    "run_dsap",
    "run_perturbed_dsap",
]


@dataclass(frozen=True)
class StopRule:
    violation_tol: float = 1e-8
    max_iters: int = 100_000
    stall_tol: float = 0.0
    stall_window: int = 50

    def check(self) -> None:
        if not (self.violation_tol > 0 and math.isfinite(self.violation_tol)):
            raise ConfigurationError("violation_tol must be a finite positive number")
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise ConfigurationError("max_iters must be a positive integer")
        if not (self.stall_tol >= 0):
            raise ConfigurationError("stall_tol must be non-negative")
        if self.stall_window < 1:
            raise ConfigurationError("stall_window must be >= 1")


def random_unit_directions(dim: int, seed: int) -> Callable[[int, np.ndarray], np.ndarray]:
    """Direction rule returning a seeded uniformly random unit vector for each ``k``.

    The vector for ``k`` depends only on ``(seed, k)``, so the rule holds no
    state and can be shared between runs.
    """

    def direction(k: int, y: np.ndarray) -> np.ndarray:
        g = np.random.default_rng((seed, k)).standard_normal(dim)
        return g / np.linalg.norm(g)

    return direction


def fixed_direction(v) -> Callable[[int, np.ndarray], np.ndarray]:
    v = as_point(v, name="v")
    return lambda k, y: v


@dataclass(frozen=True)
class PerturbationSchedule:
    """Bounded perturbations ``beta_k * v_k`` with a structural summability certificate.

    Summability of ``beta_k`` cannot be observed over finitely many steps, so
    every schedule carries a declared bound ``beta_total_bound`` on the full
    series.  The constructors below derive it in closed form; ``certified``
    accepts a caller-supplied bound.  During a run each ``beta_k`` is checked
    to be finite and non-negative, each ``||v_k|| <= bound_v`` and the running
    total against the certificate.
    """

    beta: Callable[[int], float]
    direction: Callable[[int, np.ndarray], np.ndarray]
    bound_v: float
    beta_total_bound: float
    certificate: str

    def __post_init__(self):
        if not (self.bound_v >= 0 and math.isfinite(self.bound_v)):
            raise ConfigurationError("bound_v must be finite and non-negative")
        if not (self.beta_total_bound >= 0 and math.isfinite(self.beta_total_bound)):
            raise ConfigurationError("beta_total_bound must be finite and non-negative")

    @classmethod
    def geometric(cls, beta0: float, ratio: float, direction, bound_v: float = 1.0) -> "PerturbationSchedule":
        """``beta_k = beta0 * ratio**k`` with ``0 <= ratio < 1``."""
        if not (beta0 >= 0 and math.isfinite(beta0)):
            raise ConfigurationError("beta0 must be finite and non-negative")
        if not (0.0 <= ratio < 1.0):
            raise ConfigurationError("geometric ratio must lie in [0, 1)")
        return cls(
            beta=lambda k: beta0 * ratio**k,
            direction=direction,
            bound_v=bound_v,
            beta_total_bound=beta0 / (1.0 - ratio),
            certificate=f"geometric(beta0={beta0!r}, ratio={ratio!r})",
        )

    @classmethod
    def finite_support(cls, betas: Sequence[float], direction, bound_v: float = 1.0) -> "PerturbationSchedule":
        betas = [float(b) for b in betas]
        if any(not (b >= 0 and math.isfinite(b)) for b in betas):
            raise ConfigurationError("betas must be finite and non-negative")
        return cls(
            beta=lambda k: betas[k] if k < len(betas) else 0.0,
            direction=direction,
            bound_v=bound_v,
            beta_total_bound=math.fsum(betas),
            certificate=f"finite_support(n={len(betas)})",
        )

    @classmethod
    def certified(cls, beta, direction, bound_v: float, total_bound: float) -> "PerturbationSchedule":
        return cls(beta, direction, bound_v, float(total_bound), f"caller_bound({total_bound!r})")

    @classmethod
    def zero(cls) -> "PerturbationSchedule":
        return cls(lambda k: 0.0, lambda k, y: np.zeros_like(y), 0.0, 0.0, "zero")


@dataclass
class TraceRecord:
    k: int
    iterate: np.ndarray
    max_violation: float
    phi: float | None = None
    ref_distances: dict[str, float] = field(default_factory=dict)


@dataclass
class Trace:
    """Per-iterate records of a run plus per-step perturbation bookkeeping.

    ``beta_sums[k]`` and ``displacements[k]`` describe the transition from
    iterate ``k`` to ``k + 1``: the total step size consumed and the distance
    travelled by the perturbation before projecting.  They are kept for every
    ``k`` even when ``stride > 1`` thins the records.
    """

    records: list[TraceRecord] = field(default_factory=list)
    stride: int = 1
    stop_reason: str = ""
    beta_sums: list[float] = field(default_factory=list)
    displacements: list[float] = field(default_factory=list)
    objective_label: str | None = None
    ref_labels: tuple[str, ...] = ()

    def __len__(self) -> int:
        return len(self.records)

    @property
    def final(self) -> TraceRecord:
        return self.records[-1]

    @property
    def thinned(self) -> bool:
        return self.stride != 1

    @property
    def iterates(self) -> np.ndarray:
        return np.array([r.iterate for r in self.records])

    @property
    def ks(self) -> list[int]:
        return [r.k for r in self.records]

    @property
    def phis(self) -> list[float | None]:
        return [r.phi for r in self.records]

    @property
    def violations(self) -> np.ndarray:
        return np.array([r.max_violation for r in self.records])

    # -- CSV ---------------------------------------------------------------

    def header(self) -> list[str]:
        dim = self.records[0].iterate.size if self.records else 0
        return (
            ["k", "viol", "phi"]
            + [f"dist_{lab}" for lab in self.ref_labels]
            + [f"x_{j}" for j in range(dim)]
        )

    def write_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(self.header())
        for r in self.records:
            row = [str(r.k), repr(float(r.max_violation)), "" if r.phi is None else repr(float(r.phi))]
            row += [repr(float(r.ref_distances[lab])) for lab in self.ref_labels]
            row += [repr(float(v)) for v in r.iterate]
            w.writerow(row)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        self.write_csv(buf)
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, source) -> "Trace":
        """Parse the CSV form; ``source`` is a path or an open text file.

        Only the per-record columns survive the round trip; step bookkeeping
        (``beta_sums``) is not part of the format.  Record ``k`` values must
        be ``0, 1, 2, ...``; any gap marks the trace as thinned.
        """
        if hasattr(source, "read"):
            rows = list(csv.reader(source))
        else:
            with open(source, newline="") as fh:
                rows = list(csv.reader(fh))
        if not rows:
            raise TraceError("empty trace file")
        head = rows[0]
        if head[:3] != ["k", "viol", "phi"]:
            raise TraceError("trace header must start with k,viol,phi")
        labels = [h[5:] for h in head[3:] if h.startswith("dist_")]
        nd = len(labels)
        xcols = head[3 + nd:]
        if not xcols or any(c != f"x_{j}" for j, c in enumerate(xcols)):
            raise TraceError("trace header must end with x_0..x_{J-1}")
        records = []
        for line, row in enumerate(rows[1:], start=2):
            if len(row) != len(head):
                raise TraceError(f"line {line}: expected {len(head)} fields, got {len(row)}")
            try:
                k = int(row[0])
                viol = float(row[1])
                phi = None if row[2] == "" else float(row[2])
                dists = {lab: float(v) for lab, v in zip(labels, row[3:3 + nd])}
                x = np.array([float(v) for v in row[3 + nd:]])
            except ValueError as exc:
                raise TraceError(f"line {line}: {exc}") from None
            records.append(TraceRecord(k, x, viol, phi, dists))
        ks = [r.k for r in records]
        if ks and ks[0] != 0:
            raise TraceError("trace must start at k=0")
        if any(b <= a for a, b in zip(ks, ks[1:])):
            raise TraceError("k must be strictly increasing")
        stride = 1 if ks == list(range(len(ks))) else 0
        return cls(records=records, stride=stride, stop_reason="", ref_labels=tuple(labels))


def _coerce_refs(refs, dim: int) -> dict[str, np.ndarray]:
    if refs is None:
        return {}
    if isinstance(refs, Mapping):
        items = refs.items()
    else:
        items = ((r.label, r.point) for r in refs)
    out = {}
    for label, p in items:
        out[str(label)] = as_point(p, dim, name=f"reference {label!r}")
    return out


def _as_schedule(plan, family: ConstraintFamily) -> PlanSchedule:
    if isinstance(plan, PlanSchedule):
        if plan.m != family.m:
            raise ConfigurationError(f"plan schedule built for m={plan.m}, family has m={family.m}")
        return plan
    if isinstance(plan, Amalgamator):
        return PlanSchedule.constant(plan, family.m)
    raise ConfigurationError(f"expected a PlanSchedule or Amalgamator, got {type(plan).__name__}")


def dsap_step(am: Amalgamator, family: ConstraintFamily, x) -> np.ndarray:
    """One DSAP iteration ``x -> P_{Omega, w}(x)``."""
    return apply_amalgamator(am, family, x)


# perturb(k, y) -> (perturbed point, beta consumed this step)
Perturber = Callable[[int, np.ndarray], "tuple[np.ndarray, float]"]


def drive(
    family: ConstraintFamily,
    plan,
    x0,
    stop: StopRule,
    perturb: Perturber | None = None,
    objective=None,
    refs=None,
    stride: int = 1,
) -> Trace:
    """Shared outer loop for plain, perturbed and superiorized runs."""
    if not isinstance(family, ConstraintFamily):
        family = ConstraintFamily(family)
    stop.check()
    if stride < 1:
        raise ConfigurationError("stride must be >= 1")
    schedule = _as_schedule(plan, family)
    refs = _coerce_refs(refs, family.dim)
    y = as_point(x0, family.dim, name="x0").copy()
    trace = Trace(
        stride=stride,
        objective_label=None if objective is None else objective.key,
        ref_labels=tuple(refs),
    )
    tol = stop.violation_tol

    def record(k, y, viol):
        phi = None if objective is None else float(objective.value(y))
        dists = {lab: float(np.linalg.norm(y - p)) for lab, p in refs.items()}
        trace.records.append(TraceRecord(k, y.copy(), viol, phi, dists))

    k = 0
    quiet = 0
    viol = family.max_violation_unchecked(y)
    record(0, y, viol)
    last_recorded = 0
    while True:
        if perturb is None:
            z, bsum, disp = y, 0.0, 0.0
        else:
            z, bsum = perturb(k, y)
            disp = float(np.linalg.norm(z - y))
        if viol <= tol and disp <= tol:
            trace.stop_reason = "converged"
            break
        if k >= stop.max_iters:
            trace.stop_reason = "max_iters"
            break
        if quiet >= stop.stall_window:
            trace.stop_reason = "stalled"
            break
        y_next = apply_amalgamator_unchecked(schedule(k), family, z)
        if not np.all(np.isfinite(y_next)):
            raise InputError(f"non-finite iterate produced at k={k + 1}")
        trace.beta_sums.append(bsum)
        trace.displacements.append(disp)
        quiet = quiet + 1 if float(np.linalg.norm(y_next - y)) <= stop.stall_tol else 0
        y = y_next
        k += 1
        viol = family.max_violation_unchecked(y)
        if k % stride == 0:
            record(k, y, viol)
            last_recorded = k
    if last_recorded != k:
        record(k, y, viol)
    return trace


def run_dsap(family, plan, x0, stop: StopRule = StopRule(), *, objective=None, refs=None, stride: int = 1) -> Trace:
    """Iterate ``x^{k+1} = P_{Omega_k, w_k}(x^k)`` until ``stop`` fires.

    ``plan`` is a :class:`PlanSchedule` or a single amalgamator (used for
    every ``k``).  ``objective`` and ``refs`` only add columns to the trace.
    """
    return drive(family, plan, x0, stop, None, objective, refs, stride)


def run_perturbed_dsap(
    family,
    plan,
    perturb: PerturbationSchedule,
    x0,
    stop: StopRule = StopRule(),
    *,
    objective=None,
    refs=None,
    stride: int = 1,
) -> Trace:
    """Iterate ``y^{k+1} = P_{Omega_k, w_k}(y^k + beta_k v^k)``."""
    total = 0.0
    slack = 1e-12 * max(1.0, perturb.beta_total_bound)

    def step(k, y):
        nonlocal total
        beta = float(perturb.beta(k))
        if not (beta >= 0 and math.isfinite(beta)):
            raise ConfigurationError(f"beta_{k}={beta!r} must be finite and non-negative")
        total += beta
        if total > perturb.beta_total_bound + slack:
            raise ConfigurationError(
                f"perturbation sum {total!r} exceeds certificate {perturb.certificate} at k={k}"
            )
        v = np.asarray(perturb.direction(k, y), dtype=np.float64)
        if v.shape != y.shape or not np.all(np.isfinite(v)):
            raise ConfigurationError(f"direction v_{k} has bad shape or non-finite entries")
        if float(np.linalg.norm(v)) > perturb.bound_v * (1 + 1e-12) + 1e-300:
            raise ConfigurationError(f"||v_{k}|| exceeds declared bound {perturb.bound_v}")
        return y + beta * v, beta

    return drive(family, plan, x0, stop, step, objective, refs, stride)
