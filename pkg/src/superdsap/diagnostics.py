"""Post-hoc checks of Fejer monotonicity and of the limit dichotomy.

All functions read finished traces; none of them influence a run.  Finite
traces can only witness asymptotic statements approximately, so the
dichotomy verdict has a third outcome, ``inconclusive``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, InputError, TraceError
from .feasibility import Trace
from .geometry import ConstraintFamily, as_point
from .strings import Amalgamator, apply_amalgamator

__all__ = [
    "ReferencePoint",
    "FejerReport",
    "DichotomyVerdict",
    "check_fejer",
    "fit_c0",
    "dichotomy_report",
    "superiority_gap",
    "displacement_bound_holds",
    "step_distance_slack",
]

NONSTRICT_TOL = 1e-12
STRICT_MARGIN = 1e-15
REFERENCE_KINDS = ("feasible", "minimal", "custom")


@dataclass(frozen=True, eq=False)
class ReferencePoint:
    label: str
    point: np.ndarray
    kind: str = "custom"
    provenance: str = ""

    def __post_init__(self):
        if self.kind not in REFERENCE_KINDS:
            raise InputError(f"reference kind must be one of {REFERENCE_KINDS}, got {self.kind!r}")
        object.__setattr__(self, "point", as_point(self.point, name=f"reference {self.label!r}"))

    def to_dict(self) -> dict:
        return {"label": self.label, "point": self.point.tolist(), "kind": self.kind, "provenance": self.provenance}

    @classmethod
    def from_dict(cls, d: dict) -> "ReferencePoint":
        if not isinstance(d, dict) or "point" not in d:
            raise InputError("reference: expected an object with a 'point' array")
        return cls(
            label=str(d.get("label", "ref")),
            point=d["point"],
            kind=d.get("kind", "custom"),
            provenance=d.get("provenance", ""),
        )


@dataclass
class FejerReport:
    """Summary of the distance sequence ``||y^k - x||`` for one reference ``x``.

    ``margins[k]`` is the squared-distance drop from ``k`` to ``k + 1``.
    ``k0`` is the smallest index from which every drop exceeds the strict
    margin through the end of the trace, or ``None`` when the last drop does
    not (or the trace has no steps).
    """

    ref_label: str
    strict: bool
    nonstrict_holds: bool
    first_nonstrict_violation: int | None
    k0: int | None
    strict_violations_after_k0: int
    fitted_c0: float | None
    skipped_ks: list[int] = field(default_factory=list)
    margins: list[float] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        if self.strict:
            return self.k0 is not None and self.strict_violations_after_k0 == 0
        return self.nonstrict_holds

    def to_dict(self, with_margins: bool = False) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        if not with_margins:
            d.pop("margins")
        return d


@dataclass
class DichotomyVerdict:
    verdict: str  # "case_a" | "case_b" | "inconclusive"
    phi_final: float
    phi_min: float
    phi_tol: float
    fejer: FejerReport | None = None
    note: str = ""

    def to_dict(self) -> dict:
        d = {
            "verdict": self.verdict,
            "phi_final": self.phi_final,
            "phi_min": self.phi_min,
            "phi_tol": self.phi_tol,
            "k0": None,
            "c0": None,
            "note": self.note,
        }
        if self.fejer is not None:
            d["k0"] = self.fejer.k0
            d["c0"] = self.fejer.fitted_c0
            d["fejer"] = self.fejer.to_dict()
        return d


def _require_unthinned(trace: Trace) -> None:
    if trace.thinned:
        raise TraceError("diagnostics need an unthinned trace (stride 1)")
    if len(trace) == 0:
        raise TraceError("empty trace")
    if trace.ks != list(range(len(trace))):
        raise TraceError("trace records must be k = 0, 1, 2, ...")


def _ref_point(ref) -> tuple[str, np.ndarray]:
    if isinstance(ref, ReferencePoint):
        return ref.label, ref.point
    return "ref", as_point(ref, name="reference")


def _squared_distances(trace: Trace, point: np.ndarray) -> np.ndarray:
    X = trace.iterates
    if X.shape[1] != point.size:
        raise InputError(f"reference has dimension {point.size}, trace has {X.shape[1]}")
    D = X - point
    return np.einsum("ij,ij->i", D, D)


def _c0_terms(sq: np.ndarray, betas: Sequence[float], k0: int) -> tuple[list[float], list[int]]:
    steps = len(sq) - 1
    if len(betas) < steps:
        raise TraceError(f"need {steps} step-size sums, got {len(betas)}")
    ratios, skipped = [], []
    for k in range(k0, steps):
        b = float(betas[k])
        if b <= 0.0:
            skipped.append(k)
            continue
        ratios.append((sq[k] - sq[k + 1]) / b)
    return ratios, skipped


def fit_c0(trace: Trace, ref, betas_per_k: Sequence[float], k0: int = 0) -> float:
    """Largest ``c0 >= 0`` with ``d_{k+1}^2 <= d_k^2 - c0 * beta_sum_k`` for all ``k >= k0``.

    Steps whose step-size sum is zero carry no information and are skipped.
    """
    _require_unthinned(trace)
    _, point = _ref_point(ref)
    ratios, _ = _c0_terms(_squared_distances(trace, point), betas_per_k, k0)
    if not ratios:
        return 0.0
    return max(0.0, float(min(ratios)))


def check_fejer(
    trace: Trace,
    ref,
    strict: bool = False,
    *,
    tol: float = NONSTRICT_TOL,
    margin: float = STRICT_MARGIN,
) -> FejerReport:
    """Check (strict) Fejer monotonicity of a trace with respect to ``ref``.

    The non-strict test is ``||y^{k+1} - x|| <= ||y^k - x|| + tol`` for every
    ``k``.  In strict mode the trace is scanned from the end for the smallest
    ``k0`` such that every squared-distance drop from ``k0`` on exceeds
    ``margin``; if the trace carries step-size sums, ``c0`` is fitted over the
    same range.
    """
    _require_unthinned(trace)
    label, point = _ref_point(ref)
    sq = _squared_distances(trace, point)
    dist = np.sqrt(sq)
    drops = sq[:-1] - sq[1:]

    bad = np.nonzero(dist[1:] > dist[:-1] + tol)[0]
    first_bad = int(bad[0]) if bad.size else None

    k0 = None
    c0 = None
    skipped: list[int] = []
    if strict and drops.size:
        k = drops.size
        while k > 0 and drops[k - 1] > margin:
            k -= 1
        if k < drops.size:
            k0 = k
        if k0 is not None and len(trace.beta_sums) >= drops.size:
            ratios, skipped = _c0_terms(sq, trace.beta_sums, k0)
            c0 = max(0.0, float(min(ratios))) if ratios else 0.0
    return FejerReport(
        ref_label=label,
        strict=strict,
        nonstrict_holds=first_bad is None,
        first_nonstrict_violation=first_bad,
        k0=k0,
        strict_violations_after_k0=0 if k0 is not None else int(np.sum(drops <= margin)),
        fitted_c0=c0,
        skipped_ks=skipped,
        margins=drops.tolist(),
    )


def dichotomy_report(trace: Trace, minimal_ref: ReferencePoint, phi_tol: float, objective=None) -> DichotomyVerdict:
    """Classify a finished superiorized run against a known minimizer.

    ``case_a``: the final objective value is within ``phi_tol`` of the
    minimum.  Otherwise strict Fejer monotonicity towards ``minimal_ref`` is
    checked; observing it gives ``case_b``, not observing it gives
    ``inconclusive``.  The minimum value is ``objective`` evaluated at the
    reference point.
    """
    if not isinstance(minimal_ref, ReferencePoint) or minimal_ref.kind != "minimal":
        raise InputError("dichotomy_report needs a ReferencePoint of kind 'minimal'")
    if not phi_tol >= 0:
        raise ConfigurationError("phi_tol must be non-negative")
    if any(p is None for p in trace.phis):
        raise TraceError("trace lacks objective values")
    if objective is None:
        raise InputError("an objective is needed to evaluate the reference point")
    phi_final = float(trace.final.phi)
    phi_min = float(objective.value(minimal_ref.point))
    if phi_final <= phi_min + phi_tol:
        return DichotomyVerdict("case_a", phi_final, phi_min, phi_tol)
    rep = check_fejer(trace, minimal_ref, strict=True)
    if rep.passed:
        return DichotomyVerdict("case_b", phi_final, phi_min, phi_tol, rep)
    return DichotomyVerdict(
        "inconclusive",
        phi_final,
        phi_min,
        phi_tol,
        rep,
        note="final value above the minimum but no strict decrease observed through the end of this finite trace",
    )


def superiority_gap(plain: Trace, superiorized: Trace) -> float:
    """phi(plain final) - phi(superiorized final); positive favours superiorization."""
    for name, t in (("plain", plain), ("superiorized", superiorized)):
        if len(t) == 0 or t.final.phi is None:
            raise TraceError(f"{name} trace lacks objective values")
    if plain.objective_label != superiorized.objective_label:
        raise TraceError(
            f"objective mismatch: {plain.objective_label!r} vs {superiorized.objective_label!r}"
        )
    return float(plain.final.phi) - float(superiorized.final.phi)


def displacement_bound_holds(trace: Trace, tol: float = 1e-12) -> bool:
    """Every inner loop moved the iterate by at most the step sizes it consumed."""
    return all(d <= b + tol for d, b in zip(trace.displacements, trace.beta_sums))


def step_distance_slack(
    objective,
    family: ConstraintFamily,
    am: Amalgamator,
    x,
    xbar,
    alpha: float,
    delta: float,
    lbar: float,
) -> float:
    """Slack of the single-step distance bound around a minimizer ``xbar``.

    With ``y = P_{Omega,w}(x - alpha s/||s||)`` for a subgradient ``s`` at
    ``x``, returns ``||x - xbar||^2 - alpha*delta/(2*lbar) + alpha^2 - ||y - xbar||^2``,
    which must be non-negative whenever ``phi(x) - phi(xbar) > delta``.
    """
    x = as_point(x, family.dim)
    xbar = as_point(xbar, family.dim, name="xbar")
    s = np.asarray(objective.subgradient(x), dtype=np.float64)
    ns = float(np.linalg.norm(s))
    if ns == 0.0:
        raise InputError("zero subgradient: x is a minimizer, the bound does not apply")
    y = apply_amalgamator(am, family, x - alpha * s / ns)
    lhs = float(np.sum((y - xbar) ** 2))
    rhs = float(np.sum((x - xbar) ** 2)) - 2.0 * alpha * delta / (4.0 * lbar) + alpha**2
    return rhs - lhs


def report_json_safe(d):
    """Replace non-finite floats so reports serialise as strict JSON."""
    if isinstance(d, dict):
        return {k: report_json_safe(v) for k, v in d.items()}
    if isinstance(d, list):
        return [report_json_safe(v) for v in d]
    if isinstance(d, float) and not math.isfinite(d):
        return None
    return d
