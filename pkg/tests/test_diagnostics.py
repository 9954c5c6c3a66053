import json
import math

import numpy as np
import pytest

from superdsap.diagnostics import (
    ReferencePoint,
    check_fejer,
    dichotomy_report,
    displacement_bound_holds,
    fit_c0,
    step_distance_slack,
    superiority_gap,
)
from superdsap.errors import InputError, TraceError
from superdsap.feasibility import StopRule, Trace, TraceRecord, run_dsap
from superdsap.problems import gen_box_corner
from superdsap.strings import kaczmarz_plan
from superdsap.superiorize import LinearObjective, make_beta_schedule, run_superiorized_dsap

ORIGIN = ReferencePoint("origin", [0.0])


def trace_from_distances(dists, betas=None, phis=None):
    """One-dimensional trace whose iterates sit at the given distances from 0."""
    recs = [
        TraceRecord(k, np.array([float(d)]), 0.0, None if phis is None else phis[k])
        for k, d in enumerate(dists)
    ]
    tr = Trace(records=recs)
    if betas is not None:
        tr.beta_sums = list(betas)
    return tr


class TestCheckFejer:
    def test_strictly_decreasing(self):
        rep = check_fejer(trace_from_distances([3, 2, 1, 0.5]), ORIGIN, strict=True)
        assert rep.passed and rep.k0 == 0 and rep.strict_violations_after_k0 == 0

    def test_constant_distances(self):
        tr = trace_from_distances([1, 1])
        assert not check_fejer(tr, ORIGIN, strict=True).passed
        assert check_fejer(tr, ORIGIN, strict=False).passed

    def test_increase_detected(self):
        rep = check_fejer(trace_from_distances([2, 3, 1]), ORIGIN)
        assert not rep.passed and rep.first_nonstrict_violation == 0

    def test_k0_found_from_the_end(self):
        rep = check_fejer(trace_from_distances([5, 5, 6, 4, 3, 2]), ORIGIN, strict=True)
        assert rep.k0 == 2 and rep.passed
        assert not rep.nonstrict_holds

    def test_late_stall_means_no_k0(self):
        rep = check_fejer(trace_from_distances([4, 3, 2, 2]), ORIGIN, strict=True)
        assert rep.k0 is None and not rep.passed

    def test_margin_is_configurable(self):
        tr = trace_from_distances([1.0, 1.0 - 1e-9])
        assert check_fejer(tr, ORIGIN, strict=True).passed
        assert not check_fejer(tr, ORIGIN, strict=True, margin=1e-6).passed

    def test_thinned_rejected(self):
        tr = trace_from_distances([3, 2, 1])
        tr.stride = 2
        with pytest.raises(TraceError):
            check_fejer(tr, ORIGIN)

    def test_dimension_mismatch(self):
        with pytest.raises(InputError):
            check_fejer(trace_from_distances([3, 2]), ReferencePoint("p", [0.0, 0.0]))


class TestFitC0:
    def test_examples(self):
        assert fit_c0(trace_from_distances([2, 1]), ORIGIN, [1.0]) == pytest.approx(3.0)
        assert fit_c0(trace_from_distances([2, 2]), ORIGIN, [1.0]) == 0.0
        tr = trace_from_distances([2, math.sqrt(2), 1])
        assert fit_c0(tr, ORIGIN, [1.0, 0.5]) == pytest.approx(2.0, rel=1e-12)

    def test_clamped_at_zero(self):
        assert fit_c0(trace_from_distances([1, 2]), ORIGIN, [1.0]) == 0.0

    def test_zero_beta_skipped_and_reported(self):
        tr = trace_from_distances([3, 3, 2], betas=[0.0, 1.0])
        assert fit_c0(tr, ORIGIN, tr.beta_sums) == pytest.approx(5.0)
        rep = check_fejer(trace_from_distances([3, 2.5, 2], betas=[0.0, 1.0]), ORIGIN, strict=True)
        assert rep.skipped_ks == [0]
        assert rep.fitted_c0 == pytest.approx(2.25)

    def test_too_few_betas(self):
        with pytest.raises(TraceError):
            fit_c0(trace_from_distances([3, 2, 1]), ORIGIN, [1.0])

    @pytest.mark.parametrize("lam", [0.5, 3.0, 10.0])
    def test_scale_consistency(self, lam):
        spec = gen_box_corner(2)
        tr = run_superiorized_dsap(
            spec.family, kaczmarz_plan(2), spec.objective, make_beta_schedule(0.01, 0.99), 1, [3, 3], StopRule(1e-6, 2000)
        )
        ref = ReferencePoint("min", [1.0, 1.0], "minimal", "closed-form")
        c0 = fit_c0(tr, ref, tr.beta_sums)
        assert c0 > 0
        scaled = Trace(
            records=[TraceRecord(r.k, lam * r.iterate, r.max_violation) for r in tr.records],
            beta_sums=list(tr.beta_sums),
        )
        c0_scaled = fit_c0(scaled, ReferencePoint("min", [lam, lam]), scaled.beta_sums)
        assert c0_scaled == pytest.approx(lam**2 * c0, rel=1e-9)


class TestDichotomy:
    def _minimal(self):
        return ReferencePoint("minimizer", [1.0, 1.0], "minimal", "closed-form")

    def test_case_a_at_minimizer(self):
        spec = gen_box_corner(2)
        tr = run_dsap(spec.family, kaczmarz_plan(2), [1.0, 1.0], objective=spec.objective)
        assert dichotomy_report(tr, self._minimal(), 1e-6, spec.objective).verdict == "case_a"

    def test_case_b_with_small_steps(self):
        spec = gen_box_corner(2)
        tr = run_superiorized_dsap(
            spec.family, kaczmarz_plan(2), spec.objective, make_beta_schedule(0.01, 0.99), 1, [3, 3], StopRule(1e-6)
        )
        v = dichotomy_report(tr, self._minimal(), 1e-6, spec.objective)
        assert v.verdict == "case_b"
        assert v.fejer.k0 is not None and v.fejer.fitted_c0 > 0
        d = json.loads(json.dumps(v.to_dict()))
        assert {"k0", "c0", "verdict"} <= set(d)

    def test_plain_feasible_start_is_inconclusive(self):
        spec = gen_box_corner(2)
        tr = run_dsap(spec.family, kaczmarz_plan(2), [3.0, 3.0], objective=spec.objective)
        v = dichotomy_report(tr, self._minimal(), 1e-6, spec.objective)
        assert v.phi_final == 6.0
        assert v.verdict == "inconclusive" and v.note

    def test_constant_objective_always_case_a(self):
        spec = gen_box_corner(2)
        const = LinearObjective([0.0, 0.0])
        tr = run_dsap(spec.family, kaczmarz_plan(2), [7.0, -2.0], objective=const)
        assert dichotomy_report(tr, self._minimal(), 0.0, const).verdict == "case_a"

    def test_requires_phi_and_minimal_kind(self):
        spec = gen_box_corner(2)
        tr = run_dsap(spec.family, kaczmarz_plan(2), [3.0, 3.0])
        with pytest.raises(TraceError):
            dichotomy_report(tr, self._minimal(), 1e-6, spec.objective)
        tr = run_dsap(spec.family, kaczmarz_plan(2), [3.0, 3.0], objective=spec.objective)
        with pytest.raises(InputError):
            dichotomy_report(tr, ReferencePoint("x", [1.0, 1.0]), 1e-6, spec.objective)


class TestGap:
    def test_examples(self):
        spec = gen_box_corner(2)
        plain = run_dsap(spec.family, kaczmarz_plan(2), [3, 3], objective=spec.objective)
        assert superiority_gap(plain, plain) == 0.0
        sup = run_superiorized_dsap(
            spec.family, kaczmarz_plan(2), spec.objective, make_beta_schedule(1.0, 0.99), 1, [3, 3], StopRule(1e-6)
        )
        assert superiority_gap(plain, sup) > 0
        assert displacement_bound_holds(sup)
        const = LinearObjective([0.0, 0.0])
        a = run_dsap(spec.family, kaczmarz_plan(2), [3, 3], objective=const)
        b = run_superiorized_dsap(spec.family, kaczmarz_plan(2), const, make_beta_schedule(1.0, 0.99), 1, [3, 3])
        assert superiority_gap(a, b) == 0.0

    def test_objective_mismatch(self):
        spec = gen_box_corner(2)
        a = run_dsap(spec.family, kaczmarz_plan(2), [3, 3], objective=spec.objective)
        b = run_dsap(spec.family, kaczmarz_plan(2), [3, 3], objective=LinearObjective([2.0, 0.0]))
        with pytest.raises(TraceError):
            superiority_gap(a, b)


@pytest.mark.parametrize("seed", range(3))
def test_step_distance_slack_nonnegative(seed):
    spec = gen_box_corner(2)
    rng = np.random.default_rng(seed)
    xbar = np.ones(2)
    checked = 0
    for _ in range(100):
        x = rng.uniform(-1, 6, 2)
        if spec.objective.value(x) - 2.0 <= 0.1:
            continue
        alpha = float(rng.uniform(1e-3, 1.0))
        slack = step_distance_slack(spec.objective, spec.family, kaczmarz_plan(2), x, xbar, alpha, 0.1, math.sqrt(2))
        assert slack >= -1e-9
        checked += 1
    assert checked > 50
