import io

import numpy as np
import pytest

from superdsap.diagnostics import check_fejer
from superdsap.errors import ConfigurationError, TraceError
from superdsap.feasibility import (
    PerturbationSchedule,
    StopRule,
    Trace,
    dsap_step,
    fixed_direction,
    random_unit_directions,
    run_dsap,
    run_perturbed_dsap,
)
from superdsap.geometry import Ball, ConstraintFamily, Halfspace, Hyperplane
from superdsap.oracles import cyclic_halfspace_reference, simultaneous_halfspace_reference
from superdsap.problems import gen_consistent_halfspaces
from superdsap.strings import Amalgamator, MStarParams, PlanSchedule, cimmino_plan, kaczmarz_plan
from superdsap.superiorize import LinearObjective

AXES = ConstraintFamily([Hyperplane([1, 0], 0), Hyperplane([0, 1], 0)])


def _halfspace_data(spec):
    A = np.array([s.a for s in spec.family.sets])
    b = np.array([s.b for s in spec.family.sets])
    return A, b


class TestExamples:
    def test_dsap_step(self):
        assert np.array_equal(dsap_step(kaczmarz_plan(2), AXES, [2, 4]), [0, 0])
        assert np.array_equal(dsap_step(cimmino_plan(2), AXES, [2, 4]), [1, 2])

    def test_feasible_start_halts_at_zero(self):
        tr = run_dsap(AXES, kaczmarz_plan(2), [0, 0])
        assert tr.final.k == 0 and tr.final.max_violation == 0.0
        assert tr.stop_reason == "converged"

    def test_two_hyperplanes_one_step(self):
        tr = run_dsap(AXES, kaczmarz_plan(2), [2, 4])
        assert tr.final.k == 1
        assert np.array_equal(tr.final.iterate, [0, 0])
        assert tr.final.max_violation == 0.0

    def test_cimmino_5d(self):
        spec = gen_consistent_halfspaces(5, 10, 2024)
        A, b = _halfspace_data(spec)
        # the independent sequential loop confirms 1e-6 is reachable
        ref = cyclic_halfspace_reference(A, b, spec.x0, 2000)[-1]
        assert np.max(A @ ref - b) <= 1e-6
        tr = run_dsap(spec.family, cimmino_plan(10), spec.x0, StopRule(1e-6, 10_000))
        assert tr.final.max_violation <= 1e-6
        assert tr.final.k <= 10_000

    def test_cap_and_stall_reasons(self):
        spec = gen_consistent_halfspaces(5, 10, 7)
        tr = run_dsap(spec.family, cimmino_plan(10), spec.x0, StopRule(1e-14, 5))
        assert tr.stop_reason == "max_iters" and tr.final.k == 5
        tr = run_dsap(spec.family, cimmino_plan(10), spec.x0, StopRule(1e-300, 10**6, stall_tol=1e-3, stall_window=3))
        assert tr.stop_reason == "stalled"
        moves = np.linalg.norm(np.diff(tr.iterates[-4:], axis=0), axis=1)
        assert np.all(moves <= 1e-3)

    @pytest.mark.parametrize(
        "kwargs",
        [dict(violation_tol=0.0), dict(max_iters=0), dict(stall_tol=-1.0), dict(stall_window=0)],
    )
    def test_stop_rule_ranges(self, kwargs):
        with pytest.raises(ConfigurationError):
            run_dsap(AXES, kaczmarz_plan(2), [1, 1], StopRule(**kwargs))

    def test_schedule_failure_names_k(self):
        good, bad = cimmino_plan(2), Amalgamator(((1,),), [1.0])
        sched = PlanSchedule(lambda k: bad if k == 3 else good, MStarParams(0.1, 2), 2)
        fam = ConstraintFamily([Halfspace([1, 0], 0), Halfspace([0, 1], 0)])
        with pytest.raises(ConfigurationError, match="k=3"):
            run_dsap(fam, sched, [5, 5], StopRule(1e-12, 100))


class TestEquivalence:
    @pytest.mark.parametrize("seed", range(3))
    def test_kaczmarz_matches_cyclic_loop(self, seed):
        spec = gen_consistent_halfspaces(4, 8, seed)
        A, b = _halfspace_data(spec)
        ref = cyclic_halfspace_reference(A, b, spec.x0, 50)
        tr = run_dsap(spec.family, kaczmarz_plan(8), spec.x0, StopRule(1e-300, 50))
        n = len(tr)
        assert np.max(np.abs(tr.iterates - ref[:n])) <= 1e-14
        assert np.max(np.abs(ref[n:] - tr.final.iterate), initial=0.0) <= 1e-14

    @pytest.mark.parametrize("seed", range(3))
    def test_cimmino_matches_averaging_loop(self, seed):
        spec = gen_consistent_halfspaces(4, 8, seed)
        A, b = _halfspace_data(spec)
        ref = simultaneous_halfspace_reference(A, b, spec.x0, 100)
        tr = run_dsap(spec.family, cimmino_plan(8), spec.x0, StopRule(1e-300, 100))
        assert np.max(np.abs(tr.iterates - ref[: len(tr)])) <= 1e-14


class TestInvariants:
    @pytest.mark.parametrize("seed", range(5))
    @pytest.mark.parametrize("plan", ["kaczmarz", "cimmino", "random"])
    def test_fejer_wrt_interior(self, seed, plan):
        spec = gen_consistent_halfspaces(5, 10, seed)
        if plan == "kaczmarz":
            p = kaczmarz_plan(10)
        elif plan == "cimmino":
            p = cimmino_plan(10)
        else:
            p = PlanSchedule.seeded_random(10, MStarParams(0.02, 10), seed)
        tr = run_dsap(spec.family, p, spec.x0, StopRule(1e-8, 3000))
        assert check_fejer(tr, spec.known_interior).nonstrict_holds

    @pytest.mark.parametrize("seed", range(10))
    def test_violation_monotone_two_sets_kaczmarz(self, seed):
        rng = np.random.default_rng(seed)
        z = rng.uniform(-1, 1, 3)
        c = z + rng.standard_normal(3)
        fam = ConstraintFamily(
            [Ball(c, float(np.linalg.norm(z - c)) + 0.3), Halfspace(rng.standard_normal(3), 0.0)]
        )
        fam = ConstraintFamily([fam.sets[0], Halfspace(fam.sets[1].a, float(fam.sets[1].a @ z) + 0.2)])
        tr = run_dsap(fam, kaczmarz_plan(2), rng.uniform(-6, 6, 3), StopRule(1e-10, 500))
        v = tr.violations
        assert np.all(v[1:] <= v[:-1] + 1e-15)

    def test_rotation_schedule_converges(self):
        spec = gen_consistent_halfspaces(3, 6, 5)
        am = Amalgamator(((1, 2, 3), (4, 5, 6), (2, 5)), [0.4, 0.4, 0.2])
        tr = run_dsap(spec.family, PlanSchedule.cyclic_rotation(am, 6), spec.x0, StopRule(1e-8, 20_000))
        assert tr.stop_reason == "converged"


class TestPerturbed:
    def test_zero_perturbation_identical(self):
        spec = gen_consistent_halfspaces(5, 10, 3)
        for am in (kaczmarz_plan(10), cimmino_plan(10)):
            stop = StopRule(1e-6, 10_000)
            a = run_dsap(spec.family, am, spec.x0, stop)
            b = run_perturbed_dsap(spec.family, am, PerturbationSchedule.zero(), spec.x0, stop)
            assert np.array_equal(a.iterates, b.iterates)
            zero_beta = PerturbationSchedule.geometric(0.0, 0.5, random_unit_directions(5, 1))
            c = run_perturbed_dsap(spec.family, am, zero_beta, spec.x0, stop)
            assert np.array_equal(a.iterates, c.iterates)

    def test_geometric_5d(self):
        spec = gen_consistent_halfspaces(5, 10, 9)
        pert = PerturbationSchedule.geometric(1.0, 0.99, random_unit_directions(5, 9))
        tr = run_perturbed_dsap(spec.family, cimmino_plan(10), pert, spec.x0, StopRule(1e-6, 10_000))
        assert tr.final.max_violation <= 1e-6

    def test_single_set_lands_in_set(self):
        fam = ConstraintFamily([Ball([0, 0], 1)])
        pert = PerturbationSchedule.geometric(1.0, 0.5, fixed_direction([1.0, 0.0]))
        tr = run_perturbed_dsap(fam, kaczmarz_plan(1), pert, [5, 5], StopRule(1e-9, 200))
        assert all(fam.sets[0].contains(x, 1e-15) for x in tr.iterates[1:])

    def test_certificate_enforced(self):
        fam = ConstraintFamily([Ball([0, 0], 1)])
        liar = PerturbationSchedule.certified(lambda k: 1.0, fixed_direction([1.0, 0.0]), 1.0, 3.0)
        with pytest.raises(ConfigurationError, match="certificate"):
            run_perturbed_dsap(fam, kaczmarz_plan(1), liar, [5, 5], StopRule(1e-9, 100))

    def test_direction_bound_enforced(self):
        fam = ConstraintFamily([Ball([0, 0], 1)])
        pert = PerturbationSchedule.geometric(1.0, 0.5, fixed_direction([2.0, 0.0]), bound_v=1.0)
        with pytest.raises(ConfigurationError):
            run_perturbed_dsap(fam, kaczmarz_plan(1), pert, [5, 5])

    def test_negative_beta_rejected(self):
        fam = ConstraintFamily([Ball([0, 0], 1)])
        pert = PerturbationSchedule.certified(lambda k: -0.1, fixed_direction([1.0, 0.0]), 1.0, 1.0)
        with pytest.raises(ConfigurationError):
            run_perturbed_dsap(fam, kaczmarz_plan(1), pert, [5, 5])

    def test_bad_geometric_ratio(self):
        with pytest.raises(ConfigurationError):
            PerturbationSchedule.geometric(1.0, 1.0, fixed_direction([1.0]))

    def test_finite_support(self):
        pert = PerturbationSchedule.finite_support([0.5, 0.25], fixed_direction([1.0, 0.0]))
        assert pert.beta_total_bound == 0.75
        assert pert.beta(5) == 0.0


class TestTraceIO:
    def _trace(self):
        spec = gen_consistent_halfspaces(2, 3, 1)
        obj = LinearObjective([1.0, -1.0])
        return run_dsap(spec.family, kaczmarz_plan(3), spec.x0, StopRule(1e-9, 40), objective=obj,
                        refs=spec.reference_points())

    def test_header(self):
        tr = self._trace()
        assert tr.header() == ["k", "viol", "phi", "dist_interior", "x_0", "x_1"]

    def test_csv_round_trip_exact(self):
        tr = self._trace()
        back = Trace.from_csv(io.StringIO(tr.to_csv()))
        assert np.array_equal(back.iterates, tr.iterates)
        assert back.phis == tr.phis
        assert np.array_equal(back.violations, tr.violations)
        assert back.to_csv() == tr.to_csv()

    def test_missing_phi_is_empty(self):
        tr = run_dsap(AXES, kaczmarz_plan(2), [2, 4])
        line = tr.to_csv().splitlines()[1]
        assert line.split(",")[2] == ""
        assert Trace.from_csv(io.StringIO(tr.to_csv())).phis == [None, None]

    def test_malformed_csv(self):
        with pytest.raises(TraceError):
            Trace.from_csv(io.StringIO("k,viol,phi,x_0\n0,0.0,,notanumber\n"))

    def test_thinning_keeps_final_and_is_rejected_by_diagnostics(self):
        spec = gen_consistent_halfspaces(3, 5, 2)
        tr = run_dsap(spec.family, cimmino_plan(5), spec.x0, StopRule(1e-8, 10_000), stride=10)
        full = run_dsap(spec.family, cimmino_plan(5), spec.x0, StopRule(1e-8, 10_000))
        assert tr.thinned
        assert tr.ks[-1] == full.final.k
        assert np.array_equal(tr.final.iterate, full.final.iterate)
        assert all(k % 10 == 0 for k in tr.ks[:-1])
        with pytest.raises(TraceError):
            check_fejer(tr, spec.known_interior)
