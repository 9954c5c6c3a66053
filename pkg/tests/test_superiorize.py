import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from superdsap.errors import ConfigurationError, InputError, ObjectiveError
from superdsap.feasibility import StopRule, run_dsap
from superdsap.problems import gen_box_corner, gen_consistent_halfspaces
from superdsap.strings import cimmino_plan, kaczmarz_plan
from superdsap.superiorize import (
    AnalysisConstants,
    CustomObjective,
    InnerLoopPlan,
    LinearObjective,
    MaxLinearObjective,
    OneNormObjective,
    QuadraticObjective,
    make_beta_schedule,
    negative_unit_subgradient,
    objective_from_dict,
    run_superiorized_dsap,
    superiorized_inner_loop,
)


class TestNegativeUnitSubgradient:
    def test_linear(self):
        v = negative_unit_subgradient(LinearObjective([3, 4]), np.array([7.0, -1.0]))
        assert np.allclose(v, [-0.6, -0.8], atol=1e-15)
        assert np.linalg.norm(v) == pytest.approx(1.0, abs=1e-15)
        assert v @ np.array([3, 4]) == pytest.approx(-5.0)

    def test_constant_gives_zero(self):
        assert np.array_equal(negative_unit_subgradient(LinearObjective([0, 0]), np.ones(2)), [0, 0])

    def test_one_norm_tie_break(self):
        assert np.array_equal(negative_unit_subgradient(OneNormObjective(), np.array([0.0, 3.0])), [0, -1])

    def test_max_linear_lowest_active_piece(self):
        obj = MaxLinearObjective([[1, 0], [0, 1]], [0, 0])
        assert np.array_equal(obj.subgradient(np.array([2.0, 2.0])), [1, 0])

    def test_bad_oracle(self):
        obj = CustomObjective(lambda x: 0.0, lambda x: np.array([np.nan, 0.0]))
        with pytest.raises(ObjectiveError):
            negative_unit_subgradient(obj, np.zeros(2))

    def test_zero_tol_must_be_positive(self):
        with pytest.raises(ConfigurationError):
            negative_unit_subgradient(LinearObjective([1, 1]), np.zeros(2), 0.0)


class TestBetaSchedule:
    def test_emissions_and_bound(self):
        b = make_beta_schedule(1.0, 0.5)
        assert [b.next() for _ in range(4)] == [1.0, 0.5, 0.25, 0.125]
        assert b.total_bound == 2.0
        assert make_beta_schedule(0.1, 0.9).total_bound == pytest.approx(1.0)

    @pytest.mark.parametrize("eta0, rho", [(1.5, 0.5), (0.0, 0.5), (1.0, 1.0), (1.0, 0.0)])
    def test_ranges(self, eta0, rho):
        with pytest.raises(ConfigurationError):
            make_beta_schedule(eta0, rho)

    def test_emissions_stay_positive_after_underflow(self):
        b = make_beta_schedule(1.0, 0.5).advance(5000)
        x = b.next()
        assert 0.0 < x <= 1.0

    @settings(max_examples=100, deadline=None)
    @given(st.floats(1e-3, 1.0), st.floats(0.01, 0.99), st.integers(1, 400))
    def test_partial_sums_bounded(self, eta0, rho, n):
        b = make_beta_schedule(eta0, rho)
        vals = [b.next() for _ in range(n)]
        assert all(0.0 < v <= 1.0 for v in vals)
        assert math.fsum(vals) <= b.total_bound * (1 + 1e-12)


class TestInnerLoop:
    def test_hand_example(self):
        b = make_beta_schedule(0.5, 0.5)
        y = superiorized_inner_loop(LinearObjective([1, 1]), b, [3, 3], 1)
        expected = 3 - 0.5 / math.sqrt(2)
        assert np.allclose(y, [expected, expected], atol=1e-15)
        assert y[0] == pytest.approx(2.646446609, abs=1e-9)
        assert float(np.sum(y)) == pytest.approx(6 - 1 / math.sqrt(2), abs=1e-12)
        assert b.cursor == 1

    def test_constant_objective_consumes_betas(self):
        b = make_beta_schedule(1.0, 0.5)
        y = superiorized_inner_loop(LinearObjective([0, 0]), b, [3, 3], 3)
        assert np.array_equal(y, [3, 3])
        assert b.cursor == 3

    def test_displacement_bound_two_steps(self):
        b = make_beta_schedule(1.0, 0.5)
        y = superiorized_inner_loop(OneNormObjective(), b, [0.3, -0.2], 2)
        assert np.linalg.norm(y - [0.3, -0.2]) <= 1.5 + 1e-12

    def test_bad_n(self):
        with pytest.raises(ConfigurationError):
            superiorized_inner_loop(LinearObjective([1, 1]), make_beta_schedule(1, 0.5), [0, 0], 0)

    def test_plans(self):
        assert [InnerLoopPlan.cycle(3)(k) for k in range(5)] == [1, 2, 3, 1, 2]
        r = InnerLoopPlan.seeded_random(4, 9)
        assert [r(k) for k in range(30)] == [InnerLoopPlan.seeded_random(4, 9)(k) for k in range(30)]
        assert all(1 <= r(k) <= 4 for k in range(200))
        with pytest.raises(ConfigurationError):
            InnerLoopPlan(2, lambda k: 3)(0)
        with pytest.raises(ConfigurationError):
            InnerLoopPlan.from_name("sometimes", 2)


class TestRun:
    def test_box_corner_example(self):
        spec = gen_box_corner(2)
        plain = run_dsap(spec.family, kaczmarz_plan(2), [3, 3], StopRule(1e-6), objective=spec.objective)
        assert np.array_equal(plain.final.iterate, [3, 3]) and plain.final.phi == 6.0
        sup = run_superiorized_dsap(
            spec.family, kaczmarz_plan(2), spec.objective, make_beta_schedule(1.0, 0.99), 1, [3, 3], StopRule(1e-6)
        )
        assert sup.final.max_violation <= 1e-6
        assert sup.final.phi < plain.final.phi
        assert sup.final.phi >= 2.0 - 1e-6

    def test_constant_objective_equals_plain(self):
        spec = gen_consistent_halfspaces(4, 6, 12)
        const = LinearObjective(np.zeros(4))
        stop = StopRule(1e-8, 5000)
        for am in (kaczmarz_plan(6), cimmino_plan(6)):
            plain = run_dsap(spec.family, am, spec.x0, stop, objective=const)
            sup = run_superiorized_dsap(spec.family, am, const, make_beta_schedule(1.0, 0.99), 1, spec.x0, stop)
            assert np.array_equal(plain.iterates, sup.iterates)

    def test_exhausted_schedule_matches_plain(self):
        spec = gen_consistent_halfspaces(3, 5, 4)
        beta = make_beta_schedule(1.0, 0.5).advance(2000)
        stop = StopRule(1e-8, 3000)
        plain = run_dsap(spec.family, cimmino_plan(5), spec.x0, stop)
        sup = run_superiorized_dsap(spec.family, cimmino_plan(5), QuadraticObjective([9, 9, 9]), beta, 2, spec.x0, stop)
        assert len(plain) == len(sup)
        assert np.max(np.abs(plain.iterates - sup.iterates)) <= 1e-15

    def test_caller_schedule_untouched(self):
        spec = gen_box_corner(2)
        beta = make_beta_schedule(1.0, 0.9)
        run_superiorized_dsap(spec.family, kaczmarz_plan(2), spec.objective, beta, 2, [3, 3], StopRule(1e-6, 50))
        assert beta.cursor == 0

    def test_beta_sums_and_displacements(self):
        spec = gen_consistent_halfspaces(3, 5, 8)
        beta = make_beta_schedule(1.0, 0.9)
        tr = run_superiorized_dsap(
            spec.family, cimmino_plan(5), OneNormObjective(), beta, InnerLoopPlan.cycle(3), spec.x0, StopRule(1e-6, 400)
        )
        assert len(tr.beta_sums) == tr.final.k
        b = make_beta_schedule(1.0, 0.9)
        for k, s in enumerate(tr.beta_sums[:20]):
            assert s == pytest.approx(math.fsum(b.next() for _ in range(k % 3 + 1)), rel=1e-15)
        assert all(d <= s + 1e-12 for d, s in zip(tr.displacements, tr.beta_sums))
        assert math.fsum(tr.beta_sums) <= beta.total_bound

    @pytest.mark.parametrize("seed", range(3))
    def test_feasibility_preserved(self, seed):
        spec = gen_consistent_halfspaces(5, 10, 100 + seed)
        stop = StopRule(1e-6, 40_000)
        for am in (kaczmarz_plan(10), cimmino_plan(10)):
            tr = run_superiorized_dsap(
                spec.family, am, QuadraticObjective(np.zeros(5)), make_beta_schedule(1.0, 0.99),
                InnerLoopPlan.seeded_random(3, seed), spec.x0, stop,
            )
            assert tr.final.max_violation <= 1e-6


class TestObjectives:
    @pytest.mark.parametrize(
        "d",
        [
            {"kind": "linear", "c": [1, 2]},
            {"kind": "quadratic", "r": [0.5, -1]},
            {"kind": "one_norm"},
            {"kind": "max_linear", "pieces": [{"c": [1, 0], "d": 0.5}, {"c": [-1, 2], "d": 0}]},
        ],
    )
    def test_json_round_trip(self, d):
        obj = objective_from_dict(d)
        again = objective_from_dict(obj.to_dict())
        x = np.array([0.3, -1.7])
        assert obj.value(x) == again.value(x)

    @pytest.mark.parametrize("d", [{"kind": "cubic"}, {"kind": "linear"}, {"kind": "max_linear", "pieces": [{}]}, []])
    def test_malformed(self, d):
        with pytest.raises(InputError):
            objective_from_dict(d)

    def test_analysis_constants_ranges(self):
        AnalysisConstants(0.5, 2.0)
        with pytest.raises(ConfigurationError):
            AnalysisConstants(1.5, 2.0)
        with pytest.raises(ConfigurationError):
            AnalysisConstants(0.5, 0.5)


def _objectives(dim, rng):
    return [
        LinearObjective(rng.standard_normal(dim)),
        QuadraticObjective(rng.standard_normal(dim)),
        OneNormObjective(),
        MaxLinearObjective(rng.standard_normal((3, dim)), rng.standard_normal(3)),
    ]


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 6))
def test_subgradient_inequality(seed, dim):
    rng = np.random.default_rng(seed)
    x, y = rng.uniform(-5, 5, (2, dim))
    x[rng.random(dim) < 0.2] = 0.0  # land on one-norm kinks sometimes
    for obj in _objectives(dim, rng):
        s = obj.subgradient(x)
        assert obj.value(y) >= obj.value(x) + s @ (y - x) - 1e-9


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 6), st.floats(1e-3, 2.0))
def test_decrease_implies_descent_direction(seed, dim, delta):
    rng = np.random.default_rng(seed)
    x, y = rng.uniform(-5, 5, (2, dim))
    for obj in _objectives(dim, rng):
        if obj.value(x) - obj.value(y) > delta:
            assert obj.subgradient(x) @ (y - x) < -delta + 1e-9
