import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from anchored_approx.decomposition import (
    BlackBoxFunction,
    anchored_component,
    annihilation_check,
    build_truncation_plan,
    component_norms_mc,
    eval_truncation,
    full_decomposition_sum,
)
from anchored_approx.errors import CapabilityError, InputError
from anchored_approx.functions import REGISTRY, bump_sum, make_function
from anchored_approx.index_sets import DownwardClosedFamily, SubsetMask, complement_members, order_family
from anchored_approx.points import Anchor, Box


def S(*idx, d=2):
    return SubsetMask.from_indices(idx, d)


def bb(fn, d):
    return BlackBoxFunction(fn, d)


class TestComponents:
    def test_constant(self):
        f = bb(lambda X: np.full(X.shape[0], 7.0), 3)
        c = Anchor([0, 0, 0])
        assert anchored_component(f, SubsetMask.empty(3), c, []) == 7.0
        for b in range(1, 8):
            u = SubsetMask(b, 3)
            assert anchored_component(f, u, c, np.full(u.card, 0.3)) == 0.0

    def test_hand_polynomial(self):
        f = bb(lambda X: 2 + 3 * X[:, 0] + X[:, 0] * X[:, 1], 2)
        c = Anchor([0, 0])
        x = np.array([0.7, -0.4])
        assert anchored_component(f, SubsetMask.empty(2), c, []) == pytest.approx(2)
        assert anchored_component(f, S(1), c, x[:1]) == pytest.approx(3 * 0.7)
        assert anchored_component(f, S(2), c, x[1:]) == pytest.approx(0, abs=1e-15)
        assert anchored_component(f, S(1, 2), c, x) == pytest.approx(0.7 * -0.4)

    def test_order_cap(self):
        f = bb(lambda X: X.sum(axis=1), 21)
        with pytest.raises(CapabilityError):
            anchored_component(f, SubsetMask.full(21), Anchor(np.zeros(21)), np.zeros(21))

    def test_vectorized_matches_scalar(self, rng):
        f = make_function("genz-oscillatory", 3)
        c = Anchor([0.2, 0.4, 0.6])
        u = S(1, 3, d=3)
        X = rng.random((5, 2))
        vec = anchored_component(f, u, c, X)
        np.testing.assert_allclose(vec, [anchored_component(f, u, c, x) for x in X], rtol=1e-15)

    @pytest.mark.parametrize("name", sorted(REGISTRY))
    def test_full_identity(self, name, rng):
        d = 4
        f = make_function(name, d)
        c = Anchor(rng.random(d))
        for x in rng.random((20, d)):
            fx = float(f(x))
            assert abs(full_decomposition_sum(f, c, x) - fx) <= 1e-12 * (1 + abs(fx))


class TestTruncationPlan:
    def test_order_one_coefficients(self):
        plan = build_truncation_plan(order_family(2, 1), Anchor([0, 0]))
        assert {str(v): a for v, a in plan.coefficients.items()} == {"{}": -1, "{1}": 1, "{2}": 1}

    def test_trivial_and_full(self):
        plan = build_truncation_plan(DownwardClosedFamily(2, (SubsetMask.empty(2),)), Anchor([0, 0]))
        assert plan.coefficients == {SubsetMask.empty(2): 1}
        full = build_truncation_plan(order_family(2, 2), Anchor([0, 0]))
        assert {str(v): a for v, a in full.coefficients.items()} == {"{}": 0, "{1}": 0, "{2}": 0, "{1,2}": 1}

    def test_product_truncates_to_zero(self, rng):
        f = bb(lambda X: X[:, 0] * X[:, 1], 2)
        plan = build_truncation_plan(order_family(2, 1), Anchor([0, 0]))
        np.testing.assert_allclose(eval_truncation(plan, f, rng.random((10, 2))), 0.0, atol=1e-15)

    def test_exact_for_lambda_functions(self, rng):
        f = bb(lambda X: np.sin(X[:, 0]) + X[:, 1] ** 2, 2)
        plan = build_truncation_plan(order_family(2, 1), Anchor([0.3, 0.1]))
        X = rng.random((30, 2))
        np.testing.assert_allclose(eval_truncation(plan, f, X), f(X), atol=1e-14)

    def test_anchor_value(self):
        f = make_function("genz-corner-peak", 3)
        c = Anchor([0.1, 0.2, 0.3])
        plan = build_truncation_plan(order_family(3, 1), c)
        assert eval_truncation(plan, f, c.c) == pytest.approx(float(f(c.c)), rel=1e-14)

    def test_evaluation_count(self):
        f = make_function("product", 4)
        fam = order_family(4, 2)
        plan = build_truncation_plan(fam, Anchor(np.zeros(4)))
        f.reset_counter()
        eval_truncation(plan, f, np.full(4, 0.5))
        assert f.eval_counter == len(fam)

    @given(st.integers(1, 5), st.lists(st.integers(0, 31), max_size=4), st.integers(0, 2**31))
    def test_plan_equals_double_sum(self, d, seeds, seed):
        fam = DownwardClosedFamily.closure([SubsetMask(b % (1 << d), d) for b in seeds], d)
        rng = np.random.default_rng(seed)
        c = Anchor(rng.random(d))
        f = make_function("genz-oscillatory", d)
        plan = build_truncation_plan(fam, c)
        x = rng.random(d)
        direct = sum(anchored_component(f, u, c, x[list(u.indices)]) for u in fam)
        assert eval_truncation(plan, f, x) == pytest.approx(direct, abs=1e-13)


class TestAnnihilation:
    @pytest.mark.parametrize("name", sorted(REGISTRY))
    def test_registry(self, name):
        d = 4
        rep = annihilation_check(make_function(name, d), order_family(d, 3), Anchor(np.full(d, 0.3)), Box.cube(d), 100, 1)
        assert rep.passed

    def test_zero_function(self):
        f = bb(lambda X: np.zeros(X.shape[0]), 3)
        rep = annihilation_check(f, order_family(3, 3), Anchor([0, 0, 0]), Box.cube(3), 20, 0)
        assert rep.max_violation == 0.0

    def test_product_pinned(self):
        f = bb(lambda X: np.prod(X, axis=1), 3)
        assert anchored_component(f, SubsetMask.full(3), Anchor([0, 0, 0]), [0.0, 0.4, 0.9]) == 0.0

    def test_trials_must_be_positive(self):
        with pytest.raises(InputError):
            annihilation_check(make_function("const", 2), order_family(2, 1), Anchor([0, 0]), Box.cube(2), 0)

    def test_vanishing_terms_outside_family(self, rng):
        d = 4
        fam = order_family(d, 2)
        f = BlackBoxFunction(bump_sum(d, fam), d)
        c = Anchor(np.zeros(d))
        for u in complement_members(fam):
            for x in rng.uniform(-1, 1, (50, d)):
                assert abs(anchored_component(f, u, c, x[list(u.indices)])) <= 1e-12


class TestBlackBox:
    def test_scalar_evaluator(self):
        f = BlackBoxFunction(lambda x: float(np.sum(x)), 2, vectorized=False)
        np.testing.assert_allclose(f(np.ones((3, 2))), [2, 2, 2])
        assert f.eval_counter == 3

    def test_dimension_mismatch(self):
        with pytest.raises(InputError):
            make_function("product", 2)(np.ones((2, 3)))

    def test_unknown_function(self):
        with pytest.raises(InputError):
            make_function("nope", 2)

    def test_component_norms(self):
        norms = component_norms_mc(make_function("additive-sin", 3), order_family(3, 2), Anchor([0, 0, 0]), Box.cube(3), 512, 0)
        for u, val in norms.items():
            if u.card == 2:
                assert val < 1e-14
            elif u.card == 1:
                assert val > 0.3
