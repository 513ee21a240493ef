import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import zoo
from oracles import symbolic_attribution
from hoig.engine import (
    ExplanationRequest,
    ProductGrid,
    StraightLinePath,
    closed_form,
    compose_order,
    composition_terms,
    explain,
    first_order,
    linearity_check,
    second_order_hessian,
    verify_properties,
)
from hoig.errors import DimensionMismatch, OrderCapExceeded, OrderMismatch
from hoig.models import FiniteDifferenceModel, GprModel, PolynomialModel, linear, monomial
from hoig.models.base import PredictiveModel
from hoig.tensor import Method, QuadratureConfig, Rule, contract_last_index, total_sum

HESSIAN = Method.HESSIAN_FORMULA
COMPOSE = Method.OPERATOR_COMPOSITION


def request(model, x, baseline=None, order=1, M=100, rule=Rule.RIGHT_HAND, **kw):
    return ExplanationRequest(model, np.asarray(x, float), None if baseline is None else np.asarray(baseline, float),
                              order=order, quadrature=QuadratureConfig(M, rule), **kw)


class Exploding(PredictiveModel):
    """Fails on any evaluation; for the degenerate-input shortcut."""

    kind = "exploding"

    def _derivatives(self, Z, order):
        raise AssertionError("model must not be evaluated")


# --- path ---

def test_path_endpoints_and_nesting():
    rng = np.random.default_rng(0)
    x, b = rng.normal(size=5) * 3, rng.normal(size=5)
    p = StraightLinePath(x, b)
    assert np.array_equal(p(1.0), x) and np.array_equal(p(0.0), b)
    s, t = rng.uniform(size=100_000), rng.uniform(size=100_000)
    inner = p(s)                                   # gamma(x, s) for every s
    nested = t[:, None] * inner + (1 - t[:, None]) * b  # gamma(gamma(x, s), t)
    direct = p(s * t)
    ulp = np.spacing(np.maximum(np.abs(x), np.abs(b)))
    assert np.all(np.abs(nested - direct) <= 4 * ulp)
    for k in range(100):
        assert np.all(np.abs(p.restart_from(s[k])(t[k]) - p(s[k] * t[k])) <= 4 * ulp)


# --- first order ---

def test_linear_model_exact_for_any_M():
    beta = np.array([2.0, -1.0, 0.5])
    f = linear(beta, 1.0)
    x, b = np.array([0.3, 2.0, -1.0]), np.array([1.0, -0.5, 0.25])
    for M in (1, 2, 7, 100):
        for rule in Rule:
            a = first_order(request(f, x, b, M=M, rule=rule))
            assert np.allclose(a.values, beta * (x - b), rtol=0, atol=1e-14)


def test_degenerate_input_is_zero_without_evaluations():
    x = np.array([0.4, 0.1])
    stack = explain(request(Exploding(2), x, x, order=3))
    assert [t.order for t in stack] == [1, 2, 3]
    assert all(np.all(t.values == 0.0) for t in stack)
    assert stack[0].diagnostics["node_evaluations"] == 0


def test_bilinear_right_hand_first_order():
    a = first_order(request(monomial(3.0, [0, 1], 2), [1, 1]))
    assert np.allclose(a.values, [1.515, 1.515], rtol=1e-14)
    assert a.diagnostics["completeness_defect"] == pytest.approx(0.03, rel=1e-12)


def test_bilinear_trapezoid_is_exact():
    a = first_order(request(monomial(3.0, [0, 1], 2), [1, 1], rule=Rule.TRAPEZOID, M=3))
    assert np.allclose(a.values, [1.5, 1.5], rtol=1e-14)


# --- second order ---

def test_bilinear_second_order_both_methods():
    f = monomial(3.0, [0, 1], 2)
    h = second_order_hessian(request(f, [1, 1], order=2, method=HESSIAN))
    c = compose_order(request(f, [1, 1], order=2))
    oracle = symbolic_attribution(f.terms, [1, 1], [0, 0], 2, M=100)
    assert np.allclose(h.dense(), oracle, rtol=1e-13)
    assert np.allclose(c.dense(), oracle, rtol=1e-13)
    assert np.allclose(oracle, 3 * 0.505 ** 2)
    exact = closed_form(f, [1, 1], order=2)
    assert np.allclose(exact.dense(), 0.75, rtol=1e-14)
    assert total_sum(exact) == pytest.approx(3.0, rel=1e-14)
    assert h.meta.method is HESSIAN and c.meta.method is COMPOSE


def test_bilinear_high_M_converges_to_closed_form():
    f = monomial(3.0, [0, 1], 2)
    h = second_order_hessian(request(f, [1, 1], order=2, M=10_000, method=HESSIAN))
    assert np.allclose(h.dense(), 0.75, rtol=2e-4)


def test_trilinear_second_order_limit():
    f = monomial(3.0, [0, 1, 2], 3)
    a = closed_form(f, np.ones(3), order=2)
    assert np.allclose(a.dense(), 1 / 3, rtol=1e-14)
    h = second_order_hessian(request(f, np.ones(3), order=2, M=2000, method=HESSIAN))
    assert np.allclose(h.dense(), 1 / 3, rtol=2e-3)


def test_additive_second_order():
    f = zoo.additive()
    x, b = np.array([0.8, -0.4, 1.1]), np.array([-0.2, 0.3, 0.5])
    h = second_order_hessian(request(f, x, b, order=2, method=HESSIAN))
    first = first_order(request(f, x, b))
    off = h.dense()[~np.eye(3, dtype=bool)]
    assert np.max(np.abs(off)) <= 1e-15
    # repeated attribution of an additive model is its first-order attribution up to quadrature
    assert np.allclose(np.diag(h.dense()), first.values, rtol=0.05)
    ex2, ex1 = closed_form(f, x, b, 2), closed_form(f, x, b, 1)
    assert np.allclose(np.diag(ex2.dense()), ex1.values, rtol=1e-13)


# --- composition ---

def test_composition_terms_small_cases():
    # A_i f = Delta_i * int d_i f  -> one term
    assert composition_terms((0,)) == ((1.0, (0,), (0,)),)
    # A_i A_i f has the prefactor-derivative term and the chain-rule term
    terms = dict(((a, e), c) for c, a, e in composition_terms((0, 0)))
    assert terms == {((0,), (0, 0)): 1.0, ((0, 0), (1, 1)): 1.0}
    mixed = composition_terms((0, 1))
    assert mixed == ((1.0, (0, 1), (1, 1)),)


def test_trilinear_third_order_ninths():
    f = monomial(3.0, [0, 1, 2], 3)
    assert np.allclose(closed_form(f, np.ones(3), order=3).dense(), 1 / 9, rtol=1e-14)
    c = compose_order(request(f, np.ones(3), order=3, M=1000))
    assert np.allclose(c.dense(), 1 / 9, rtol=1e-2)


@pytest.mark.parametrize("order", [2, 3])
@pytest.mark.parametrize("rule", ["right", "trapezoid"])
def test_composition_matches_symbolic_oracle(order, rule):
    rng = np.random.default_rng(order)
    terms = [(1.5, [2, 1, 0]), (-0.5, [0, 1, 2]), (2.0, [1, 0, 0]), (0.25, [0, 0, 3]), (1.0, [1, 1, 1])]
    f = PolynomialModel(terms, 3)
    x = np.round(rng.uniform(-1, 1, 3), 2)
    b = np.round(rng.uniform(-1, 1, 3), 2)
    M = 7
    q = Rule.RIGHT_HAND if rule == "right" else Rule.TRAPEZOID
    oracle = symbolic_attribution(terms, x, b, order, M=M, rule=rule)
    for strategy in ("auto", "grid"):
        got = compose_order(request(f, x, b, order=order, M=M, rule=q, strategy=strategy)).dense()
        assert np.allclose(got, oracle, rtol=1e-11, atol=1e-13)
    exact = symbolic_attribution(terms, x, b, order)
    assert np.allclose(closed_form(f, x, b, order).dense(), exact, rtol=1e-11, atol=1e-13)


def test_grid_and_moments_agree_at_order_three():
    f = zoo.members()["synthetic_polynomial"][0]
    x = np.linspace(0.2, 0.9, 8)
    a = compose_order(request(f, x, order=3))
    g = compose_order(request(f, x, order=3, strategy="grid"))
    assert a.diagnostics["strategy"] == "polynomial-moments"
    assert g.diagnostics["strategy"] == "product-grid"
    assert np.max(np.abs(a.values - g.values)) <= 1e-13


def test_product_grid_collapse():
    q = QuadratureConfig(100)
    grid = ProductGrid(q, 2)
    assert grid.nominal_size == 10_000 and len(grid) == 2906
    t, w = q.nodes()
    # collapsed weights reproduce the full tensor-product sum of any function of s*t
    g = np.cos
    full = sum(w[i] * w[j] * t[i] ** 2 * g(t[i] * t[j]) for i in range(100) for j in range(100))
    assert grid.weights((2, 0)) @ g(grid.u) == pytest.approx(full, rel=1e-13)


def test_gpr_composition_matches_hessian_formula():
    m = zoo.gpr()
    x = np.full(8, 0.7)
    h = second_order_hessian(request(m, x, order=2, method=HESSIAN))
    c = compose_order(request(m, x, order=2))
    assert c.diagnostics["strategy"] == "product-grid"
    assert np.max(np.abs(h.values - c.values)) <= max(1e-3 * np.max(np.abs(h.values)), 1e-8)


def test_finite_difference_model_composition():
    exact = monomial(3.0, [0, 1], 2)
    fd = FiniteDifferenceModel(lambda z: float(3.0 * z[0] * z[1]), 2)
    x = np.array([0.9, 1.2])
    a = compose_order(request(exact, x, order=2, M=20))
    b = compose_order(request(fd, x, order=2, M=20))
    assert np.allclose(a.values, b.values, rtol=1e-5)


def test_additive_composition_only_pure_entries():
    f = zoo.additive()
    x, b = np.array([0.8, -0.4, 1.1]), np.array([-0.2, 0.3, 0.5])
    for order in (2, 3, 4):
        T = compose_order(request(f, x, b, order=order, M=50)).dense()
        mask = np.ones(T.shape, dtype=bool)
        for i in range(3):
            mask[(i,) * order] = False
        assert np.max(np.abs(T[mask])) <= 1e-8


def test_order_cap_and_method_errors():
    f = monomial(1.0, [0], 1)
    with pytest.raises(OrderCapExceeded):
        compose_order(request(f, [1.0], order=5, order_cap=4))
    with pytest.raises(OrderCapExceeded):
        explain(request(f, [1.0], order=3, order_cap=2))
    with pytest.raises(OrderMismatch):
        request(f, [1.0], order=3, method=HESSIAN)
    with pytest.raises(DimensionMismatch):
        request(f, [1.0, 2.0])
    with pytest.raises(DimensionMismatch):
        request(f, [1.0], [0.0, 0.0])


def test_node_count_warning():
    m = GprModel(np.array([[0.2], [0.6]]), [1.0, -0.5], 0.4, 1.0, 0.1)
    with pytest.warns(RuntimeWarning, match="nominal grid nodes"):
        t = compose_order(request(m, [1.0], order=4, M=57))
    assert t.diagnostics["nominal_nodes"] == 57 ** 4 > 10 ** 7
    assert t.diagnostics["node_evaluations"] < 57 ** 4


# --- properties ---

def test_convergence_halving():
    f = monomial(3.0, [0, 1], 2)
    defects = [abs(first_order(request(f, [1, 1], M=M)).diagnostics["completeness_defect"]) for M in (25, 50, 100, 200)]
    for a, b in zip(defects, defects[1:]):
        assert 2 / 1.5 <= a / b <= 2 * 1.5


def test_scaling_keeps_structure():
    m = zoo.gpr()
    scaled = GprModel(m.X, 10 * m.alpha, m.lengthscale, m.signal_variance, m.noise)
    x = np.full(8, 0.75)
    A = second_order_hessian(request(m, x, order=2, method=HESSIAN)).dense()
    B = second_order_hessian(request(scaled, x, order=2, method=HESSIAN)).dense()

    def strong(T, tau=0.1):
        off = np.abs(T) * (1 - np.eye(8))
        return {tuple(p) for p in np.argwhere(off >= tau * off.max())}

    assert strong(A) == strong(B)
    assert np.allclose(B, 10 * A, rtol=1e-12)


def test_linearity_examples():
    f = monomial(3.0, [0, 1], 8)
    g = monomial(1.0, [3], 8)
    x = np.random.default_rng(4).uniform(size=8)
    req = request(f, x, order=3)
    assert linearity_check(f, g, 1.0, 1.0, req).passed
    rep = linearity_check(f, g, 2.5, 0.0, req)
    assert rep.passed and rep.max_defect <= 1e-12
    assert linearity_check(f, f, 0.5, 0.5, req).max_defect <= 1e-12
    with pytest.raises(DimensionMismatch):
        linearity_check(f, monomial(1.0, [0], 2), 1, 1, req)


def test_verify_closed_forms_are_exact():
    f = zoo.members()["synthetic_polynomial"][0]
    x = np.linspace(0.1, 0.8, 8)
    stack = [closed_form(f, x, order=k) for k in (1, 2, 3)]
    report = verify_properties(stack, f)
    assert report.passed
    assert report.worst("completeness") <= 1e-13
    assert report.worst("marginalization") <= 1e-13


def test_verify_detects_corruption():
    f = monomial(3.0, [0, 1, 2], 3)
    stack = explain(request(f, np.ones(3), order=2))
    bad = stack[1].dense().copy()
    # keeps the total, breaks every row by far more than the quadrature tolerance, row 0 most
    bad[0, 0] += 100.0
    bad[1, 1] -= 60.0
    bad[2, 2] -= 40.0
    corrupted = type(stack[1]).from_dense(bad, stack[1].meta, stack[1].feature_names, {})
    report = verify_properties([stack[0], corrupted], f)
    assert not report.passed
    marg = [c for c in report.failures if c.name == "marginalization"]
    assert [c.name for c in report.failures] == ["marginalization"]
    assert marg[0].location == (0,)
    assert "FAIL" in marg[0].line()


def test_verify_rejects_mixed_inputs():
    f = monomial(3.0, [0, 1], 2)
    a = first_order(request(f, [1, 1]))
    b = second_order_hessian(request(f, [1, 2], order=2, method=HESSIAN))
    with pytest.raises(DimensionMismatch):
        verify_properties([a, b])


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_marginalization_random_polynomials(seed):
    rng = np.random.default_rng(seed)
    terms = [(float(rng.normal()), list(rng.integers(0, 3, size=3))) for _ in range(4)]
    f = PolynomialModel(terms, 3)
    x, b = rng.uniform(-1, 1, 3), rng.uniform(-1, 1, 3)
    stack = [closed_form(f, x, b, k) for k in (1, 2, 3)]
    scale = max(1.0, float(np.sum(np.abs(stack[0].values))))
    for lo, hi in zip(stack, stack[1:]):
        assert np.max(np.abs(lo.values - contract_last_index(hi).values)) <= 1e-12 * scale
    assert abs(total_sum(stack[2]) - (f.value(x) - f.value(b))) <= 1e-12 * scale
