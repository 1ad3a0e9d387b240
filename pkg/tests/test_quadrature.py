import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gausstrace.domains import HalfLine, HalfPlane, Interval, Rectangle
from gausstrace.gaussian import gauss_cdf, log_gauss_cdf
from gausstrace.quadrature import (QuadratureRule, graded_edges, integrate_boundary,
                                   integrate_interior, integrate_interior_log)

PHI0 = 1 / math.sqrt(2 * math.pi)
# boundary value of Phi(x_2)^(2 delta) phi on {x_2 = 0}, delta = -0.3 (mpmath)
POWER_TRACE_SQ = 0.60468342348588800566


def _ones(x):
    return np.ones(x.shape[0])


def test_constant_on_halfline():
    est = integrate_interior(HalfLine(0.0), _ones)
    assert est.value == pytest.approx(0.5, abs=1e-12)
    assert est.converged


def test_second_moment():
    est = integrate_interior(Interval(-10.0, 10.0), lambda x: x[:, 0] ** 2)
    assert est.value == pytest.approx(1.0, abs=1e-10)


def test_log_weighted_radial_moment_is_finite():
    # |x|^2 (1 - log gamma_f(|x|))^(-1) with gamma_f(t) = exp(-t^2/2)/2 on the half-plane
    def f(x):
        r2 = np.sum(x * x, axis=1)
        return r2 / (1 + math.log(2) + r2 / 2)

    est = integrate_interior(HalfPlane(0.0), f)
    oracle = float(mp.quad(lambda r: r**3 / (1 + mp.log(2) + r * r / 2) * mp.exp(-r * r / 2),
                           [0, mp.inf])) / 2
    assert est.converged
    assert est.value == pytest.approx(oracle, rel=1e-9)


def test_boundary_constant_halfplane():
    assert integrate_boundary(HalfPlane(0.0), _ones).value == pytest.approx(PHI0, rel=1e-13)


@pytest.mark.parametrize("a,b", [(-1.0, 1.0), (-2.5, 0.3)])
def test_boundary_constant_interval(a, b):
    want = PHI0 * (math.exp(-a * a / 2) + math.exp(-b * b / 2))
    assert integrate_boundary(Interval(a, b), _ones).value == pytest.approx(want, rel=1e-14)


def test_boundary_power_field_squared():
    delta = -0.3
    est = integrate_boundary(HalfPlane(0.0), lambda x: gauss_cdf(x[:, 1]) ** (2 * delta))
    assert est.value == pytest.approx(POWER_TRACE_SQ, rel=1e-12)


@pytest.mark.parametrize("k", range(16))
def test_polynomial_moments_on_bounded_cells(k):
    r = QuadratureRule(Interval(-1.0, 2.0))
    got = float(np.sum(r.weights * r.nodes[:, 0] ** k))
    want = float(mp.quad(lambda x: x**k * mp.npdf(x), [-1, 2]))
    assert got == pytest.approx(want, rel=1e-12)


@pytest.mark.parametrize("q", [2, 3])
def test_refinement_order(q):
    d = Interval(-1.0, 2.0)
    ref = float(mp.quad(lambda x: mp.cos(3 * x) * mp.npdf(x), [-1, 2]))
    errs = []
    for h in (0.5, 0.25, 0.125):
        r = QuadratureRule(d, order=q, h=h)
        errs.append(abs(float(np.sum(r.weights * np.cos(3 * r.nodes[:, 0]))) - ref))
    for e1, e2 in zip(errs, errs[1:]):
        assert math.log2(e1 / e2) >= 2 * q - 0.1


def test_refined_rule_nests():
    r = QuadratureRule(Rectangle(-1.0, 2.0, -3.0, 0.5), h=0.5)
    f = r.refined()
    assert f.counts == tuple(2 * c for c in r.counts)
    for e, fe in zip(r.edges, f.edges):
        np.testing.assert_allclose(fe[::2], e, rtol=0, atol=1e-14)


def test_graded_edges_monotone_and_end_exact():
    e = graded_edges(-8.0, 0.0, 32)
    assert e[0] == -8.0 and e[-1] == 0.0
    assert np.all(np.diff(e) > 0)


def test_deep_log_integral_of_power_field():
    delta = -0.45
    est = integrate_interior_log(HalfLine(0.0), lambda x: 2 * delta * log_gauss_cdf(x[:, 0]),
                                 deep=True)
    want = 0.5 ** (2 * delta + 1) / (2 * delta + 1)
    assert est.converged
    assert math.exp(est.log_value) == pytest.approx(want, rel=1e-12)


def test_deep_log_integral_flags_divergence():
    delta = -0.6
    est = integrate_interior_log(HalfLine(0.0), lambda x: 2 * delta * log_gauss_cdf(x[:, 0]),
                                 deep=True)
    assert not est.converged
    assert est.tail > 0.5


def test_order_independence_of_reduction():
    r = QuadratureRule(HalfPlane(0.0))
    terms = r.weights * np.cos(r.nodes[:, 0]) * r.nodes[:, 1] ** 2
    perm = np.random.default_rng(0).permutation(terms.size)
    assert float(np.sum(terms[perm])) == pytest.approx(float(np.sum(terms)), abs=1e-14)


@given(st.floats(-3, 3), st.floats(-3, 3))
def test_interior_integral_linear(a, b):
    d = Interval(-2.0, 1.5)

    def f(x):
        return np.sin(x[:, 0])

    def g(x):
        return x[:, 0] ** 3

    lhs = integrate_interior(d, lambda x: a * f(x) + b * g(x)).value
    rhs = a * integrate_interior(d, f).value + b * integrate_interior(d, g).value
    assert lhs == pytest.approx(rhs, abs=1e-13)
