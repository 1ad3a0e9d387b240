import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gausstrace.domains import (DEEP_RADIUS, TRUNCATION_RADIUS, DomainError, GraphStrip,
                                HalfLine, HalfPlane, Interval, Rectangle, boundary_charts,
                                flat_profile, make_domain, sine_profile)
from gausstrace.quadrature import QuadratureRule

PHI0 = 1 / math.sqrt(2 * math.pi)
# mpmath (dps=40) oracles
MASS_UNIT_INTERVAL = 0.68268949213708589717
MASS_FLAT_STRIP = 0.23303247133719613351  # (Phi(1)-Phi(-1)) (Phi(1)-Phi(0))
STRIP_BOTTOM_LENGTH = 0.2723537027992649914  # phi(0) (Phi(1)-Phi(-1))


def test_halfline_mass():
    assert make_domain("kind=halfline omega=0.0").gamma_measure == 0.5


def test_interval_mass():
    assert make_domain("kind=interval a=-1 b=1").gamma_measure == pytest.approx(
        MASS_UNIT_INTERVAL, rel=1e-14)


def test_flat_strip_mass():
    d = make_domain("kind=graphstrip profile=flat c=-1 d=1 beta=1")
    assert d.gamma_measure == pytest.approx(MASS_FLAT_STRIP, rel=1e-12)


def test_flat_strip_mass_by_product_quadrature():
    d = make_domain("kind=graphstrip profile=flat c=-1 d=1 beta=1")
    q = float(mp.quad(lambda x, y: mp.npdf(x) * mp.npdf(y), [-1, 1], [0, 1]))
    assert d.gamma_measure == pytest.approx(q, rel=1e-12)


def test_halfplane_single_chart():
    charts = boundary_charts(HalfPlane(0.0))
    assert len(charts) == 1
    assert charts[0].weighted_length() == pytest.approx(PHI0, rel=1e-13)


def test_halfplane_shifted_chart():
    charts = boundary_charts(HalfPlane(0.7))
    assert charts[0].weighted_length() == pytest.approx(PHI0 * math.exp(-0.245), rel=1e-13)


@pytest.mark.parametrize("a,b", [(-1.0, 1.0), (-2.0, 0.5), (0.3, 3.0)])
def test_interval_point_charts(a, b):
    charts = boundary_charts(Interval(a, b))
    assert len(charts) == 2 and all(c.is_point for c in charts)
    want = sorted([PHI0 * math.exp(-a * a / 2), PHI0 * math.exp(-b * b / 2)])
    got = sorted(c.weighted_length() for c in charts)
    assert got == pytest.approx(want, rel=1e-14)


def test_flat_strip_bottom_chart():
    d = make_domain("kind=graphstrip profile=flat c=-1 d=1 beta=1")
    lengths = [c.weighted_length() for c in d.boundary_charts()]
    assert lengths[0] == pytest.approx(STRIP_BOTTOM_LENGTH, abs=1e-10)


def test_sine_strip_bottom_chart_against_arc_length_oracle():
    d = GraphStrip(sine_profile(0.3, 1.0), -2.0, 2.0, 1.5)

    def integrand(t):
        g = 0.3 * mp.sin(t)
        return mp.npdf(t) * mp.npdf(g) * mp.sqrt(1 + (0.3 * mp.cos(t)) ** 2)

    want = float(mp.quad(integrand, [-2, 0, 2]))
    assert d.boundary_charts()[0].weighted_length() == pytest.approx(want, rel=1e-10)


def test_truncation_and_deep_boxes():
    d = HalfLine(0.0)
    assert d.box() == [(-TRUNCATION_RADIUS, 0.0)]
    assert d.box(deep=True) == [(-DEEP_RADIUS, 0.0)]
    assert d.omitted_mass() < 1e-14


def test_bounded_interval_has_no_deep_axis():
    assert Interval(-1.0, 1.0).deep_axis is None
    assert Interval(-40.0, 40.0).deep_axis == 0


@pytest.mark.parametrize("spec", [
    "kind=halfline omega=0.0",
    "kind=interval a=-1.0 b=2.0",
    "kind=rectangle a=-1.0 b=2.0 c=-3.0 d=0.5",
    "kind=halfplane omega=0.5",
    "kind=graphstrip profile=sine amp=0.3 freq=1.0 c=-2.0 d=2.0 beta=1.5",
])
def test_spec_round_trip(spec):
    d = make_domain(spec)
    again = make_domain(d.spec())
    assert again.spec() == d.spec()
    assert again.gamma_measure == d.gamma_measure


@pytest.mark.parametrize("spec", ["kind=moon", "kind=interval a=2 b=1", "kind=interval a=1",
                                  "kind=halfline omega=x",
                                  "kind=graphstrip profile=wobble c=-1 d=1"])
def test_bad_specs_rejected(spec):
    with pytest.raises(DomainError):
        make_domain(spec)


@given(st.floats(-3, 3), st.floats(0.01, 0.99), st.floats(-3, 0), st.floats(0.1, 3))
def test_rectangle_mass_additive(a, frac, c, hgt):
    b = a + 3.0
    m = a + frac * (b - a)
    whole = Rectangle(a, b, c, c + hgt).gamma_measure
    parts = Rectangle(a, m, c, c + hgt).gamma_measure + Rectangle(m, b, c, c + hgt).gamma_measure
    assert whole == pytest.approx(parts, abs=1e-13)


def _div_gap(d, order, h):
    """Interior integral of div(F phi)/phi minus boundary flux of F phi."""
    r = QuadratureRule(d, order=order, h=h)
    if d.dim == 1:
        def field(x):
            return np.cos(x)

        def div(x):
            return (-np.sin(x) - x * np.cos(x)).ravel()
    else:
        def field(x):
            return np.column_stack([np.sin(x[:, 1]), x[:, 0] * x[:, 1]])

        def div(x):
            return x[:, 0] - np.sum(field(x) * x, axis=1)
    interior = np.sum(r.weights * div(r.nodes))
    fb = np.asarray(field(r.boundary_nodes)).reshape(r.boundary_nodes.shape)
    flux = np.sum(r.boundary_weights * np.sum(fb * r.boundary_normals, axis=1))
    return abs(interior - flux)


DIV_DOMAINS = [
    Interval(-1.0, 2.0),
    Rectangle(-1.0, 2.0, -3.0, 0.5),
    GraphStrip(sine_profile(0.3, 1.0), -2.0, 2.0, 1.5),
    GraphStrip(flat_profile(), -1.0, 1.0, 1.0),
]


@pytest.mark.parametrize("d", DIV_DOMAINS, ids=lambda d: d.kind)
def test_divergence_theorem_default_rule(d):
    assert _div_gap(d, 8, 0.25) < 1e-13


@pytest.mark.parametrize("d", DIV_DOMAINS[:3], ids=lambda d: d.kind)
def test_divergence_theorem_second_order_with_midpoint_cells(d):
    e1, e2, e3 = (_div_gap(d, 1, h) for h in (0.5, 0.25, 0.125))
    assert math.log2(e1 / e2) >= 1.8
    assert math.log2(e2 / e3) >= 1.8


def test_halfplane_divergence_theorem():
    assert _div_gap(HalfPlane(0.3), 8, 0.5) < 1e-13
