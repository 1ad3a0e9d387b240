import math

import numpy as np
import pytest

from gausstrace.domains import GraphStrip, HalfLine, HalfPlane, flat_profile, make_domain
from gausstrace.rearrange import (ZygmundParams, check_gradient, max_relative_deviation,
                                  rearrangement, zygmund_norm)
from gausstrace.testbed import (POWER_DELTAS, Claim, catalog, check_claim, constant_field,
                                coordinate_field, entry, family, power_field, w1p_norm)
from gausstrace.verify import REAL_LINE

ALL_CLAIMS = [(e.name, i) for e in catalog() for i in range(len(e.claims))]


def test_catalog_size_floor():
    assert len(catalog()) >= 12


def test_catalog_names_unique():
    names = [e.name for e in catalog()]
    assert len(names) == len(set(names))


def test_power_family_has_five_entries():
    fam = catalog("power")
    assert [e.parameter for e in fam] == list(POWER_DELTAS)
    assert len(fam) == 5


def test_family_constructors():
    assert family("power") is power_field
    with pytest.raises(KeyError):
        family("nope")


def test_unknown_entry():
    with pytest.raises(KeyError):
        entry("nope")


def test_power_field_sobolev_claim():
    e = entry("power-0.3")
    claim = next(c for c in e.claims if c.space == "W1p" and c.params == (2.0,))
    assert claim.finite
    assert check_claim(e, claim) == (True, "Finite")


def test_coordinate_in_log_sup_space():
    e = entry("coordinate")
    claim = Claim("Zygmund", (math.inf, -0.5), True, "")
    assert check_claim(e, claim)[0]


def test_coordinate_on_flat_strip_in_log_sup_space():
    d = GraphStrip(flat_profile(), -1.0, 1.0, 1.0)
    prof = rearrangement(coordinate_field(), 2000, d)
    assert zygmund_norm(prof, ZygmundParams(math.inf, -0.5)).finite


def test_constant_claims_all_finite():
    e = entry("constant1")
    assert all(c.finite for c in e.claims)


@pytest.mark.parametrize("name,index", ALL_CLAIMS)
def test_every_claim_machine_checked(name, index):
    e = entry(name)
    agrees, got = check_claim(e, e.claims[index])
    assert agrees, f"{e.claims[index].describe()}: measured {got}"


@pytest.mark.parametrize("spec", ["kind=halfline omega=0.0", "kind=interval a=-1 b=2",
                                  "kind=halfplane omega=0.5"])
@pytest.mark.parametrize("p", [1.0, 2.0, 3.0])
def test_w1p_of_constant(spec, p):
    d = make_domain(spec)
    res = w1p_norm(constant_field(1.0), d, p)
    assert res.value == pytest.approx(d.gamma_measure ** (1 / p), rel=1e-9)


def test_w1p_of_coordinate_on_real_line():
    res = w1p_norm(coordinate_field(), REAL_LINE, 2.0)
    assert res.lp == pytest.approx(1.0, rel=1e-10)
    assert res.grad_lp == pytest.approx(1.0, rel=1e-12)
    assert res.value == pytest.approx(2.0, rel=1e-10)


def test_w1p_power_below_threshold_finite():
    assert w1p_norm(power_field(-0.45), HalfLine(0.0), 2.0).finite


def test_w1p_power_past_threshold_diverges():
    assert w1p_norm(power_field(-0.55), HalfLine(0.0), 2.0).verdict == "Diverges"


def test_w1p_power_on_halfplane_matches_halfline():
    a = w1p_norm(power_field(-0.3), HalfLine(0.0), 2.0)
    b = w1p_norm(power_field(-0.3), HalfPlane(0.0), 2.0)
    assert b.value == pytest.approx(a.value, rel=1e-6)


@pytest.mark.parametrize("delta", POWER_DELTAS)
def test_power_profile_within_tolerance(delta):
    prof = rearrangement(power_field(delta), 4000, HalfLine(0.0))
    assert max_relative_deviation(prof, lambda s: s**delta, 1e-6, 0.5) <= 1e-3


@pytest.mark.parametrize("name", [e.name for e in catalog()])
def test_gradient_closures(name):
    e = entry(name)
    for d in (e.domain, HalfPlane(0.0)):
        ok, worst = check_gradient(e.field, d)
        assert ok, f"{d.spec()}: excess {worst}"


def test_catalog_entry_json_shape():
    d = entry("power-0.3").to_dict()
    assert set(d) == {"name", "family", "parameter", "domain", "has_profile", "claims"}
    assert all({"space", "params", "finite", "source", "text"} <= set(c) for c in d["claims"])


def test_fields_are_domain_agnostic():
    u = power_field(-0.3)
    x1 = np.array([[-1.0], [0.0]])
    x2 = np.array([[5.0, -1.0], [-3.0, 0.0]])
    np.testing.assert_allclose(u.value(x1), u.value(x2), rtol=1e-15)
