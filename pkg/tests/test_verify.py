import math

import mpmath as mp
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gausstrace import verify
from gausstrace.domains import GraphStrip, HalfLine, HalfPlane, flat_profile
from gausstrace.testbed import constant_field, coordinate_field, entry, power_field
from gausstrace.verify import (INEQUALITIES, REAL_LINE, InequalityReport, TripwireError,
                               check_embedding_inf, check_embedding_p, check_gross,
                               check_poincare_trace, check_poincare_wirtinger, check_trace_exp,
                               check_trace_l2, check_trace_logp, enforce,
                               trace_exp_rate_constant)

PHI0 = 1 / math.sqrt(2 * math.pi)
# mpmath oracles (dps=40)
TRACE_LOGP_ONE = 0.41815018388496481564  # sqrt(log 3) phi(0)
TRACE_LOGP_POWER = 0.65485745807963977244  # Phi(0)^(-0.6) sqrt(log(2 + Phi(0)^(-0.3))) phi(0)


def _report_keys(rep):
    return set(rep.to_dict())


def test_report_schema():
    rep = check_gross(constant_field(2.0))
    assert _report_keys(rep) >= {"inequality", "domain", "field", "params", "lhs", "rhs",
                                 "fitted_C", "verdict", "refinement"}
    assert set(rep.to_dict()["refinement"]) == {"coarse", "fine", "ratio"}


def test_report_rejects_unknown_verdict():
    with pytest.raises(ValueError):
        InequalityReport("Gross", "", "", {}, 0.0, 0.0, None, "Maybe", {})


def test_enforce_raises_on_diverges():
    rep = InequalityReport("Gross", "", "", {}, 2.0, 1.0, 2.0, "Diverges", {})
    assert rep.tripwire
    with pytest.raises(TripwireError):
        enforce(rep)


# ----------------------------------------------------------------------- Gross


@pytest.mark.parametrize("c", [0.5, 2.0, 3.0])
def test_gross_constant_is_equality(c):
    rep = check_gross(constant_field(c))
    assert rep.verdict == "Holds"
    assert rep.lhs == pytest.approx(c**2 * math.log(c), rel=1e-12)
    assert rep.rhs == pytest.approx(rep.lhs, rel=1e-12)


def test_gross_exponential_closed_form():
    # u = exp(lam x): both sides equal 2 lam^2 exp(2 lam^2) for p = 2
    lam = -0.5
    want = 2 * lam**2 * math.exp(2 * lam**2)
    rep = check_gross(entry("exp"))
    assert rep.verdict == "Holds"
    assert rep.lhs == pytest.approx(want, rel=1e-12)
    assert rep.rhs == pytest.approx(want, rel=1e-12)


def test_gross_quadratic_holds_with_gap():
    rep = check_gross(entry("quadratic"))
    assert rep.verdict == "Holds"
    assert rep.rhs - rep.lhs > 1.0
    assert rep.refinement["ratio"] == pytest.approx(1.0, abs=1e-9)


def test_gross_signed_field_small_p_inapplicable():
    assert check_gross(coordinate_field(), 1.5).verdict == "Inapplicable"


def test_gross_signed_literal_variant_reported():
    rep = check_gross(coordinate_field(), 2.0)
    assert rep.verdict == "Holds"
    assert rep.details["signed_field"]


def test_gross_vanishing_set_small_p_indeterminate():
    assert check_gross(entry("bump"), 1.5).verdict == "Indeterminate"


def test_gross_rejects_p_one():
    with pytest.raises(ValueError):
        check_gross(constant_field(2.0), 1.0)


def test_gross_on_proper_subdomain_inapplicable():
    # u = 1 on a half-plane: RHS = 0.5 log(0.5) / 2 < 0 = LHS
    rep = check_gross(constant_field(1.0), 2.0, HalfPlane(0.0))
    assert rep.verdict == "Inapplicable"
    assert rep.details["gamma_measure"] == pytest.approx(0.5)


# -------------------------------------------------------------------- EmbedP


def test_embed_p_near_critical_power_on_halfplane():
    # delta p = -0.9: the rearranged integral still grows past 12 decades
    rep = check_embedding_p(power_field(-0.45), HalfPlane(0.0))
    assert rep.verdict == "Holds"
    assert rep.lhs == pytest.approx(check_embedding_p(entry("power-0.45")).lhs, rel=1e-3)


def test_embed_p_power_field_holds():
    rep = check_embedding_p(entry("power-0.3"))
    assert rep.verdict == "Holds"
    assert rep.fitted_C > 0
    assert 0.8 <= rep.refinement["ratio"] <= 1.2


def test_embed_p_constant():
    rep = check_embedding_p(constant_field(1.0), HalfLine(0.0))
    # the log-weighted norm of a constant over the mass of the domain
    want = math.sqrt(float(mp.quad(lambda s: 1 - mp.log(s), [0, 0.5])))
    assert rep.verdict == "Holds"
    assert rep.lhs == pytest.approx(want, rel=1e-4)
    assert rep.rhs == pytest.approx(math.sqrt(0.5), rel=1e-10)


def test_embed_p_coordinate():
    assert check_embedding_p(entry("coordinate")).verdict == "Holds"


@pytest.mark.parametrize("name", ["power-0.3", "coordinate", "bump"])
def test_embed_p_scaling_covariance(name):
    e = entry(name)
    a = check_embedding_p(e.field, e.domain)
    b = check_embedding_p(e.field.scaled(2.0), e.domain)
    assert b.lhs == pytest.approx(2 * a.lhs, rel=1e-12)
    assert b.rhs == pytest.approx(2 * a.rhs, rel=1e-12)


# ------------------------------------------------------------------ EmbedInf


def test_embed_inf_zero():
    rep = check_embedding_inf(constant_field(0.0), HalfLine(0.0))
    assert rep.lhs == 0.0 and rep.rhs == 0.0 and rep.verdict == "Holds"


def test_embed_inf_cutoff_holds():
    assert check_embedding_inf(entry("cutoff_log")).verdict == "Holds"


def test_embed_inf_bump_holds():
    assert check_embedding_inf(entry("bump")).verdict == "Holds"


def test_embed_inf_without_decay_inapplicable():
    rep = check_embedding_inf(entry("log+0.5"))
    assert rep.verdict == "Inapplicable"
    assert rep.details["lhs_verdict"] == "Finite"


# ----------------------------------------------------------------- TraceLogP


def test_trace_logp_constant_closed_form():
    rep = check_trace_logp(constant_field(1.0), HalfPlane(0.0))
    assert rep.lhs == pytest.approx(TRACE_LOGP_ONE, rel=1e-12)
    assert rep.rhs == pytest.approx(0.5, rel=1e-12)  # ||1||^2 = gamma(half-plane)
    assert rep.verdict == "Holds"


def test_trace_logp_power_field_closed_form():
    rep = check_trace_logp(power_field(-0.3), HalfPlane(0.0))
    assert rep.lhs == pytest.approx(TRACE_LOGP_POWER, rel=1e-12)
    assert rep.verdict == "Holds"


def test_trace_logp_on_strip_stable():
    rep = check_trace_logp(coordinate_field(), GraphStrip(flat_profile(), -1.0, 1.0, 1.0))
    assert rep.verdict == "Holds"
    assert rep.refinement["ratio"] == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_exponent_identity(p):
    # p / (2 p') = (p - 1) / 2 with p' the conjugate exponent
    conj = p / (p - 1)
    assert p / (2 * conj) == pytest.approx((p - 1) / 2, rel=1e-15)
    rep = check_trace_logp(constant_field(1.0), HalfPlane(0.0), p)
    assert rep.details["log_exponent"] == pytest.approx((p - 1) / 2)


def test_trace_logp_terms_identity():
    for beta in (0.25, 0.5, 1.0):
        t = verify.trace_logp_terms(-0.45, 2.0, beta)
        assert abs(t["identity_residual"]) <= 1e-10 * t["A3"]


# ------------------------------------------------------------------ TraceExp


def test_trace_exp_zero_gives_boundary_measure():
    rep = check_trace_exp(constant_field(0.0), HalfPlane(0.0))
    assert rep.lhs == pytest.approx(PHI0, rel=1e-12)
    assert rep.verdict == "Holds"


def test_trace_exp_cutoff_holds():
    rep = check_trace_exp(entry("cutoff_log"), HalfPlane(0.0), 0.5)
    assert rep.verdict == "Holds"
    assert 0.8 <= rep.refinement["ratio"] <= 1.2


def test_trace_exp_constant_grows_with_lambda():
    a = check_trace_exp(entry("cutoff_log"), HalfPlane(0.0), 0.5)
    b = check_trace_exp(entry("cutoff_log"), HalfPlane(0.0), 0.99)
    assert b.fitted_C > a.fitted_C
    assert b.details["rate_constant"] > a.details["rate_constant"]


@pytest.mark.parametrize("lam", [0.0, 1.0, -0.2, 1.5])
def test_trace_exp_lambda_range(lam):
    with pytest.raises(ValueError):
        check_trace_exp(entry("bump"), None, lam)


@pytest.mark.parametrize("lam", [0.3, 0.5, 0.9, 0.99])
def test_rate_constant_against_quadrature(lam):
    # int_0^1 t^-lam (1 - log t)^(1/2) dt after t = exp(-y)
    want = float(mp.quad(lambda y: mp.exp(-(1 - lam) * y) * mp.sqrt(1 + y),
                         [0, 1, 10, 100, mp.inf]))
    assert trace_exp_rate_constant(lam) == pytest.approx(want, rel=1e-12)


# ------------------------------------------------------------- plain checks


def test_poincare_wirtinger_real_line_constant_one():
    rep = check_poincare_wirtinger(coordinate_field(), REAL_LINE)
    assert rep.verdict == "Holds"
    assert rep.fitted_C == pytest.approx(1.0, rel=1e-10)


def test_trace_l2_bump():
    assert check_trace_l2(entry("bump")).verdict == "Holds"


def test_poincare_trace_single_point_boundary():
    # on a half-line the boundary is a point, so v = u - Tu vanishes there
    rep = check_poincare_trace(entry("quadratic"))
    assert rep.lhs == 0.0 and rep.verdict == "Holds"


def test_poincare_trace_halfplane():
    rep = check_poincare_trace(entry("radial"), HalfPlane(0.0))
    assert rep.verdict == "Holds" and rep.lhs > 0


# ------------------------------------------------------------------- catalog


CATALOG_CHECKS = [
    ("EmbedP", "power-0.1"), ("EmbedP", "log+0.25"), ("EmbedP", "hermite2"),
    ("TraceLogP", "power-0.2"), ("TraceLogP", "exp"), ("TraceLogP", "cutoff_log"),
    ("Gross", "hermite2"), ("Gross", "radial"),
]
_CHECK = {"EmbedP": check_embedding_p, "TraceLogP": check_trace_logp}


@pytest.mark.parametrize("ineq,name", CATALOG_CHECKS)
def test_fitted_constant_stable_under_refinement(ineq, name):
    e = entry(name)
    rep = check_gross(e) if ineq == "Gross" else _CHECK[ineq](e)
    assert rep.verdict == "Holds"
    assert 0.8 <= rep.refinement["ratio"] <= 1.2
    assert rep.lhs <= rep.fitted_C * rep.rhs * (1 + 1e-12)


@given(st.sampled_from(["constant1", "constant2", "quadratic", "exp", "bump"]),
       st.sampled_from([2.0, 2.5, 3.0]))
def test_gross_never_falsified(name, p):
    assert check_gross(entry(name), p).verdict != "Diverges"


def test_inequality_ids():
    assert set(INEQUALITIES) == {"Gross", "EmbedP", "EmbedInf", "PoincareWirtinger",
                                 "TraceLogP", "TraceExp", "TraceL2", "PoincareTrace"}


# ---------------------------------------------------------------------- scans


def test_scan_rejects_non_increasing_grid():
    with pytest.raises(ValueError):
        verify.sharpness_scan("EmbedP", [0.5, 0.4])


def test_scan_rejects_unknown():
    with pytest.raises(ValueError):
        verify.sharpness_scan("Gross")


def test_critical_midpoint_and_non_monotone_abort():
    assert verify._critical([1, 2, 3], ["Finite", "Finite", "Diverges"]) == 2.5
    assert verify._critical([1, 2], ["Finite", "Finite"]) is None
    with pytest.raises(verify.ScanError):
        verify._critical([1, 2, 3], ["Finite", "Diverges", "Finite"])


def test_embed_inf_scan_verdicts():
    sc = verify.sharpness_scan("EmbedInf")
    assert sc.verdicts == ["Finite", "Finite", "Finite", "Diverges", "Diverges"]
    assert sc.critical == pytest.approx(-0.45)


def test_trace_logp_scan_term_structure():
    sc = verify.sharpness_scan("TraceLogP", [0.5, 0.75])
    assert set(sc.terms) == {"A1", "A2", "A3"}
    assert sc.terms["A2"]["verdicts"] == ["Finite", "Finite"]
    assert sc.verdicts == ["Finite", "Diverges"]
    for row in sc.details:
        assert row["identity_residual"] <= 1e-6


def test_scan_workers_do_not_change_result():
    a = verify.sharpness_scan("EmbedP", [0.4, 0.6], workers=1).to_dict()
    b = verify.sharpness_scan("EmbedP", [0.4, 0.6], workers=2).to_dict()
    assert a == b
