"""Checks of the logarithmic Sobolev and trace inequalities, and sharpness scans.

Every check returns an :class:`InequalityReport`.  The right-hand side is
reported without its constant, the constant is fitted as LHS / RHS, and the
whole evaluation is repeated on a refined discretisation so that the fitted
constant's stability can be judged.

Verdicts:

``Holds``          both sides finite and the inequality direction is met
``Diverges``       the left side diverges while the right side is finite;
                   this would contradict the theorem (the falsification
                   tripwire)
``Indeterminate``  the numerics cannot decide
``Inapplicable``   a precondition of the inequality fails for this input
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import special
from scipy.special import logsumexp

from .domains import DEEP_RADIUS, Domain, HalfLine, Interval, make_domain
from .gaussian import gauss_cdf, gauss_density, gauss_quantile, log_gauss_density
from .quadrature import QuadratureRule, integrate_boundary, integrate_interior
from .rearrange import (
    ScalarField,
    ZygmundParams,
    classify_growth,
    rearrangement,
    zygmund_norm,
)
from .testbed import log_field, power_field, w1p_norm

__all__ = [
    "INEQUALITIES",
    "VERDICTS",
    "to_jsonable",
    "InequalityReport",
    "SharpnessScan",
    "ScanError",
    "TripwireError",
    "REAL_LINE",
    "check_gross",
    "check_embedding_p",
    "check_embedding_inf",
    "check_trace_logp",
    "check_trace_exp",
    "check_poincare_wirtinger",
    "check_trace_l2",
    "check_poincare_trace",
    "trace_exp_rate_constant",
    "sharpness_scan",
    "enforce",
]

INEQUALITIES = ("Gross", "EmbedP", "EmbedInf", "PoincareWirtinger", "TraceLogP", "TraceExp",
                "TraceL2", "PoincareTrace")
VERDICTS = ("Holds", "Diverges", "Indeterminate", "Inapplicable")

#: The real line, truncated at +8 and followed down to -37 by deep rules.
REAL_LINE = Interval(-40.0, 40.0)

GROSS_TOL = 1e-6
GROWTH_THRESHOLD = 0.05


class TripwireError(RuntimeError):
    """A finite right side with a divergent left side was observed."""

    def __init__(self, report: "InequalityReport"):
        super().__init__(f"falsification tripwire: {report.inequality} on {report.field} "
                         f"({report.domain})")
        self.report = report


class ScanError(RuntimeError):
    pass


def _num(v):
    if v is None:
        return None
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


@dataclass
class InequalityReport:
    inequality: str
    domain: str
    field: str
    params: dict
    lhs: float
    rhs: float
    fitted_C: float | None
    verdict: str
    refinement: dict
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.inequality not in INEQUALITIES:
            raise ValueError(f"unknown inequality id {self.inequality!r}")
        if self.verdict not in VERDICTS:
            raise ValueError(f"unknown verdict {self.verdict!r}")

    @property
    def tripwire(self) -> bool:
        return self.verdict == "Diverges"

    def to_dict(self) -> dict:
        ref = {k: _num(self.refinement.get(k)) for k in ("coarse", "fine", "ratio")}
        return {
            "inequality": self.inequality,
            "domain": self.domain,
            "field": self.field,
            "params": _clean(self.params),
            "lhs": _num(self.lhs),
            "rhs": _num(self.rhs),
            "fitted_C": _num(self.fitted_C),
            "verdict": self.verdict,
            "refinement": ref,
            "details": _clean(self.details),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def to_jsonable(obj):
    """Recursively convert numpy scalars and non-finite floats to JSON-safe values."""
    return _clean(obj)


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, str)) or obj is None:
        return obj
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _num(obj)
    return str(obj)


def enforce(report: InequalityReport) -> InequalityReport:
    """Raise :class:`TripwireError` if the report falsifies its inequality."""
    if report.tripwire:
        raise TripwireError(report)
    return report


def _ratio(a, b):
    if b is None or a is None:
        return None
    if b == 0:
        return 0.0 if a == 0 else math.inf
    return a / b


def _refinement(coarse, fine):
    return {"coarse": coarse, "fine": fine, "ratio": _ratio(fine, coarse)}


def _resolve(u, d):
    from .testbed import CatalogEntry

    if isinstance(u, CatalogEntry):
        d = d or u.domain
        u = u.field
    d = d or u.domain
    if d is None:
        raise ValueError("a domain is required")
    return u, make_domain(d)


def _deep(d: Domain) -> bool:
    return d.dim == 1 and d.deep_axis is not None


# --------------------------------------------------------------------------
# Gross
# --------------------------------------------------------------------------


def _gross_terms(u: ScalarField, d: Domain, p: float, rule: QuadratureRule):
    fine = rule.refined()
    out = []
    for r in (rule, fine):
        x = r.nodes
        la = u.abs_log(x)
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            lhs_f = np.where(np.isfinite(la), np.exp(p * la) * la, 0.0)
            lhs = float(np.sum(r.weights * lhs_f))
            lw = r.log_weights
            a = float(np.exp(logsumexp(lw + p * la)))
            grad_abs = 2.0 * u.grad_log(x) + (p - 2.0) * la
            grad_abs = np.where(np.isnan(grad_abs), -np.inf, grad_abs)
            g = float(np.exp(logsumexp(lw + grad_abs)))
            signed = np.sign(u.value(x))
            pos, neg = lw + grad_abs, lw + grad_abs
            gp = float(np.exp(logsumexp(np.where(signed > 0, pos, -np.inf))))
            gn = float(np.exp(logsumexp(np.where(signed < 0, neg, -np.inf))))
        tail = float(np.sum(np.abs(r.weights * lhs_f)[r.tail_mask]))
        out.append({"lhs": lhs, "A": a, "G": g, "G_signed": gp - gn, "tail": tail,
                    "zero_mass": float(np.sum(r.weights[la == -np.inf]))})
    return out


def check_gross(u, p: float = 2.0, domain: Domain | None = None, *,
                h: float | None = None, tol: float = GROSS_TOL) -> InequalityReport:
    """Logarithmic Sobolev inequality of Gross on the (truncated) whole space.

    LHS = int |u|^p log|u| dgamma and
    RHS = (p/2) int |grad u|^2 |u|^(p-2) dgamma + ||u||_p^p log ||u||_p.
    The literal variant with sign(u) inside the gradient integral is
    reported in ``details`` as ``rhs_with_sign``; it differs only for signed
    fields, where it is not a valid bound.
    """
    from .testbed import CatalogEntry

    if isinstance(u, CatalogEntry):
        u = u.field
    d = make_domain(domain) if domain is not None else REAL_LINE
    if not 1 < p < math.inf:
        raise ValueError("Gross inequality needs 1 < p < inf")
    if d.gamma_measure < 1.0 - 1e-12:
        # the inequality is normalised for a probability space; on a proper
        # subdomain u = 1 gives RHS = gamma log(gamma) / p < 0 = LHS
        return InequalityReport("Gross", d.spec(), u.name, {"p": p}, math.nan, math.nan, None,
                                "Inapplicable", _refinement(None, None),
                                {"reason": "stated on the whole space (gamma(Omega) = 1)",
                                 "gamma_measure": d.gamma_measure})
    rule = QuadratureRule(d, h=h, deep=_deep(d))
    coarse, fine = _gross_terms(u, d, p, rule)

    def rhs_of(t, signed=False):
        g = t["G_signed"] if signed else t["G"]
        a = t["A"]
        return 0.5 * p * g + (a * math.log(a) / p if a > 0 else 0.0)

    lhs, rhs = fine["lhs"], rhs_of(fine)
    slack = tol * (abs(lhs) + abs(rhs)) + 1e-12
    rhs_lit = rhs_of(fine, signed=True)
    err = abs(fine["lhs"] - coarse["lhs"]) + abs(rhs - rhs_of(coarse))
    signed_field = fine["G_signed"] != fine["G"]
    details = {
        "gap": rhs - lhs,
        "rhs_with_sign": rhs_lit,
        "literal_form_holds": bool(lhs <= rhs_lit + slack + err),
        "signed_field": bool(signed_field),
        "quadrature_error": err,
        "lp_power": fine["A"],
        "gradient_term": fine["G"],
    }
    if signed_field and p < 2:
        verdict = "Inapplicable"
        details["reason"] = "signed fields are only checked for p >= 2"
    elif p < 2 and fine["zero_mass"] > 0:
        verdict = "Indeterminate"
        details["reason"] = "|u|^(p-2) is singular on a set of positive measure where u = 0"
    elif not all(map(math.isfinite, (lhs, rhs))) or fine["tail"] > 1e-6 * max(abs(lhs), 1e-300):
        verdict = "Indeterminate"
        details["reason"] = "integrals not resolved on the truncated line"
    elif lhs <= rhs + slack + err:
        verdict = "Holds"
    else:
        verdict = "Diverges"
        details["reason"] = "left side exceeds the right side"
    c_coarse = _ratio(coarse["lhs"], rhs_of(coarse)) if rhs_of(coarse) > 0 else None
    c_fine = _ratio(lhs, rhs) if rhs > 0 else None
    return InequalityReport("Gross", d.spec(), u.name, {"p": p}, lhs, rhs, c_fine, verdict,
                            _refinement(c_coarse, c_fine), details)


# --------------------------------------------------------------------------
# Zygmund embeddings
# --------------------------------------------------------------------------


def _profile(u, d, levels, h_scale=1.0):
    deep = _deep(d)
    if not deep and d.deep_axis is not None and u.profile is not None:
        # in 2D the deep rule only helps when the tail can fall back to the
        # analytic profile; 12 decades are too shallow for s^delta with delta p near -1
        deep = u.profile(np.array([0.5 * d.gamma_measure]), d) is not None
    h = (0.01 if d.dim == 1 else 0.04) * h_scale
    return rearrangement(u, levels, d, deep=deep, h=h)


def _w1p(u, d, p, h_scale=1.0):
    if h_scale == 1.0:
        return w1p_norm(u, d, p)
    res = w1p_norm(u, d, p)
    if d.dim > 1 and res.lp_tail <= 1e-6 and res.grad_tail <= 1e-6:
        return w1p_norm(u, d, p, h=0.5 * h_scale)
    h = (0.25 if d.dim == 1 else 1.0) * h_scale
    return w1p_norm(u, d, p, h=h)


def check_embedding_p(u, d: Domain | None = None, p: float = 2.0, *,
                      levels: int = 4000) -> InequalityReport:
    """||u||_{L^p(log L)^(1/2)} <= C ||u||_{W^{1,p}} on a domain."""
    u, d = _resolve(u, d)
    results = []
    for scale in (1.0, 0.5):
        prof = _profile(u, d, int(levels / scale), scale)
        z = zygmund_norm(prof, ZygmundParams(p, 0.5))
        w = _w1p(u, d, p, scale)
        results.append((z, w))
    (zc, wc), (zf, wf) = results
    verdict = _embedding_verdict(zf.verdict, wf.verdict)
    details = {"lhs_verdict": zf.verdict, "lhs_growth": list(zf.growth),
               "rhs_verdict": wf.verdict, "lp": wf.lp, "grad_lp": wf.grad_lp}
    return InequalityReport("EmbedP", d.spec(), u.name, {"p": p, "alpha": 0.5}, zf.value,
                            wf.value, _ratio(zf.value, wf.value), verdict,
                            _refinement(_ratio(zc.value, wc.value), _ratio(zf.value, wf.value)),
                            details)


def _embedding_verdict(lhs_v: str, rhs_v: str) -> str:
    if rhs_v == "Diverges":
        return "Inapplicable"
    if rhs_v != "Finite":
        return "Indeterminate"
    if lhs_v == "Finite":
        return "Holds"
    if lhs_v == "Diverges":
        return "Diverges"
    return "Indeterminate"


def decays(u: ScalarField, d: Domain, tol: float = 1e-8) -> tuple[bool, float]:
    """|u| at the truncation shell is negligible relative to sup |u|.

    Domains without artificial sides are bounded and pass trivially.
    """
    rule = QuadratureRule(d, order=4)
    if not rule.tail_mask.any():
        return True, 0.0
    x = rule.nodes
    a = np.abs(u.value(x))
    shell = float(np.max(a[rule.tail_mask]))
    top = float(np.max(a)) if a.size else 0.0
    return shell <= tol * max(top, 1.0), shell


def _sup_norms(u: ScalarField, d: Domain, h_scale: float = 1.0):
    rule = QuadratureRule(d, order=4, h=(0.25 if d.dim == 1 else 0.5) * h_scale)
    x = np.vstack([rule.nodes, rule.boundary_nodes])
    return (float(np.max(np.abs(u.value(x)))),
            float(np.max(np.linalg.norm(u.gradient(x), axis=1))))


def check_embedding_inf(u, d: Domain | None = None, *, levels: int = 4000) -> InequalityReport:
    """||u||_{L^inf(log L)^(-1/2)} <= C (||grad u||_inf + ||u||_inf) for decaying Lipschitz u."""
    u, d = _resolve(u, d)
    ok, shell = decays(u, d)
    prof = _profile(u, d, levels)
    z = zygmund_norm(prof, ZygmundParams(math.inf, -0.5))
    details = {"decay_shell_max": shell, "lhs_verdict": z.verdict, "lhs_growth": list(z.growth)}
    if not ok:
        details["reason"] = "u does not vanish at infinity within the domain"
        return InequalityReport("EmbedInf", d.spec(), u.name, {"p": "inf", "alpha": -0.5},
                                z.value, math.nan, None, "Inapplicable",
                                _refinement(None, None), details)
    cs = []
    for scale in (1.0, 0.5):
        sup_u, sup_g = _sup_norms(u, d, scale)
        pr = prof if scale == 1.0 else _profile(u, d, 2 * levels, scale)
        zz = z if scale == 1.0 else zygmund_norm(pr, ZygmundParams(math.inf, -0.5))
        cs.append((zz, sup_u + sup_g))
    (zc, rc), (zf, rf) = cs
    if zf.verdict == "Finite":
        verdict = "Holds"
    elif zf.verdict == "Diverges":
        verdict = "Diverges"
    else:
        verdict = "Indeterminate"
    return InequalityReport("EmbedInf", d.spec(), u.name, {"p": "inf", "alpha": -0.5}, zf.value,
                            rf, _ratio(zf.value, rf), verdict,
                            _refinement(_ratio(zc.value, rc), _ratio(zf.value, rf)), details)


# --------------------------------------------------------------------------
# trace inequalities
# --------------------------------------------------------------------------


BOUNDARY_TOL = 1e-6


def _boundary_estimate(d: Domain, f, halvings: int = 4):
    """Boundary integral, halving the chart cells until the refinement error is small."""
    h = 0.25 if d.dim == 1 else 0.5
    for _ in range(halvings + 1):
        with np.errstate(over="ignore"):
            est = integrate_boundary(d, f, QuadratureRule(d, h=h, tol=BOUNDARY_TOL))
        if est.converged or not math.isfinite(est.value):
            break
        h /= 2
    return est


def trace_logp_integrand(p: float, beta: float | None = None):
    """|u|^p log^beta(2 + |u|) with beta = (p - 1)/2 by default.

    The same exponent may be written p/(2p'), with p' the conjugate
    exponent; the two expressions agree for every p > 1.
    """
    b = (p - 1.0) / 2.0 if beta is None else beta

    def f(values):
        a = np.abs(values)
        return a**p * np.log(2.0 + a) ** b

    return f


def check_trace_logp(u, d: Domain | None = None, p: float = 2.0) -> InequalityReport:
    """int_{boundary} |u|^p log^((p-1)/2)(2+|u|) phi dS <= C ||u||_{W^{1,p}}^p."""
    u, d = _resolve(u, d)
    g = trace_logp_integrand(p)
    est = _boundary_estimate(d, lambda x: g(u.value(x)))
    results = []
    for scale in (1.0, 0.5):
        results.append(_w1p(u, d, p, scale))
    wc, wf = results
    lhs = est.value
    details = {"rhs_verdict": wf.verdict, "lhs_error": est.error,
               "log_exponent": (p - 1) / 2, "lp": wf.lp, "grad_lp": wf.grad_lp}
    lhs_ok = est.converged and math.isfinite(lhs)
    if wf.verdict == "Diverges":
        verdict = "Inapplicable"
    elif wf.verdict != "Finite":
        verdict = "Indeterminate"
    elif lhs_ok:
        verdict = "Holds"
    elif not math.isfinite(lhs):
        verdict = "Diverges"
    else:
        verdict = "Indeterminate"
    return InequalityReport("TraceLogP", d.spec(), u.name, {"p": p}, lhs, wf.value**p,
                            _ratio(lhs, wf.value**p), verdict,
                            _refinement(_ratio(est.coarse, wc.value**p),
                                        _ratio(lhs, wf.value**p)), details)


def trace_exp_rate_constant(lam: float, gamma_omega: float = 1.0) -> float:
    """int_0^gamma t^(-lam) (1 - log t)^(1/2) dt in closed form.

    Equals e^(1-lam) Gamma(3/2, (1-lam)(1-log gamma)) / (1-lam)^(3/2); it
    blows up like (1-lam)^(-3/2) as lam -> 1.
    """
    if not 0 < lam < 1:
        raise ValueError("lambda must lie in (0, 1)")
    a = 1.0 - lam
    z = a * (1.0 - math.log(gamma_omega))
    upper = special.gammaincc(1.5, z) * special.gamma(1.5)
    return math.exp(a) * upper / a**1.5


def check_trace_exp(u, d: Domain | None = None, lam: float = 0.5) -> InequalityReport:
    """int_{boundary} exp(lam |u|^2) phi dS against the exponential bracket.

    RHS = exp[(|grad u|_inf + |u|_inf)^2] (|grad u|_inf (|grad u|_inf + |u|_inf) + 1).
    """
    if not 0 < lam < 1:
        raise ValueError("lambda must lie in (0, 1)")
    u, d = _resolve(u, d)
    ok, shell = decays(u, d)
    est = _boundary_estimate(d, lambda x: np.exp(lam * u.value(x) ** 2))
    rate = trace_exp_rate_constant(lam, d.gamma_measure)
    details = {"decay_shell_max": shell, "rate_constant": rate, "lhs_error": est.error}
    if not ok:
        details["reason"] = "u does not vanish at infinity within the domain"
        return InequalityReport("TraceExp", d.spec(), u.name, {"lambda": lam}, est.value,
                                math.nan, None, "Inapplicable", _refinement(None, None), details)
    cs = []
    for scale in (1.0, 0.5):
        su, sg = _sup_norms(u, d, scale)
        m = sg + su
        cs.append(math.exp(m * m) * (sg * m + 1.0))
    rc, rf = cs
    details["sup_u"], details["sup_grad"] = _sup_norms(u, d, 0.5)
    if est.converged and math.isfinite(est.value):
        verdict = "Holds"
    elif not math.isfinite(est.value):
        verdict = "Diverges"
    else:
        verdict = "Indeterminate"
    return InequalityReport("TraceExp", d.spec(), u.name, {"lambda": lam}, est.value, rf,
                            _ratio(est.value, rf), verdict,
                            _refinement(_ratio(est.coarse, rc), _ratio(est.value, rf)), details)


# --------------------------------------------------------------------------
# Poincare-type and plain trace inequalities
# --------------------------------------------------------------------------

PLAIN_TOL = 1e-6


def _resolved(est) -> bool:
    scale = max(abs(est.value), 1e-300)
    return bool(math.isfinite(est.value) and est.error <= PLAIN_TOL * scale
                and est.tail <= PLAIN_TOL * scale)


def _lp_pair(d: Domain, f, p: float, boundary: bool = False, halvings: int = 3):
    """(||f||_p on the fine rule, same on the coarse rule, resolved flag).

    Cells are halved while the refinement error is large; a visible tail at
    the truncation switches to the deep rule when the domain has one.
    """
    integ = integrate_boundary if boundary else integrate_interior
    g = lambda x: np.abs(f(x)) ** p  # noqa: E731
    deep = _deep(d)
    h = 0.25 if d.dim == 1 else 0.5
    with np.errstate(over="ignore", invalid="ignore"):
        est = integ(d, g, QuadratureRule(d, h=h, deep=deep, tol=PLAIN_TOL))
        if (not boundary and d.deep_axis is not None and not deep
                and est.tail > PLAIN_TOL * abs(est.value)):
            deep, h = True, 1.0
            est = integ(d, g, QuadratureRule(d, h=h, deep=deep, tol=PLAIN_TOL))
        for _ in range(halvings):
            if _resolved(est) or est.tail > PLAIN_TOL * abs(est.value):
                break
            h /= 2
            est = integ(d, g, QuadratureRule(d, h=h, deep=deep, tol=PLAIN_TOL))
    return est.value ** (1 / p), abs(est.coarse) ** (1 / p), _resolved(est)


def _grad_norm(u: ScalarField):
    return lambda x: np.linalg.norm(u.gradient(x), axis=1)


def _plain_report(ineq, d, u, p, lhs, rhs, extra=None):
    (lf, lc, lok), (rf, rc, rok) = lhs, rhs
    details = dict(extra or {})
    if not rok:
        verdict = "Inapplicable" if not math.isfinite(rf) else "Indeterminate"
    elif lok:
        verdict = "Holds"
    elif not math.isfinite(lf):
        verdict = "Diverges"
    else:
        verdict = "Indeterminate"
    return InequalityReport(ineq, d.spec(), u.name, {"p": p}, lf, rf, _ratio(lf, rf), verdict,
                            _refinement(_ratio(lc, rc), _ratio(lf, rf)), details)


def check_poincare_wirtinger(u, d: Domain | None = None, p: float = 2.0) -> InequalityReport:
    """||u - u_Omega||_{L^p(gamma)} <= C ||grad u||_{L^p(gamma)}, u_Omega the gamma-mean."""
    u, d = _resolve(u, d)
    deep = _deep(d)
    mean = integrate_interior(d, u.value, deep=deep, h=0.125 if d.dim == 1 else 0.25).value
    mean /= d.gamma_measure
    lhs = _lp_pair(d, lambda x: u.value(x) - mean, p)
    rhs = _lp_pair(d, _grad_norm(u), p)
    return _plain_report("PoincareWirtinger", d, u, p, lhs, rhs, {"mean": mean})


def check_trace_l2(u, d: Domain | None = None, p: float = 2.0) -> InequalityReport:
    """||Tu||_{L^p(boundary, gamma)} <= C ||u||_{W^{1,p}} (the plain trace bound)."""
    u, d = _resolve(u, d)
    lhs = _lp_pair(d, u.value, p, boundary=True)
    a = _lp_pair(d, u.value, p)
    b = _lp_pair(d, _grad_norm(u), p)
    rhs = (a[0] + b[0], a[1] + b[1], a[2] and b[2])
    return _plain_report("TraceL2", d, u, p, lhs, rhs)


def check_poincare_trace(u, d: Domain | None = None, p: float = 2.0) -> InequalityReport:
    """||Tv|| <= C ||grad v|| for v = u minus its weighted boundary mean (so v is in X)."""
    u, d = _resolve(u, d)
    bmean = integrate_boundary(d, u.value).value / d.boundary_measure()
    lhs = _lp_pair(d, lambda x: u.value(x) - bmean, p, boundary=True)
    rhs = _lp_pair(d, _grad_norm(u), p)
    return _plain_report("PoincareTrace", d, u, p, lhs, rhs, {"boundary_mean": bmean})


# --------------------------------------------------------------------------
# sharpness scans
# --------------------------------------------------------------------------


@dataclass
class SharpnessScan:
    """Per-exponent verdicts ("Finite", "Diverges", "Indeterminate") along a grid.

    ``critical`` is the midpoint between the last Finite and the first
    Diverges exponent.  For the trace scan ``terms`` holds the same data for
    each term of the boundary decomposition.
    """

    inequality: str
    exponent: str
    grid: list
    verdicts: list
    critical: float | None
    details: list
    terms: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return _clean(asdict(self))


def _critical(grid, verdicts, label="scan"):
    """Midpoint of last Finite / first Diverges; aborts on non-monotone verdicts."""
    first_div = next((i for i, v in enumerate(verdicts) if v == "Diverges"), None)
    if first_div is not None and any(v == "Finite" for v in verdicts[first_div:]):
        raise ScanError(f"non-monotone verdicts in {label}: {verdicts}")
    finite = [i for i, v in enumerate(verdicts) if v == "Finite"]
    if first_div is None or not finite:
        return None
    return 0.5 * (grid[finite[-1]] + grid[first_div])


def _ladder_verdict(values, threshold=GROWTH_THRESHOLD):
    """Bounded vs unbounded along a family approaching the critical parameter."""
    g1 = values[1] / values[0] - 1.0
    g2 = values[2] / values[1] - 1.0
    if g1 >= threshold and g2 >= threshold:
        v = "Diverges"
    elif g1 < threshold and g2 < threshold:
        v = "Finite"
    else:
        v = "Indeterminate"
    return v, (g1, g2)


LADDER_EPS = (0.1, 0.05, 0.025)


def _ladder_deltas(p, eps=LADDER_EPS):
    return [-(1.0 - e) / p for e in eps]


def _map(fn, items, workers):
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, items))
    return [fn(i) for i in items]


def _scan_embed_p(grid, p, levels, workers):
    deltas = _ladder_deltas(p)
    d = HalfLine(0.0)
    fields = [power_field(dl) for dl in deltas]
    profs = _map(lambda f: _profile(f, d, levels), fields, workers)
    norms = _map(lambda f: w1p_norm(f, d, p).value, fields, workers)
    verdicts, details = [], []
    for a in grid:
        z = [zygmund_norm(pr, ZygmundParams(p, a)).value for pr in profs]
        ratios = [zi / wi for zi, wi in zip(z, norms)]
        v, g = _ladder_verdict(ratios)
        verdicts.append(v)
        details.append({"alpha": a, "deltas": deltas, "lhs": z, "rhs": norms, "ratios": ratios,
                        "growth": list(g)})
    return verdicts, details, {"p": p, "family": "power", "deltas": deltas}


def _scan_embed_inf(grid, delta, levels):
    d = HalfLine(0.0)
    prof = _profile(log_field(delta), d, levels)
    verdicts, details = [], []
    for a in grid:
        z = zygmund_norm(prof, ZygmundParams(math.inf, a))
        verdicts.append(z.verdict)
        details.append({"alpha": a, "value": z.value, "partial": list(z.partial),
                        "growth": list(z.growth)})
    return verdicts, details, {"family": "log", "delta": delta}


def _log_power_terms(delta: float, p: float, beta: float, rule: QuadratureRule):
    """log-integrands of A1, A2, A3 and of |u'|^p, |u|^p for u = Phi^delta on x < 0."""
    x = rule.nodes[:, 0]
    lphi = special.log_ndtr(x)
    lu = delta * lphi
    ell = np.logaddexp(math.log(2.0), lu)  # log(2 + |u|)
    log_ell = np.log(ell)
    lgrad = math.log(abs(delta)) + (delta - 1.0) * lphi + log_gauss_density(x)
    with np.errstate(divide="ignore"):
        terms = {
            "A1": math.log(p) + (p - 1.0) * lu + beta * log_ell + lgrad,
            "A2": (math.log(beta) if beta > 0 else -np.inf) + p * lu + (beta - 1.0) * log_ell
            - ell + lgrad,
            "A3": p * lu + beta * log_ell + np.log(np.abs(x)),
            "grad": p * lgrad,
            "lp": p * lu,
        }
    lw = rule.log_weights
    return {k: float(np.exp(logsumexp(lw + v))) for k, v in terms.items()}


def trace_logp_terms(delta: float, p: float, beta: float, h: float = 0.25) -> dict:
    """A1, A2, A3 for u = Phi^delta on the half-line {x < 0}.

    For a half-plane the tangential integral contributes a factor 1, so the
    half-line values are the half-plane values.  The boundary integral equals
    A3 - A1 - A2 (fundamental theorem of calculus along x_N); the closed form
    is returned as ``boundary``.
    """
    rule = QuadratureRule(HalfLine(0.0), h=h, deep=True)
    t = _log_power_terms(delta, p, beta, rule)
    u0 = 0.5**delta
    t["boundary"] = u0**p * math.log(2.0 + u0) ** beta * float(gauss_density(0.0))
    t["identity_residual"] = t["A3"] - t["A1"] - t["A2"] - t["boundary"]
    return t


def _scan_trace_logp(grid, p, workers):
    deltas = _ladder_deltas(p)
    names = ("A1", "A2", "A3")

    def one(beta):
        rows = [trace_logp_terms(dl, p, beta) for dl in deltas]
        out = {"beta": beta, "deltas": deltas}
        verdicts = {}
        for name in names:
            grad_ratios = [r[name] / r["grad"] for r in rows]
            w_ratios = [r[name] / (r["lp"] ** (1 / p) + r["grad"] ** (1 / p)) ** p for r in rows]
            v, g = _ladder_verdict(grad_ratios)
            verdicts[name] = v
            out[name] = {"values": [r[name] for r in rows], "ratios": grad_ratios,
                         "growth": list(g), "w_ratios": w_ratios,
                         "w_growth": [w_ratios[1] / w_ratios[0] - 1, w_ratios[2] / w_ratios[1] - 1]}
        out["identity_residual"] = max(abs(r["identity_residual"]) / r["A3"] for r in rows)
        out["boundary"] = [r["boundary"] for r in rows]
        return out, verdicts

    res = _map(one, list(grid), workers)
    details = [r[0] for r in res]
    term_verdicts = {n: [r[1][n] for r in res] for n in names}
    # the decomposition breaks down as soon as one of its terms is unbounded
    overall = []
    for i in range(len(grid)):
        vs = [term_verdicts[n][i] for n in ("A1", "A3")]
        if "Diverges" in vs:
            overall.append("Diverges")
        elif all(v == "Finite" for v in vs):
            overall.append("Finite")
        else:
            overall.append("Indeterminate")
    return overall, details, term_verdicts, {"p": p, "family": "power", "deltas": deltas,
                                             "normalisation": "gradient seminorm ||d_N u||_p^p"}


def _scan_trace_exp(grid, lam, delta):
    """Boundary decomposition of exp(lam |u|^k) for the log family, by depth doubling.

    B1 = int F'(u) |u_N| phi and B3 = int F(u) |x_N| phi over x_N < 0, where
    F(u) = exp(lam |u|^k); their difference is the (finite) boundary value.
    """
    rule = QuadratureRule(HalfLine(0.0), h=0.25, deep=True)
    x = rule.nodes[:, 0]
    lphi = special.log_ndtr(x)
    base = 1.0 - lphi
    lu = delta * np.log(base)
    lgrad = math.log(delta) + (delta - 1.0) * np.log(base) + log_gauss_density(x) - lphi
    y = -(lphi - math.log(0.5))  # depth below gamma(Omega)
    y_max = float(np.max(y))
    cuts = [y_max / 4, y_max / 2, y_max]
    lw = rule.log_weights
    verdicts, details = [], []
    for k in grid:
        lf = lam * np.exp(k * lu)
        terms = {
            "B1": math.log(lam * k) + (k - 1.0) * lu + lf + lgrad,
            "B3": lf + np.log(np.abs(x)),
        }
        row = {"kappa": k}
        vs = []
        for name, lt in terms.items():
            parts = [float(logsumexp((lw + lt)[y <= c])) for c in cuts]
            r1 = math.expm1(parts[1] - parts[0])
            r2 = math.expm1(parts[2] - parts[1])
            v = classify_growth(r1, r2, GROWTH_THRESHOLD)
            vs.append(v)
            row[name] = {"log_partial": parts, "growth": [r1, r2], "verdict": v}
        if "Diverges" in vs:
            verdicts.append("Diverges")
        elif all(v == "Finite" for v in vs):
            verdicts.append("Finite")
        else:
            verdicts.append("Indeterminate")
        details.append(row)
    return verdicts, details, {"lambda": lam, "family": "log", "delta": delta,
                               "depth_cuts": cuts}


DEFAULT_GRIDS = {
    "EmbedP": (0.3, 0.4, 0.5, 0.6, 0.7),
    "EmbedInf": (-0.7, -0.6, -0.5, -0.4, -0.3),
    "TraceLogP": (0.25, 0.5, 0.75, 1.0, 1.25),
    "TraceExp": (1.5, 1.75, 2.0, 2.25, 2.5),
}


def sharpness_scan(inequality: str, grid=None, *, p: float = 2.0, delta: float = 0.5,
                   lam: float = 0.5, levels: int = 4000, workers: int = 1) -> SharpnessScan:
    """Locate the critical exponent of an inequality along its witness family.

    ``EmbedP``     alpha in L^p(log L)^alpha, power family Phi^delta with
                   delta p -> -1 (bounded vs unbounded ratio to the W^{1,p} norm)
    ``EmbedInf``   alpha in L^inf(log L)^alpha, log family (1 - log Phi)^delta
    ``TraceLogP``  log exponent beta of the trace integrand, power family,
                   with the boundary terms A1, A2, A3 tracked separately
    ``TraceExp``   power kappa inside exp(lam |u|^kappa), log family
    """
    if inequality not in DEFAULT_GRIDS:
        raise ValueError(f"no sharpness scan for {inequality!r}")
    grid = list(DEFAULT_GRIDS[inequality] if grid is None else grid)
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("exponent grid must be increasing")
    terms = {}
    if inequality == "EmbedP":
        verdicts, details, params = _scan_embed_p(grid, p, levels, workers)
        name = "alpha"
    elif inequality == "EmbedInf":
        verdicts, details, params = _scan_embed_inf(grid, delta, levels)
        name = "alpha"
    elif inequality == "TraceLogP":
        verdicts, details, tv, params = _scan_trace_logp(grid, p, workers)
        name = "beta"
        for n, vs in tv.items():
            terms[n] = {"verdicts": vs, "critical": _critical(grid, vs, f"{inequality}/{n}")}
    else:
        verdicts, details, params = _scan_trace_exp(grid, lam, delta)
        name = "kappa"
    crit = _critical(grid, verdicts, inequality)
    return SharpnessScan(inequality, name, grid, verdicts, crit, details, terms, params)
