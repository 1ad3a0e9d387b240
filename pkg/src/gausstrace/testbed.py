"""Explicit function catalog with gradients, rearrangements and memberships.

Every field is domain-agnostic: it acts on points of shape (n, dim), with
x_N the last coordinate and x_1 the first.  Analytic rearrangements are
supplied where a closed form is known (half-lines and half-planes
{x_N < omega}).  All closures that would overflow deep in the Gaussian tail
are written in log-space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .domains import Domain, HalfLine, HalfPlane, Interval, make_domain
from .gaussian import gauss_cdf, gauss_quantile, log_gauss_density, mills_inverse
from .quadrature import QuadratureRule, integrate_interior_log
from .rearrange import (
    RearrangementProfile,
    ScalarField,
    ZygmundParams,
    rearrangement,
    zygmund_norm,
)

__all__ = [
    "Claim",
    "CatalogEntry",
    "W1pResult",
    "catalog",
    "entry",
    "family",
    "power_field",
    "log_field",
    "coordinate_field",
    "radial_field",
    "constant_field",
    "bump_field",
    "hermite_field",
    "exp_field",
    "quadratic_field",
    "cutoff_log_field",
    "w1p_norm",
    "check_claim",
]


def _xn(x):
    return x[:, -1]


def _grad_last(x, gn):
    g = np.zeros_like(x, dtype=float)
    g[:, -1] = gn
    return g


def _grad_first(x, g1):
    g = np.zeros_like(x, dtype=float)
    g[:, 0] = g1
    return g


def _halfspace_omega(d: Domain):
    if isinstance(d, (HalfLine, HalfPlane)):
        return d.omega
    return None


# --------------------------------------------------------------------------
# fields
# --------------------------------------------------------------------------


def power_field(delta: float) -> ScalarField:
    """u = Phi(x_N)^delta; rearrangement s^delta on half-spaces."""

    def log_abs(x):
        return delta * special.log_ndtr(_xn(x))

    def log_grad(x):
        t = _xn(x)
        with np.errstate(divide="ignore"):
            return (np.log(abs(delta)) + (delta - 1.0) * special.log_ndtr(t)
                    + log_gauss_density(t))

    def grad(x):
        return _grad_last(x, math.copysign(1.0, delta) * np.exp(log_grad(x)))

    def profile(s, d):
        if _halfspace_omega(d) is None:
            return None
        return np.asarray(s, dtype=float) ** delta

    return ScalarField(f"power(delta={delta!r})", lambda x: np.exp(log_abs(x)), grad, profile,
                       log_abs, log_grad, params={"family": "power", "delta": delta})


def log_field(delta: float) -> ScalarField:
    """u = (1 - log Phi(x_N))^delta; rearrangement (1 - log s)^delta on half-spaces."""

    def base(x):
        return 1.0 - special.log_ndtr(_xn(x))

    def log_abs(x):
        return delta * np.log(base(x))

    def log_grad(x):
        t = _xn(x)
        with np.errstate(divide="ignore"):
            return np.log(abs(delta)) + (delta - 1.0) * np.log(base(x)) + np.log(mills_inverse(t))

    def grad(x):
        return _grad_last(x, -math.copysign(1.0, delta) * np.exp(log_grad(x)))

    def profile(s, d):
        if _halfspace_omega(d) is None:
            return None
        return (1.0 - np.log(np.asarray(s, dtype=float))) ** delta

    return ScalarField(f"log(delta={delta!r})", lambda x: np.exp(log_abs(x)), grad, profile,
                       log_abs, log_grad, params={"family": "log", "delta": delta})


def coordinate_field() -> ScalarField:
    """u = x_N."""

    def profile(s, d):
        om = _halfspace_omega(d)
        if om is None or om > 0:
            return None
        return -gauss_quantile(np.asarray(s, dtype=float))

    return ScalarField("coordinate", _xn, lambda x: _grad_last(x, np.ones(x.shape[0])), profile,
                       params={"family": "coordinate"})


def radial_field() -> ScalarField:
    """u = |x|."""

    def value(x):
        return np.linalg.norm(x, axis=1)

    def grad(x):
        r = np.linalg.norm(x, axis=1)
        safe = np.where(r > 0, r, 1.0)
        return np.where(r[:, None] > 0, x / safe[:, None], 0.0)

    def profile(s, d):
        s = np.asarray(s, dtype=float)
        if isinstance(d, HalfLine) and d.omega <= 0:
            return -gauss_quantile(s)
        if isinstance(d, HalfPlane) and d.omega == 0:
            # gamma(|x| > t, x_2 < 0) = exp(-t^2/2) / 2
            return np.sqrt(np.maximum(-2.0 * np.log(2.0 * s), 0.0))
        if isinstance(d, Interval) and d.a == -d.b:
            return -gauss_quantile(0.5 * s + gauss_cdf(-d.b))
        return None

    return ScalarField("radial", value, grad, profile, params={"family": "radial"})


def constant_field(c: float) -> ScalarField:
    return ScalarField(
        f"constant(c={c!r})",
        lambda x: np.full(x.shape[0], float(c)),
        lambda x: np.zeros_like(x, dtype=float),
        lambda s, d: np.full(np.shape(s), abs(float(c))),
        params={"family": "constant", "c": c},
    )


def bump_field(height: float = 1.0, width: float = 1.0) -> ScalarField:
    """height * exp(1 - 1/(1 - r^2)) with r = |x|/width, zero for r >= 1."""

    def value(x):
        r2 = np.sum(x * x, axis=1) / width**2
        inside = r2 < 1.0
        out = np.zeros(x.shape[0])
        out[inside] = height * np.exp(1.0 - 1.0 / (1.0 - r2[inside]))
        return out

    def grad(x):
        r2 = np.sum(x * x, axis=1) / width**2
        inside = r2 < 1.0
        g = np.zeros_like(x, dtype=float)
        q = 1.0 - r2[inside]
        fac = height * np.exp(1.0 - 1.0 / q) * (-2.0 / (q * q)) / width**2
        g[inside] = fac[:, None] * x[inside]
        return g

    return ScalarField(f"bump(height={height!r}, width={width!r})", value, grad,
                       params={"family": "bump", "height": height, "width": width})


def hermite_field(degree: int) -> ScalarField:
    """Probabilists' Hermite polynomial of x_1: degree 1 is x, degree 2 is x^2 - 1."""
    if degree == 1:
        return ScalarField("hermite(1)", lambda x: x[:, 0].copy(),
                           lambda x: _grad_first(x, np.ones(x.shape[0])),
                           params={"family": "hermite", "degree": 1})
    if degree == 2:
        return ScalarField("hermite(2)", lambda x: x[:, 0] ** 2 - 1.0,
                           lambda x: _grad_first(x, 2.0 * x[:, 0]),
                           params={"family": "hermite", "degree": 2})
    raise ValueError("only degrees 1 and 2 are catalogued")


def exp_field(lam: float) -> ScalarField:
    """u = exp(lam x_1)."""
    return ScalarField(
        f"exp(lambda={lam!r})",
        lambda x: np.exp(lam * x[:, 0]),
        lambda x: _grad_first(x, lam * np.exp(lam * x[:, 0])),
        log_abs=lambda x: lam * x[:, 0],
        log_grad_norm=lambda x: math.log(abs(lam)) + lam * x[:, 0] if lam else np.full(len(x), -np.inf),
        params={"family": "exp", "lambda": lam},
    )


def quadratic_field() -> ScalarField:
    """u = 1 + x_1^2."""
    return ScalarField("quadratic", lambda x: 1.0 + x[:, 0] ** 2,
                       lambda x: _grad_first(x, 2.0 * x[:, 0]),
                       params={"family": "quadratic"})


def _smoothstep(r, r0, r1):
    """C^1 cutoff: 1 for r <= r0, 0 for r >= r1, with derivative."""
    z = np.clip((r - r0) / (r1 - r0), 0.0, 1.0)
    val = 1.0 - z * z * (3.0 - 2.0 * z)
    der = -6.0 * z * (1.0 - z) / (r1 - r0)
    return val, der


def cutoff_log_field(delta: float = 0.5, r0: float = 2.0, r1: float = 5.0) -> ScalarField:
    """chi(|x|) (1 - log Phi(x_N))^delta with a C^1 radial cutoff chi."""
    base = log_field(delta)

    def value(x):
        chi, _ = _smoothstep(np.linalg.norm(x, axis=1), r0, r1)
        return chi * base.value(x)

    def grad(x):
        r = np.linalg.norm(x, axis=1)
        chi, dchi = _smoothstep(r, r0, r1)
        safe = np.where(r > 0, r, 1.0)
        radial = np.where(r[:, None] > 0, x / safe[:, None], 0.0)
        return chi[:, None] * base.grad(x) + (dchi * base.value(x))[:, None] * radial

    return ScalarField(f"cutoff_log(delta={delta!r})", value, grad,
                       params={"family": "cutoff_log", "delta": delta, "r0": r0, "r1": r1})


# --------------------------------------------------------------------------
# catalog
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Claim:
    """A membership statement: the named norm is finite (or infinite).

    ``space`` is "W1p" (params: p) or "Zygmund" (params: p, alpha).
    ``source`` names the argument the claim comes from.
    """

    space: str
    params: tuple
    finite: bool
    source: str

    def describe(self) -> str:
        if self.space == "W1p":
            name = f"W^(1,{_fmt(self.params[0])})"
        else:
            name = f"L^{_fmt(self.params[0])}(log L)^{_fmt(self.params[1])}"
        return f"{name} {'finite' if self.finite else 'infinite'}"


def _fmt(v):
    return "inf" if v == math.inf else f"{v:g}"


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    family: str
    field: ScalarField
    domain_spec: str
    claims: tuple[Claim, ...] = field(default_factory=tuple)
    parameter: float | None = None

    @property
    def domain(self) -> Domain:
        return make_domain(self.domain_spec)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "family": self.family,
            "parameter": self.parameter,
            "domain": self.domain_spec,
            "has_profile": self.field.profile is not None,
            "claims": [
                {"space": c.space, "params": [_json_num(v) for v in c.params],
                 "finite": c.finite, "source": c.source, "text": c.describe()}
                for c in self.claims
            ],
        }


def _json_num(v):
    return "inf" if v == math.inf else v


_HALF = "kind=halfline omega=0.0"

POWER_DELTAS = (-0.05, -0.1, -0.2, -0.3, -0.45)
LOG_DELTAS = (0.1, 0.25, 0.5)

_POWER_SRC = "power witness: s^delta (1 - log s)^a in L^p iff delta p > -1"
_LOG_SRC = "log witness: sup (1 - log s)^(delta + alpha) finite iff alpha <= -delta"
_GAUSS_SRC = "Gaussian tail: u* ~ sqrt(2 log 1/s)"
_BOUNDED = "bounded function"


def _power_claims(delta):
    out = []
    for p in (1.0, 2.0, 4.0):
        fin = delta * p > -1
        out.append(Claim("W1p", (p,), fin, _POWER_SRC))
        out.append(Claim("Zygmund", (p, 0.5), fin, _POWER_SRC))
    return tuple(out)


def _log_claims(delta):
    return (
        Claim("W1p", (2.0,), True, _LOG_SRC),
        Claim("Zygmund", (2.0, 0.5), True, _LOG_SRC),
        Claim("Zygmund", (math.inf, -delta), True, _LOG_SRC),
        Claim("Zygmund", (math.inf, -delta + 0.1), False, _LOG_SRC),
    )


def _gauss_tail_claims():
    return (
        Claim("W1p", (2.0,), True, _GAUSS_SRC),
        Claim("Zygmund", (2.0, 0.5), True, _GAUSS_SRC),
        Claim("Zygmund", (math.inf, -0.5), True, _GAUSS_SRC),
        Claim("Zygmund", (math.inf, -0.4), False, _GAUSS_SRC),
    )


def _bounded_claims():
    return (
        Claim("W1p", (2.0,), True, _BOUNDED),
        Claim("Zygmund", (2.0, 0.5), True, _BOUNDED),
        Claim("Zygmund", (math.inf, 0.0), True, _BOUNDED),
        Claim("Zygmund", (math.inf, -0.5), True, _BOUNDED),
    )


def _build_catalog() -> tuple[CatalogEntry, ...]:
    entries = []
    for d in POWER_DELTAS:
        entries.append(CatalogEntry(f"power{d:+g}", "power", power_field(d), _HALF,
                                    _power_claims(d), d))
    for d in LOG_DELTAS:
        entries.append(CatalogEntry(f"log{d:+g}", "log", log_field(d), _HALF, _log_claims(d), d))
    entries += [
        CatalogEntry("coordinate", "coordinate", coordinate_field(), _HALF, _gauss_tail_claims()),
        CatalogEntry("radial", "radial", radial_field(), _HALF, _gauss_tail_claims()),
        CatalogEntry("constant1", "constant", constant_field(1.0), _HALF, _bounded_claims(), 1.0),
        CatalogEntry("constant2", "constant", constant_field(2.0), _HALF, _bounded_claims(), 2.0),
        CatalogEntry("bump", "bump", bump_field(), _HALF, _bounded_claims()),
        CatalogEntry("hermite1", "hermite", hermite_field(1), _HALF, _gauss_tail_claims(), 1),
        CatalogEntry(
            "hermite2", "hermite", hermite_field(2), _HALF,
            (
                Claim("W1p", (2.0,), True, _GAUSS_SRC),
                Claim("Zygmund", (2.0, 0.5), True, _GAUSS_SRC),
                Claim("Zygmund", (math.inf, -1.0), True, _GAUSS_SRC),
                Claim("Zygmund", (math.inf, -0.5), False, _GAUSS_SRC),
            ),
            2,
        ),
        CatalogEntry("exp", "exp", exp_field(-0.5), _HALF,
                     (Claim("W1p", (2.0,), True, _GAUSS_SRC),
                      Claim("Zygmund", (2.0, 0.5), True, _GAUSS_SRC),
                      Claim("Zygmund", (math.inf, -0.5), False,
                            "u* grows like exp(c sqrt(log 1/s))")), -0.5),
        CatalogEntry("quadratic", "quadratic", quadratic_field(), _HALF,
                     (Claim("W1p", (2.0,), True, _GAUSS_SRC),
                      Claim("Zygmund", (2.0, 0.5), True, _GAUSS_SRC),
                      Claim("Zygmund", (math.inf, -1.0), True, _GAUSS_SRC),
                      Claim("Zygmund", (math.inf, -0.5), False, _GAUSS_SRC))),
        CatalogEntry("cutoff_log", "cutoff_log", cutoff_log_field(), _HALF, _bounded_claims(), 0.5),
    ]
    return tuple(entries)


_CATALOG: tuple[CatalogEntry, ...] | None = None


def catalog(family_name: str | None = None) -> list[CatalogEntry]:
    """The function catalog, optionally filtered by family."""
    global _CATALOG
    if _CATALOG is None:
        _CATALOG = _build_catalog()
    if family_name is None:
        return list(_CATALOG)
    return [e for e in _CATALOG if e.family == family_name]


def entry(name: str) -> CatalogEntry:
    for e in catalog():
        if e.name == name:
            return e
    raise KeyError(f"unknown catalog field {name!r}")


def family(name: str):
    """Constructor of a one-parameter witness family ("power" or "log")."""
    if name == "power":
        return power_field
    if name == "log":
        return log_field
    raise KeyError(f"unknown family {name!r}")


# --------------------------------------------------------------------------
# weighted Sobolev norm
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class W1pResult:
    """||u||_p + ||grad u||_p with per-term convergence diagnostics."""

    value: float
    lp: float
    grad_lp: float
    verdict: str
    lp_tail: float
    grad_tail: float
    lp_error: float
    grad_error: float

    @property
    def finite(self) -> bool:
        return self.verdict == "Finite"

    def power(self, p: float) -> float:
        return self.value**p


FINITE_TAIL = 1e-6
DIVERGENT_TAIL = 0.05
DEEP_2D_H = 1.0


def _auto_deep(d: Domain, deep):
    if deep is None:
        return d.dim == 1 and d.deep_axis is not None
    return bool(deep)


def _log_integral(d, logf, deep, h, max_halvings=3):
    """Integral of exp(logf), halving h while the refinement error is large."""
    rule = QuadratureRule(d, h=h, deep=deep)
    for _ in range(max_halvings + 1):
        est = integrate_interior_log(d, logf, rule)
        if est.log_value == -math.inf:
            return 0.0, 0.0, 0.0
        if est.error <= FINITE_TAIL or est.tail >= DIVERGENT_TAIL:
            break
        rule = rule.refined()
    return math.exp(est.log_value), est.error, est.tail


def w1p_norm(u, d: Domain | None = None, p: float = 2.0, *, deep: bool | None = None,
             h: float | None = None) -> W1pResult:
    """Weighted W^{1,p} norm by log-space quadrature.

    Each of the two integrals is Finite when its refinement difference and
    its share in the unit slab at the truncation are below 1e-6, Diverges
    when that share exceeds 5% (the integrand does not decay where the
    domain was cut), and Indeterminate otherwise.
    """
    if isinstance(u, CatalogEntry):
        d = d or u.domain
        u = u.field
    d = d or u.domain
    if not 1 <= p < math.inf:
        raise ValueError("p must lie in [1, inf)")
    adaptive = deep is None and d.dim > 1 and d.deep_axis is not None
    deep = _auto_deep(d, deep)
    with np.errstate(divide="ignore", over="ignore"):
        a, ea, ta = _log_integral(d, lambda x: p * u.abs_log(x), deep, h)
        b, eb, tb = _log_integral(d, lambda x: p * u.grad_log(x), deep, h)
        if adaptive and max(ta, tb) > FINITE_TAIL:
            # a 2D deep rule is costly, so it is only used when the standard
            # truncation leaves a visible tail; coarse cells suffice there
            hd = DEEP_2D_H if h is None else h
            a, ea, ta = _log_integral(d, lambda x: p * u.abs_log(x), True, hd)
            b, eb, tb = _log_integral(d, lambda x: p * u.grad_log(x), True, hd)
    tails = (ta, tb)
    errs = (ea, eb)
    if max(tails) >= DIVERGENT_TAIL or not (math.isfinite(a) and math.isfinite(b)):
        verdict = "Diverges"
    elif max(tails) <= FINITE_TAIL and max(errs) <= FINITE_TAIL:
        verdict = "Finite"
    else:
        verdict = "Indeterminate"
    value = a ** (1 / p) + b ** (1 / p)
    return W1pResult(value, a ** (1 / p), b ** (1 / p), verdict, ta, tb, ea, eb)


def check_claim(e: CatalogEntry, claim: Claim, *, levels: int = 4000) -> tuple[bool, str]:
    """Machine-check one membership claim; returns (agrees, measured verdict)."""
    d = e.domain
    if claim.space == "W1p":
        res = w1p_norm(e.field, d, claim.params[0])
        got = res.verdict
    else:
        prof = _claim_profile(e, d, levels)
        got = zygmund_norm(prof, ZygmundParams(*claim.params)).verdict
    want = "Finite" if claim.finite else "Diverges"
    return got == want, got


def _claim_profile(e: CatalogEntry, d: Domain, levels: int) -> RearrangementProfile:
    deep = _auto_deep(d, None)
    return rearrangement(e.field, levels, d, deep=deep)
