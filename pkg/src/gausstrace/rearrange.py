"""Distribution functions, Gaussian decreasing rearrangements, Zygmund norms.

The distribution function is computed from a fine midpoint rule in which
every node carries its Gaussian mass spread uniformly over the range of |u|
across its cell (the cell's extent along each axis times the gradient).
This "ramp" model makes gamma_u piecewise linear in t, so it can be
evaluated and inverted exactly at its breakpoints.  Super-level sets far
out in the Gaussian tail are therefore resolved as well as the cells there,
which is what sharpness questions at s -> 0 need.

Profiles live on a level grid that is geometric toward s = 0: with
y = -log(s / gamma(Omega)), the edges are uniform in log(1 + y), so the
grid is fine near s = gamma(Omega) and still reaches hundreds of decades.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .domains import Domain
from .quadrature import QuadratureRule, integrate_interior

__all__ = [
    "RearrangementError",
    "ScalarField",
    "RearrangementProfile",
    "ZygmundParams",
    "ZygmundResult",
    "DistributionModel",
    "InclusionReport",
    "check_gradient",
    "distribution_function",
    "rearrangement",
    "analytic_profile",
    "profile_grid",
    "zygmund_norm",
    "zygmund_inclusion_check",
    "DEEP_DECADES",
    "STANDARD_DECADES",
]

DEEP_DECADES = 280.0
STANDARD_DECADES = 12.0
DIVERGENCE_THRESHOLD = 0.05
CONVERGENCE_TOL = 1e-3


class RearrangementError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class ScalarField:
    """A real function of points x with shape (n, dim).

    ``grad`` returns (n, dim).  ``log_abs`` and ``log_grad_norm`` are
    optional overflow-safe versions of log|u| and log|grad u| used by
    integrands that would overflow in linear scale.  ``profile(s, domain)``
    is an analytic decreasing rearrangement; it returns None for domains
    where no closed form is known.
    """

    name: str
    value: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray] | None = None
    profile: Callable[[np.ndarray, Domain], np.ndarray | None] | None = None
    log_abs: Callable[[np.ndarray], np.ndarray] | None = None
    log_grad_norm: Callable[[np.ndarray], np.ndarray] | None = None
    domain: Domain | None = None
    params: dict = field(default_factory=dict)

    def on(self, d: Domain) -> "ScalarField":
        return replace(self, domain=d)

    def __call__(self, x):
        return self.value(x)

    def scaled(self, c: float) -> "ScalarField":
        """The field c*u (c != 0) with consistent closures."""
        lc = math.log(abs(c))
        prof = self.profile
        return replace(
            self,
            name=f"{c!r}*{self.name}",
            value=lambda x: c * self.value(x),
            grad=None if self.grad is None else (lambda x: c * self.grad(x)),
            profile=None if prof is None else (
                lambda s, d: None if prof(s, d) is None else abs(c) * prof(s, d)),
            log_abs=None if self.log_abs is None else (lambda x: lc + self.log_abs(x)),
            log_grad_norm=None if self.log_grad_norm is None else (
                lambda x: lc + self.log_grad_norm(x)),
        )

    def abs_log(self, x) -> np.ndarray:
        if self.log_abs is not None:
            return np.asarray(self.log_abs(x), dtype=float)
        with np.errstate(divide="ignore"):
            return np.log(np.abs(self.value(x)))

    def grad_log(self, x) -> np.ndarray:
        if self.log_grad_norm is not None:
            return np.asarray(self.log_grad_norm(x), dtype=float)
        with np.errstate(divide="ignore"):
            return np.log(np.linalg.norm(self.gradient(x), axis=1))

    def gradient(self, x) -> np.ndarray:
        if self.grad is not None:
            return np.asarray(self.grad(x), dtype=float).reshape(x.shape)
        return _fd_gradient(self.value, x)


def _fd_step(x):
    return np.cbrt(np.finfo(float).eps) * np.maximum(1.0, np.abs(x))


def _fd_gradient(fn, x):
    g = np.empty_like(x, dtype=float)
    for k in range(x.shape[1]):
        step = _fd_step(x[:, k])
        xp, xm = x.copy(), x.copy()
        xp[:, k] += step
        xm[:, k] -= step
        g[:, k] = (fn(xp) - fn(xm)) / (xp[:, k] - xm[:, k])
    return g


def check_gradient(u: ScalarField, d: Domain, n: int = 1000, seed: int = 0):
    """Compare the gradient closure with central differences at random points.

    Returns (ok, worst_excess) where the tolerance per component is
    max(1e-6, 1e-4 |grad u|).
    """
    if u.grad is None:
        raise ValueError(f"field {u.name!r} has no gradient closure")
    rng = np.random.default_rng(seed)
    box = np.array(d.box())
    xi = rng.uniform(box[:, 0], box[:, 1], size=(n, d.dim))
    x = d.map(xi)
    g = u.gradient(x)
    fd = _fd_gradient(u.value, x)
    tol = np.maximum(1e-6, 1e-4 * np.linalg.norm(g, axis=1))[:, None]
    excess = np.abs(g - fd) - tol
    return bool(np.all(excess <= 0)), float(np.max(excess))


# --------------------------------------------------------------------------
# distribution function
# --------------------------------------------------------------------------


def _default_rule(d: Domain, deep: bool, h: float | None) -> QuadratureRule:
    if h is None:
        h = 0.01 if d.dim == 1 else 0.04
    return QuadratureRule(d, order=1, h=h, deep=deep)


class DistributionModel:
    """Piecewise-linear model of t -> gamma({|u| > t}) on a midpoint rule."""

    def __init__(self, u: ScalarField, d: Domain, rule: QuadratureRule):
        x = rule.nodes
        a = np.abs(np.asarray(u.value(x), dtype=float))
        g = u.gradient(x)
        # range of the linearised |u| over the node's cell
        width = np.sum(np.abs(np.einsum("nd,ndk->nk", g, rule.tangents)), axis=1)
        w = rule.weights
        if not np.all(np.isfinite(a)) or not np.all(np.isfinite(width)):
            raise RearrangementError(f"field {u.name!r} is not finite on the rule nodes")
        self.total = float(np.sum(w))
        self.max_value = float(np.max(a)) if a.size else 0.0
        tail = rule.tail_mask
        interior_max = float(np.max(a[~tail])) if np.any(~tail) else 0.0
        # the sup is approached at an artificial truncation side
        self.unbounded = bool(np.any(tail) and self.max_value > interior_max * (1 + 1e-9))
        self.data_floor = d.omitted_mass(rule.deep)

        ramp = width > 1e-12 * np.maximum(a, 1e-300)
        hi = a[ramp] + 0.5 * width[ramp]
        lo = a[ramp] - 0.5 * width[ramp]
        log_c = rule.log_weights[ramp] - np.log(width[ramp])
        c = np.exp(log_c)
        self._hi = _SuffixSums(hi, c, log_c)
        self._lo = _SuffixSums(lo, c, log_c)
        self._step = _SuffixSums(a[~ramp], w[~ramp], rule.log_weights[~ramp])
        jumps = np.concatenate([hi, lo, a[~ramp]])
        self.breaks = np.unique(np.concatenate([[0.0], jumps[jumps > 0]]))

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        ramp = self._hi.ramp_above(t) - self._lo.ramp_above(t)
        return np.clip(ramp + self._step.weight_above(t), 0.0, self.total)

    def left_limit(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return self(t) + self._step.at(t)

    def inverse(self, s) -> np.ndarray:
        """u*(s) = inf{t >= 0 : gamma_u(t) <= s}."""
        s = np.asarray(s, dtype=float)
        tb = self.breaks
        right = self(tb)
        left = self.left_limit(tb)
        tt = np.repeat(tb, 2)
        gg = np.column_stack([left, right]).ravel()
        gg = np.minimum.accumulate(gg)  # guard round-off
        k = np.searchsorted(-gg, -s, side="left")
        out = np.empty_like(s)
        at_end = k >= gg.size
        out[at_end] = tt[-1]
        first = k == 0
        out[first] = tt[0]
        mid = ~(at_end | first)
        k = k[mid]
        g0, g1 = gg[k - 1], gg[k]
        t0, t1 = tt[k - 1], tt[k]
        span = g0 - g1
        frac = np.where(span > 0, (g0 - s[mid]) / np.where(span > 0, span, 1.0), 1.0)
        out[mid] = t0 + frac * (t1 - t0)
        return np.maximum(out, 0.0)


class _SuffixSums:
    """Sums of c and c*key over entries whose key exceeds t.

    Deep in the tail c = w/width is far below the smallest double while
    t * sum(c) is not, so the sums of c are accumulated as logarithms.
    """

    def __init__(self, key, c, log_c=None):
        order = np.argsort(key, kind="stable")
        self.key = key[order]
        if log_c is None:
            with np.errstate(divide="ignore"):
                log_c = np.log(c)
        lc = log_c[order]
        with np.errstate(divide="ignore"):
            ck = np.sign(self.key) * np.exp(lc + np.log(np.abs(self.key)))
        self.log_c = np.concatenate([np.logaddexp.accumulate(lc[::-1])[::-1], [-np.inf]])
        self.ck = np.concatenate([np.cumsum(ck[::-1])[::-1], [0.0]])

    def _idx(self, t):
        return np.searchsorted(self.key, t, side="right")

    def weight_above(self, t):
        return np.exp(self.log_c[self._idx(t)])

    def ramp_above(self, t):
        """sum over key > t of c * (key - t)."""
        idx = self._idx(t)
        with np.errstate(divide="ignore"):
            tc = np.exp(self.log_c[idx] + np.log(t))
        return self.ck[idx] - tc

    def at(self, t):
        lo = np.searchsorted(self.key, t, side="left")
        hi = self._idx(t)
        return np.exp(self.log_c[lo]) - np.exp(self.log_c[hi])


def distribution_function(u: ScalarField, t, domain: Domain | None = None, *,
                          deep: bool = False, h: float | None = None,
                          rule: QuadratureRule | None = None):
    """gamma({x in Omega : |u(x)| > t}) for scalar or array t >= 0."""
    d = domain or u.domain
    if d is None:
        raise ValueError("a domain is required")
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValueError("t must be non-negative")
    model = DistributionModel(u, d, rule or _default_rule(d, deep, h))
    out = model(t_arr)
    return out if out.ndim else float(out)


# --------------------------------------------------------------------------
# profiles
# --------------------------------------------------------------------------


def profile_grid(gamma: float, levels: int, decades: float):
    """Edges, midpoints and weights of the level grid on (gamma 10^-decades, gamma].

    Returns (edges, s, ds, y) with edges decreasing from gamma; ``ds`` are
    midpoint weights in y = -log(s/gamma) so that sum f(s) ds integrates
    power laws s^a with a near -1 without bias.
    """
    if levels < 16:
        raise ValueError("levels must be >= 16")
    y_max = decades * math.log(10.0)
    tau = np.linspace(0.0, 1.0, levels + 1)
    y_edges = np.expm1(tau * math.log1p(y_max))
    y_mid = 0.5 * (y_edges[1:] + y_edges[:-1])
    edges = gamma * np.exp(-y_edges)
    s = gamma * np.exp(-y_mid)
    ds = s * np.diff(y_edges)
    return edges, s, ds, y_mid


@dataclass(frozen=True)
class RearrangementProfile:
    """Non-increasing table s -> u*(s) on (0, gamma(Omega)]."""

    edges: np.ndarray
    s: np.ndarray
    ds: np.ndarray
    y: np.ndarray
    values: np.ndarray
    gamma: float
    meta: dict = field(default_factory=dict)
    deviation: float | None = None

    @property
    def decades(self) -> float:
        return float(-math.log10(self.edges[-1] / self.gamma))

    def window(self, decades: float) -> "RearrangementProfile":
        """Sub-profile restricted to s >= gamma 10^-decades."""
        keep = self.y <= decades * math.log(10.0)
        n = int(np.count_nonzero(keep))
        return replace(self, edges=self.edges[: n + 1], s=self.s[keep], ds=self.ds[keep],
                       y=self.y[keep], values=self.values[keep])

    def scaled(self, c: float) -> "RearrangementProfile":
        return replace(self, values=abs(c) * self.values)

    def lp_power(self, p: float) -> float:
        """sum of u*^p ds, the rearranged form of the integral of |u|^p."""
        with np.errstate(over="ignore"):
            return float(np.sum(self.values**p * self.ds))

    def to_csv(self, fh=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["s", "u_star"])
        for si, vi in zip(self.s, self.values):
            w.writerow([repr(float(si)), repr(float(vi))])
        text = buf.getvalue()
        if fh is not None:
            fh.write(text)
        return text


def analytic_profile(u: ScalarField, d: Domain, levels: int = 4000,
                     decades: float = STANDARD_DECADES) -> RearrangementProfile:
    if u.profile is None:
        raise RearrangementError(f"field {u.name!r} has no analytic profile")
    edges, s, ds, y = profile_grid(d.gamma_measure, levels, decades)
    v = u.profile(s, d)
    if v is None:
        raise RearrangementError(f"no analytic profile of {u.name!r} on {d.spec()}")
    return RearrangementProfile(edges, s, ds, y, np.asarray(v, dtype=float), d.gamma_measure,
                                {"levels": levels, "source": "analytic"})


def rearrangement(u: ScalarField, levels: int = 4000, domain: Domain | None = None, *,
                  deep: bool = False, decades: float | None = None, h: float | None = None,
                  rule: QuadratureRule | None = None) -> RearrangementProfile:
    """Measured decreasing rearrangement by inverting the distribution function.

    The level grid reaches ``decades`` below gamma(Omega) (default 12, or
    280 on a deep rule).  If the grid reaches below the mass cut off by the
    truncation while the field grows toward that cut, the profile falls back
    to the analytic one when available and fails otherwise.
    """
    d = domain or u.domain
    if d is None:
        raise ValueError("a domain is required")
    if levels < 16:
        raise ValueError("levels must be >= 16")
    rule = rule or _default_rule(d, deep, h)
    model = DistributionModel(u, d, rule)
    gamma = d.gamma_measure
    if decades is None:
        decades = DEEP_DECADES if rule.deep else STANDARD_DECADES
    edges, s, ds, y = profile_grid(gamma, levels, decades)
    bracketed = edges[-1] >= 1e2 * model.data_floor
    if model.unbounded and not bracketed:
        if u.profile is not None and u.profile(s[:1], d) is not None:
            prof = analytic_profile(u, d, levels, decades)
            return replace(prof, meta={**prof.meta, "fallback": "unbounded"})
        raise RearrangementError(
            f"{u.name!r} grows toward the truncation of {d.spec()} and the level grid "
            f"({decades} decades) reaches below the resolved mass"
        )
    values = model.inverse(s)
    # s runs from gamma(Omega) toward 0, so u* must be non-decreasing along the array
    values = np.maximum.accumulate(values)
    dev = None
    if u.profile is not None:
        exact = u.profile(s, d)
        if exact is not None:
            exact = np.asarray(exact, dtype=float)
            nz = exact != 0
            rel = np.abs(values[nz] - exact[nz]) / np.abs(exact[nz])
            dev = float(np.max(rel)) if rel.size else 0.0
    meta = {"levels": levels, "nodes": rule.size, "deep": rule.deep, "h": rule.h,
            "decades": decades, "source": "measured"}
    return RearrangementProfile(edges, s, ds, y, values, gamma, meta, dev)


def max_relative_deviation(profile: RearrangementProfile, exact: Callable, s_lo: float,
                           s_hi: float) -> float:
    """max |v - exact| / |exact| over grid points in [s_lo, s_hi]."""
    sel = (profile.s >= s_lo) & (profile.s <= s_hi)
    ex = exact(profile.s[sel])
    return float(np.max(np.abs(profile.values[sel] - ex) / np.abs(ex)))


# --------------------------------------------------------------------------
# Zygmund norms
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ZygmundParams:
    p: float
    alpha: float

    def __post_init__(self):
        if not self.p >= 1:
            raise ValueError("Zygmund exponent p must be >= 1")

    @property
    def nontrivial(self) -> bool:
        """The space contains nonzero functions iff p < inf or alpha <= 0."""
        return math.isfinite(self.p) or self.alpha <= 0


@dataclass(frozen=True)
class ZygmundResult:
    """Norm value with the depth-doubling divergence test.

    ``partial`` holds the norm over the top quarter, half and the full
    depth of the level grid; ``growth`` the two relative increments.
    """

    value: float
    verdict: str
    growth: tuple[float, float]
    partial: tuple[float, float, float]
    params: ZygmundParams

    @property
    def finite(self) -> bool:
        return self.verdict == "Finite"


def classify_growth(r1: float, r2: float, threshold: float = DIVERGENCE_THRESHOLD,
                    conv_tol: float = CONVERGENCE_TOL) -> str:
    """Verdict from the relative increments over two depth doublings.

    Both increments at or above ``threshold``: Diverges.  Both within
    ``conv_tol``: Finite.  Increments below the threshold that contract by
    at least a factor 0.6 also count as Finite when the geometric
    extrapolation of the remaining growth stays below the threshold; this
    admits norms that converge like 1/log(1/s).
    """
    if r1 >= threshold and r2 >= threshold:
        return "Diverges"
    if abs(r1) <= conv_tol and abs(r2) <= conv_tol:
        return "Finite"
    if 0 <= r2 < threshold and r1 > 0 and r2 <= 0.6 * r1:
        q = r2 / r1
        if r2 * q / (1.0 - q) <= threshold:
            return "Finite"
    return "Indeterminate"


def _zygmund_value(profile: RearrangementProfile, params: ZygmundParams) -> float:
    weight = (1.0 - np.log(profile.s)) ** params.alpha
    if not math.isfinite(params.p):
        return float(np.max(weight * profile.values)) if profile.s.size else 0.0
    with np.errstate(over="ignore"):
        terms = (weight * profile.values) ** params.p * profile.ds
        return float(np.sum(terms)) ** (1.0 / params.p)


def zygmund_norm(profile: RearrangementProfile, params: ZygmundParams, *,
                 threshold: float = DIVERGENCE_THRESHOLD,
                 conv_tol: float = CONVERGENCE_TOL) -> ZygmundResult:
    """Norm in L^p(log L)^alpha of the profile with a divergence verdict.

    The value is the norm over the whole grid.  It is recomputed over the top
    quarter and half of the depth (in decades); relative increments of at
    least ``threshold`` on both doublings mean Diverges, increments within
    ``conv_tol`` mean Finite.
    """
    if not isinstance(params, ZygmundParams):
        params = ZygmundParams(*params)
    if not params.nontrivial:
        raise ValueError("L^inf(log L)^alpha with alpha > 0 contains only 0")
    full = profile.decades
    parts = tuple(_zygmund_value(profile.window(full * f), params) for f in (0.25, 0.5))
    parts = parts + (_zygmund_value(profile, params),)

    def inc(a, b):
        if a == 0.0:
            return 0.0 if b == 0.0 else math.inf
        return b / a - 1.0

    r1, r2 = inc(parts[0], parts[1]), inc(parts[1], parts[2])
    verdict = classify_growth(r1, r2, threshold, conv_tol)
    return ZygmundResult(parts[2], verdict, (r1, r2), parts, params)


@dataclass(frozen=True)
class InclusionReport:
    strong: ZygmundResult
    weak: ZygmundResult
    consistent: bool


def zygmund_inclusion_check(u, p: float, r: float, alpha: float, beta: float,
                            domain: Domain | None = None, **profile_kwargs) -> InclusionReport:
    """Check that a finite L^p(log L)^alpha norm gives a finite L^r(log L)^beta norm.

    ``u`` may be a field (its profile is measured) or a ready profile.
    """
    if not 1 <= r < p:
        raise ValueError("need 1 <= r < p")
    prof = u if isinstance(u, RearrangementProfile) else rearrangement(
        u, domain=domain, **profile_kwargs)
    strong = zygmund_norm(prof, ZygmundParams(p, alpha))
    weak = zygmund_norm(prof, ZygmundParams(r, beta))
    consistent = (not strong.finite) or weak.finite
    return InclusionReport(strong, weak, consistent)


def lp_norm(u: ScalarField, d: Domain, p: float, **rule_kwargs):
    """Quadrature estimate of the integral of |u|^p dgamma (not the p-th root)."""
    return integrate_interior(d, lambda x: np.abs(u.value(x)) ** p, **rule_kwargs)
