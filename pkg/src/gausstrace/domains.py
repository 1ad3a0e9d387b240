"""Computational domains whose boundary is a finite union of Lipschitz graphs.

Every domain is described by a reference box (one interval per axis) and a
map from the box onto the physical region.  Unbounded sides are cut at
``TRUNCATION_RADIUS`` where the omitted Gaussian mass is below 1e-14; rules
that must follow a singular integrand toward Phi -> 0 may ask for the much
deeper ``DEEP_RADIUS`` on the lower x_N side instead.

Boundary charts are disjoint: each real side of the reference box maps onto
one chart, and sides created by truncation are not part of the boundary.
"""

from __future__ import annotations

import math
import shlex
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .gaussian import gauss_cdf, gauss_density, gauss_mass

__all__ = [
    "TRUNCATION_RADIUS",
    "DEEP_RADIUS",
    "DomainError",
    "GraphProfile",
    "BoundaryChart",
    "Domain",
    "Interval",
    "HalfLine",
    "Rectangle",
    "HalfPlane",
    "GraphStrip",
    "flat_profile",
    "sine_profile",
    "tilt_profile",
    "make_domain",
    "parse_domain_spec",
    "boundary_charts",
]

TRUNCATION_RADIUS = 8.0
# log Phi(-37) ~ -689: the deepest level where Phi^(-1/2) and its derivative
# still fit in binary64.
DEEP_RADIUS = 37.0


class DomainError(ValueError):
    pass


# --------------------------------------------------------------------------
# graph profiles
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GraphProfile:
    """Lipschitz function g with its derivative and a declared constant."""

    name: str
    g: Callable[[np.ndarray], np.ndarray]
    dg: Callable[[np.ndarray], np.ndarray]
    lipschitz: float
    params: dict = field(default_factory=dict)

    def describe(self) -> str:
        extra = " ".join(f"{k}={v!r}" for k, v in self.params.items())
        return f"{self.name} {extra}".strip()


def flat_profile() -> GraphProfile:
    return GraphProfile("flat", lambda x: np.zeros_like(x), lambda x: np.zeros_like(x), 0.0)


def sine_profile(amp: float, freq: float = 1.0) -> GraphProfile:
    return GraphProfile(
        "sine",
        lambda x: amp * np.sin(freq * x),
        lambda x: amp * freq * np.cos(freq * x),
        abs(amp * freq),
        {"amp": amp, "freq": freq},
    )


def tilt_profile(slope: float) -> GraphProfile:
    return GraphProfile(
        "tilt", lambda x: slope * x, lambda x: np.full_like(x, slope), abs(slope), {"slope": slope}
    )


_PROFILES = {"flat": flat_profile, "sine": sine_profile, "tilt": tilt_profile}


def _check_lipschitz(profile: GraphProfile, c: float, d: float, samples: int = 1000) -> None:
    if profile.lipschitz is None or not np.isfinite(profile.lipschitz):
        raise DomainError("graph profile needs a finite declared Lipschitz constant")
    x = np.linspace(c, d, samples)
    gx = np.asarray(profile.g(x), dtype=float)
    slopes = np.abs(np.diff(gx)) / np.diff(x)
    bound = profile.lipschitz * (1.0 + 1e-9) + 1e-12
    if np.any(slopes > bound) or np.any(np.abs(profile.dg(x)) > bound):
        raise DomainError(
            f"profile {profile.name!r} violates its declared Lipschitz bound {profile.lipschitz}"
        )


# --------------------------------------------------------------------------
# boundary charts
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BoundaryChart:
    """One piece of the boundary, parameterised by t in [t0, t1].

    Point charts (1D domains) have ``t0 == t1`` and unit measure.
    """

    index: int
    t0: float
    t1: float
    point: Callable[[np.ndarray], np.ndarray]
    speed: Callable[[np.ndarray], np.ndarray]
    normal: Callable[[np.ndarray], np.ndarray]
    is_point: bool = False

    def weight(self, t):
        """Gaussian weight phi restricted to the chart."""
        pts = self.point(np.atleast_1d(np.asarray(t, dtype=float)))
        return gauss_density(pts, pts.shape[1])

    def nodes(self, order: int = 8, h: float = 0.25):
        """Quadrature nodes (points, normals, weights) carrying phi dH^{N-1}."""
        if self.is_point:
            t = np.zeros(1)
            return self.point(t), self.normal(t), self.weight(t)
        t, w = _composite_gl(self.t0, self.t1, order, h)
        pts = self.point(t)
        wts = w * self.speed(t) * gauss_density(pts, pts.shape[1])
        return pts, self.normal(t), wts

    def weighted_length(self, order: int = 8, h: float = 0.25) -> float:
        return float(np.sum(self.nodes(order, h)[2]))


def _composite_gl(a: float, b: float, order: int, h: float):
    n_cells = max(1, int(math.ceil((b - a) / h)))
    edges = np.linspace(a, b, n_cells + 1)
    x, w = np.polynomial.legendre.leggauss(order)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    t = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    wt = (half[:, None] * w[None, :]).ravel()
    return t, wt


def _const(value, dim):
    value = np.asarray(value, dtype=float)

    def fn(t):
        t = np.atleast_1d(t)
        return np.broadcast_to(value, (t.size, dim)).copy()

    return fn


def _ones(t):
    return np.ones_like(np.atleast_1d(t), dtype=float)


# --------------------------------------------------------------------------
# domains
# --------------------------------------------------------------------------


class Domain:
    """Common interface of the domain catalog.

    Subclasses define ``dim``, ``kind``, ``_box`` (reference intervals with
    the deep flag resolved), ``_real_sides`` and, for curved domains,
    ``map``/``jacobian``.
    """

    dim: int
    kind: str
    truncation_radius: float = TRUNCATION_RADIUS
    gamma_measure: float
    #: axis (in reference coordinates) whose lower side may be followed deep
    deep_axis: int | None = None

    def box(self, deep: bool = False) -> list[tuple[float, float]]:
        raise NotImplementedError

    def extent(self) -> list[tuple[float, float]]:
        """Reference intervals before truncation (may contain infinities)."""
        raise NotImplementedError

    def omitted_mass(self, deep: bool = False) -> float:
        """Gaussian mass of the domain outside the truncated box.

        Exact in 1D, a union bound in 2D; graph strips are never truncated.
        """
        if self.kind == "graphstrip":
            return 0.0
        frac = 0.0
        for (lo, hi), (elo, ehi) in zip(self.box(deep), self.extent()):
            frac += (gauss_mass(elo, lo) + gauss_mass(hi, ehi)) / gauss_mass(elo, ehi)
        return float(self.gamma_measure * frac)

    def map(self, xi: np.ndarray) -> np.ndarray:
        return xi

    def jacobian(self, xi: np.ndarray) -> np.ndarray:
        n = xi.shape[0]
        return np.broadcast_to(np.eye(self.dim), (n, self.dim, self.dim)).copy()

    def jacobian_det(self, xi: np.ndarray) -> np.ndarray:
        return np.ones(xi.shape[0])

    def boundary_charts(self) -> list[BoundaryChart]:
        raise NotImplementedError

    def spec(self) -> str:
        raise NotImplementedError

    def boundary_measure(self, order: int = 8, h: float = 0.25) -> float:
        return float(sum(c.weighted_length(order, h) for c in self.boundary_charts()))

    def __repr__(self) -> str:
        return f"<{type(self).__name__} {self.spec()}>"


def _clip(lo, hi, r):
    return max(lo, -r), min(hi, r)


class Interval(Domain):
    """(a, b); a lower end below -8 lets deep rules follow the lower side to -37."""

    dim = 1
    kind = "interval"

    def __init__(self, a: float, b: float):
        if not (np.isfinite(a) and np.isfinite(b)):
            raise DomainError("interval ends must be finite (use HalfLine for (-inf, w))")
        if not a < b:
            raise DomainError(f"empty interval ({a}, {b})")
        self.a, self.b = float(a), float(b)
        self.gamma_measure = float(gauss_mass(self.a, self.b))
        # a lower end beyond the truncation radius may be followed deep
        self.deep_axis = 0 if self.a < -self.truncation_radius else None

    def box(self, deep=False):
        lo, hi = _clip(self.a, self.b, self.truncation_radius)
        if deep and self.deep_axis is not None:
            lo = max(self.a, -DEEP_RADIUS)
        return [(lo, hi)]

    def extent(self):
        return [(self.a, self.b)]

    def boundary_charts(self):
        return [
            BoundaryChart(0, 0.0, 0.0, _const([self.a], 1), _ones, _const([-1.0], 1), True),
            BoundaryChart(1, 0.0, 0.0, _const([self.b], 1), _ones, _const([1.0], 1), True),
        ]

    def spec(self):
        return f"kind=interval a={self.a!r} b={self.b!r}"


class HalfLine(Domain):
    """(-inf, omega) on the real line."""

    dim = 1
    kind = "halfline"
    deep_axis = 0

    def __init__(self, omega: float = 0.0):
        if not abs(omega) <= 6.0:
            raise DomainError("halfline omega must lie in [-6, 6]")
        self.omega = float(omega)
        self.gamma_measure = float(gauss_cdf(self.omega))

    def box(self, deep=False):
        lo = -DEEP_RADIUS if deep else -self.truncation_radius
        return [(lo, self.omega)]

    def extent(self):
        return [(-math.inf, self.omega)]

    def boundary_charts(self):
        return [BoundaryChart(0, 0.0, 0.0, _const([self.omega], 1), _ones, _const([1.0], 1), True)]

    def spec(self):
        return f"kind=halfline omega={self.omega!r}"


class Rectangle(Domain):
    dim = 2
    kind = "rectangle"

    def __init__(self, a: float, b: float, c: float, d: float):
        vals = (a, b, c, d)
        if not all(np.isfinite(v) for v in vals):
            raise DomainError("rectangle sides must be finite")
        if not (a < b and c < d):
            raise DomainError("empty rectangle")
        self.a, self.b, self.c, self.d = map(float, vals)
        self.gamma_measure = float(gauss_mass(self.a, self.b) * gauss_mass(self.c, self.d))

    def box(self, deep=False):
        r = self.truncation_radius
        return [_clip(self.a, self.b, r), _clip(self.c, self.d, r)]

    def extent(self):
        return [(self.a, self.b), (self.c, self.d)]

    def boundary_charts(self):
        a, b, c, d = self.a, self.b, self.c, self.d

        def horiz(y):
            return lambda t: np.column_stack([np.atleast_1d(t), np.full(np.size(t), y)])

        def vert(x):
            return lambda t: np.column_stack([np.full(np.size(t), x), np.atleast_1d(t)])

        return [
            BoundaryChart(0, a, b, horiz(c), _ones, _const([0.0, -1.0], 2)),
            BoundaryChart(1, c, d, vert(b), _ones, _const([1.0, 0.0], 2)),
            BoundaryChart(2, a, b, horiz(d), _ones, _const([0.0, 1.0], 2)),
            BoundaryChart(3, c, d, vert(a), _ones, _const([-1.0, 0.0], 2)),
        ]

    def spec(self):
        return f"kind=rectangle a={self.a!r} b={self.b!r} c={self.c!r} d={self.d!r}"


class HalfPlane(Domain):
    """{x_2 < omega} in the plane."""

    dim = 2
    kind = "halfplane"
    deep_axis = 1

    def __init__(self, omega: float = 0.0):
        if not abs(omega) <= 6.0:
            raise DomainError("halfplane omega must lie in [-6, 6]")
        self.omega = float(omega)
        self.gamma_measure = float(gauss_cdf(self.omega))

    def box(self, deep=False):
        r = self.truncation_radius
        lo = -DEEP_RADIUS if deep else -r
        return [(-r, r), (lo, self.omega)]

    def extent(self):
        return [(-math.inf, math.inf), (-math.inf, self.omega)]

    def boundary_charts(self):
        w = self.omega
        r = self.truncation_radius
        return [
            BoundaryChart(
                0, -r, r,
                lambda t: np.column_stack([np.atleast_1d(t), np.full(np.size(t), w)]),
                _ones, _const([0.0, 1.0], 2),
            )
        ]

    def spec(self):
        return f"kind=halfplane omega={self.omega!r}"


class GraphStrip(Domain):
    """{(x1, x2): c < x1 < d, g(x1) < x2 < g(x1) + beta}."""

    dim = 2
    kind = "graphstrip"

    def __init__(self, profile: GraphProfile | None = None, c: float = -1.0, d: float = 1.0,
                 beta: float = 1.0):
        profile = profile or flat_profile()
        if not (np.isfinite(c) and np.isfinite(d) and c < d):
            raise DomainError("graph strip needs finite c < d")
        if not beta > 0:
            raise DomainError("graph strip thickness beta must be positive")
        _check_lipschitz(profile, c, d)
        self.profile = profile
        self.c, self.d, self.beta = float(c), float(d), float(beta)
        self.gamma_measure = self._measure()

    def _measure(self) -> float:
        x, w = _composite_gl(self.c, self.d, 10, 0.05)
        g = self.profile.g(x)
        return float(np.sum(w * gauss_density(x) * gauss_mass(g, g + self.beta)))

    def box(self, deep=False):
        return [(self.c, self.d), (0.0, 1.0)]

    def extent(self):
        return [(self.c, self.d), (0.0, 1.0)]

    def map(self, xi):
        x1 = xi[:, 0]
        return np.column_stack([x1, self.profile.g(x1) + self.beta * xi[:, 1]])

    def jacobian(self, xi):
        n = xi.shape[0]
        jac = np.zeros((n, 2, 2))
        jac[:, 0, 0] = 1.0
        jac[:, 1, 0] = self.profile.dg(xi[:, 0])
        jac[:, 1, 1] = self.beta
        return jac

    def jacobian_det(self, xi):
        return np.full(xi.shape[0], self.beta)

    def boundary_charts(self):
        g, dg, beta = self.profile.g, self.profile.dg, self.beta
        c, d = self.c, self.d

        def graph(shift):
            return lambda t: np.column_stack([np.atleast_1d(t), g(np.atleast_1d(t)) + shift])

        def speed(t):
            return np.sqrt(1.0 + dg(np.atleast_1d(t)) ** 2)

        def n_bottom(t):
            s = dg(np.atleast_1d(t))
            return np.column_stack([s, -np.ones_like(s)]) / np.sqrt(1.0 + s * s)[:, None]

        def n_top(t):
            return -n_bottom(t)

        def side(x):
            gx = float(g(np.array([x]))[0])
            return lambda t: np.column_stack([np.full(np.size(t), x), gx + beta * np.atleast_1d(t)])

        beta_speed = lambda t: np.full(np.size(t), beta)  # noqa: E731
        return [
            BoundaryChart(0, c, d, graph(0.0), speed, n_bottom),
            BoundaryChart(1, 0.0, 1.0, side(d), beta_speed, _const([1.0, 0.0], 2)),
            BoundaryChart(2, c, d, graph(beta), speed, n_top),
            BoundaryChart(3, 0.0, 1.0, side(c), beta_speed, _const([-1.0, 0.0], 2)),
        ]

    def spec(self):
        return (f"kind=graphstrip profile={self.profile.name} "
                + "".join(f"{k}={v!r} " for k, v in self.profile.params.items())
                + f"c={self.c!r} d={self.d!r} beta={self.beta!r}")


def boundary_charts(d: Domain) -> list[BoundaryChart]:
    return d.boundary_charts()


# --------------------------------------------------------------------------
# construction from key/value specs
# --------------------------------------------------------------------------


def parse_domain_spec(text: str) -> dict:
    """Parse ``"kind=halfplane omega=0.0"`` into a dict of strings."""
    out = {}
    for token in shlex.split(text):
        if "=" not in token:
            raise DomainError(f"expected key=value, got {token!r}")
        key, value = token.split("=", 1)
        out[key.strip().lower()] = value.strip()
    return out


def _num(spec, key, default=None):
    if key not in spec:
        if default is None:
            raise DomainError(f"domain spec is missing {key!r}")
        return float(default)
    try:
        return float(spec[key])
    except ValueError as exc:
        raise DomainError(f"{key}={spec[key]!r} is not a number") from exc


def make_domain(spec) -> Domain:
    """Build a catalog domain from a dict or a ``key=value`` string."""
    if isinstance(spec, Domain):
        return spec
    if isinstance(spec, str):
        spec = parse_domain_spec(spec)
    spec = {k.lower(): v for k, v in spec.items()}
    kind = str(spec.get("kind", "")).lower()
    if kind == "interval":
        return Interval(_num(spec, "a"), _num(spec, "b"))
    if kind == "halfline":
        return HalfLine(_num(spec, "omega", 0.0))
    if kind == "rectangle":
        return Rectangle(_num(spec, "a"), _num(spec, "b"), _num(spec, "c"), _num(spec, "d"))
    if kind == "halfplane":
        return HalfPlane(_num(spec, "omega", 0.0))
    if kind == "graphstrip":
        name = str(spec.get("profile", "flat")).lower()
        if name not in _PROFILES:
            raise DomainError(f"unknown graph profile {name!r}")
        if name == "flat":
            prof = flat_profile()
        elif name == "sine":
            prof = sine_profile(_num(spec, "amp"), _num(spec, "freq", 1.0))
        else:
            prof = tilt_profile(_num(spec, "slope"))
        return GraphStrip(prof, _num(spec, "c", -1.0), _num(spec, "d", 1.0), _num(spec, "beta", 1.0))
    raise DomainError(f"unknown domain kind {kind!r}")

