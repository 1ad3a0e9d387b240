"""Gaussian-weighted Neumann, oscillator and Steklov problems on catalog domains.

Discretisation: P1 elements on a structured mesh of the domain's reference
box (split into triangles in 2D), pushed forward by the domain map.  Each
element carries one weight, its measure times phi averaged over the edge
midpoints, so the stiffness matrix is a sum of positive multiples of
positive semidefinite element matrices.  The stiffness is stored in edge
(incidence) form, ``A = D^T diag(c) D`` with ``D 1 = 0``, which makes
``A 1 = 0`` exact and ``A`` symmetric bit for bit.  Masses are lumped,
``m_i = int phi psi_i``, integrated to machine precision so that
``sum m_i = gamma(Omega)`` up to the truncation.

The weak forms are

* Neumann:    int grad u . grad v phi = int f v phi + int_bdry g v phi
* oscillator: int grad u . grad v phi = lambda int u v phi   (MassGamma)
* Steklov:    int grad u . grad v phi = lambda int_bdry u v phi
* best trace: int (grad u . grad v + u v) phi = mu int_bdry u v phi
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import optimize

from .domains import Domain, make_domain
from .gaussian import gauss_density

__all__ = [
    "MAX_UNKNOWNS",
    "MeshError",
    "SolverError",
    "WeightedMesh",
    "assemble",
    "NeumannSolution",
    "Incompatible",
    "solve_neumann",
    "solve_nonhomogeneous_neumann",
    "EigenSolution",
    "oscillator_spectrum",
    "steklov_spectrum",
    "rayleigh_minimize",
    "oscillator_rayleigh",
    "steklov_rayleigh",
    "RayleighResult",
    "PoincareResult",
    "poincare_constant",
    "TraceConstant",
    "best_trace_constant",
    "dense_trace_constant",
]

MAX_UNKNOWNS = 2_000_000
WEIGHTINGS = ("MassGamma", "MassLebesgueWeighted")
_GL_X, _GL_W = np.polynomial.legendre.leggauss(6)


class MeshError(ValueError):
    pass


class SolverError(RuntimeError):
    pass


def _triangle_rule(order: int = 6):
    """Collapsed Gauss-Legendre rule on the unit triangle {x, y >= 0, x + y <= 1}."""
    x, w = np.polynomial.legendre.leggauss(order)
    t = 0.5 * (x + 1.0)
    wt = 0.5 * w
    a, b = np.meshgrid(t, t, indexing="ij")
    wa, wb = np.meshgrid(wt, wt, indexing="ij")
    px = a.ravel()
    py = (b * (1.0 - a)).ravel()
    pw = (wa * wb * (1.0 - a)).ravel()
    return px, py, pw


@dataclass
class WeightedMesh:
    """P1 mesh with Gaussian-weighted stiffness, lumped masses and boundary masses.

    ``grad`` maps nodal values to per-element gradients (rows grouped by
    element, ``dim`` rows each) and ``elem_weight`` is each element's weight,
    so that ``u^T A u = sum_T w_T |grad_T u|^2``.  ``load`` applied to
    values at ``load_points`` gives the consistent load int f psi_i phi;
    ``boundary_load`` does the same on the boundary.  Lumped masses are the
    load of f = 1.
    """

    domain: Domain
    h: float
    nodes: np.ndarray
    cells: np.ndarray
    lebesgue_mass: np.ndarray
    edges: np.ndarray
    edge_weight: np.ndarray
    grad: sp.csr_matrix = field(repr=False)
    elem_weight: np.ndarray
    load_points: np.ndarray = field(repr=False)
    load: sp.csr_matrix = field(repr=False)
    boundary_points: np.ndarray = field(repr=False)
    boundary_load: sp.csr_matrix = field(repr=False)

    def __post_init__(self):
        self.mass = np.asarray(self.load @ np.ones(self.load.shape[1]))
        bmass = np.asarray(self.boundary_load @ np.ones(self.boundary_load.shape[1]))
        self.boundary = np.flatnonzero(bmass > 0)
        self.boundary_weight = bmass[self.boundary]
        m = len(self.edges)
        rows = np.repeat(np.arange(m), 2)
        cols = self.edges.ravel()
        vals = np.tile([1.0, -1.0], m)
        self.incidence = sp.csr_matrix((vals, (rows, cols)), shape=(m, self.size))
        d = self.incidence
        self.stiffness = (d.T @ sp.diags(self.edge_weight) @ d).tocsr()

    @property
    def size(self) -> int:
        return self.nodes.shape[0]

    @property
    def dim(self) -> int:
        return self.nodes.shape[1]

    def apply_stiffness(self, v: np.ndarray) -> np.ndarray:
        """A v in incidence form; exactly zero on constants."""
        return self.incidence.T @ (self.edge_weight * (self.incidence @ v))

    def boundary_mass_vector(self) -> np.ndarray:
        b = np.zeros(self.size)
        np.add.at(b, self.boundary, self.boundary_weight)
        return b

    def integrate(self, f) -> float:
        """int f dgamma over the meshed domain with the load quadrature."""
        return float(np.sum(self.load @ _values(f, self.load_points)))

    def energy(self, u: np.ndarray) -> float:
        return float(u @ self.apply_stiffness(u))

    def grad_lp_power(self, u: np.ndarray, p: float) -> float:
        g = (self.grad @ u).reshape(-1, self.dim)
        return float(np.sum(self.elem_weight * np.linalg.norm(g, axis=1) ** p))

    def lp_power(self, u: np.ndarray, p: float) -> float:
        return float(np.sum(self.mass * np.abs(u) ** p))

    def boundary_lp_power(self, u: np.ndarray, p: float) -> float:
        return float(np.sum(self.boundary_weight * np.abs(u[self.boundary]) ** p))

    def to_csv(self, path, values: dict | None = None) -> None:
        """Node coordinates plus optional named nodal value columns."""
        values = values or {}
        names = [f"x{k + 1}" for k in range(self.dim)] + list(values)
        cols = [self.nodes[:, k] for k in range(self.dim)] + [np.asarray(v) for v in values.values()]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(names)
            for row in zip(*cols):
                w.writerow([repr(float(x)) for x in row])


# --------------------------------------------------------------------------
# assembly
# --------------------------------------------------------------------------


def _axis_counts(d: Domain, box, h: float):
    counts = []
    for k, (lo, hi) in enumerate(box):
        length = hi - lo
        if d.kind == "graphstrip" and k == 1:
            length = d.beta
        counts.append(max(1, int(math.ceil(length / h - 1e-9))))
    return counts


def _physical_sides(d: Domain, box):
    """(axis, 0 for lower / 1 for upper) for every box side that is part of the boundary."""
    sides = []
    for k, ((lo, hi), (elo, ehi)) in enumerate(zip(box, d.extent())):
        if lo == elo:
            sides.append((k, 0))
        if hi == ehi:
            sides.append((k, 1))
    return sides


def assemble(d, h: float) -> WeightedMesh:
    """Build the weighted P1 system on the (truncated) domain with mesh size h."""
    d = make_domain(d)
    if not h > 0:
        raise MeshError("mesh size must be positive")
    box = d.box(False)
    counts = _axis_counts(d, box, h)
    n_nodes = int(np.prod([c + 1 for c in counts]))
    if n_nodes > MAX_UNKNOWNS:
        raise MeshError(f"mesh size {h} gives {n_nodes} unknowns (limit {MAX_UNKNOWNS})")
    if d.dim == 1:
        return _assemble_1d(d, box[0], counts[0], h)
    return _assemble_2d(d, box, counts, h)


def _load_matrix(n_nodes, cell_nodes, shapes, weights):
    """Sparse L with L[i, q] = w_q psi_i(q), so that L f(points) = int f psi_i phi.

    ``cell_nodes`` is (cells, k), ``shapes`` (k, q) and ``weights`` (cells, q).
    """
    n_cells, k = cell_nodes.shape
    nq = shapes.shape[1]
    qidx = np.arange(n_cells * nq).reshape(n_cells, nq)
    rows = np.repeat(cell_nodes[:, :, None], nq, axis=2)
    cols = np.repeat(qidx[:, None, :], k, axis=1)
    vals = weights[:, None, :] * shapes[None, :, :]
    return sp.csr_matrix((vals.ravel(), (rows.ravel(), cols.ravel())),
                         shape=(n_nodes, n_cells * nq))


def _assemble_1d(d, span, n, h):
    lo, hi = span
    x = np.linspace(lo, hi, n + 1)
    cells = np.column_stack([np.arange(n), np.arange(1, n + 1)])
    dx = np.diff(x)
    mid = 0.5 * (x[1:] + x[:-1])
    elem_w = dx * gauss_density(mid)
    edge_w = elem_w / dx**2
    # load quadrature: six-point Gauss per element
    t = 0.5 * (_GL_X + 1.0)
    q = x[:-1, None] + dx[:, None] * t[None, :]
    wq = 0.5 * dx[:, None] * _GL_W[None, :] * gauss_density(q)
    load = _load_matrix(n + 1, cells, np.stack([1.0 - t, t]), wq)
    leb = np.zeros(n + 1)
    np.add.at(leb, cells[:, 0], 0.5 * dx)
    np.add.at(leb, cells[:, 1], 0.5 * dx)
    bidx = [0 if side == 0 else n for _, side in _physical_sides(d, [span])]
    bload = sp.csr_matrix((np.atleast_1d(gauss_density(x[bidx])), (bidx, np.arange(len(bidx)))),
                          shape=(n + 1, len(bidx)))
    rows = np.repeat(np.arange(n), 2)
    vals = np.column_stack([-1.0 / dx, 1.0 / dx]).ravel()
    grad = sp.csr_matrix((vals, (rows, cells.ravel())), shape=(n, n + 1))
    return WeightedMesh(d, h, x[:, None], cells, leb, cells.copy(), edge_w, grad, elem_w,
                        q.reshape(-1, 1), load, x[bidx][:, None], bload)


def _assemble_2d(d, box, counts, h):
    (x0, x1), (y0, y1) = box
    nx, ny = counts
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    ref = np.column_stack([X.ravel(), Y.ravel()])
    nodes = d.map(ref)
    n_nodes = nodes.shape[0]

    def nid(i, j):
        return i * (ny + 1) + j

    i, j = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    i, j = i.ravel(), j.ravel()
    v00, v10, v11, v01 = nid(i, j), nid(i + 1, j), nid(i + 1, j + 1), nid(i, j + 1)
    cells = np.vstack([np.column_stack([v00, v10, v11]), np.column_stack([v00, v11, v01])])

    # reference geometry of each triangle
    p = ref[cells]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    area_ref = 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    jref = np.stack([e1, e2], axis=2)  # columns e1, e2
    jref_inv_t = np.linalg.inv(jref).transpose(0, 2, 1)
    gref = np.einsum("tij,kj->tki", jref_inv_t, np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]]))

    # push forward with the domain map's Jacobian at the centroid
    cen = p.mean(axis=1)
    jf = d.jacobian(cen)
    det = np.abs(np.linalg.det(jf))
    jf_inv_t = np.linalg.inv(jf).transpose(0, 2, 1)
    g = np.einsum("tij,tkj->tki", jf_inv_t, gref)  # (T, 3, 2) physical gradients
    mids = np.concatenate([0.5 * (p[:, a] + p[:, b]) for a, b in ((0, 1), (1, 2), (0, 2))])
    phi_mid = gauss_density(d.map(mids), 2).reshape(3, -1).mean(axis=0)
    elem_w = area_ref * det * phi_mid

    # edge form of the element matrices
    pairs = ((0, 1), (1, 2), (0, 2))
    e_i = np.concatenate([cells[:, a] for a, b in pairs])
    e_j = np.concatenate([cells[:, b] for a, b in pairs])
    e_c = np.concatenate([-elem_w * np.einsum("tk,tk->t", g[:, a], g[:, b]) for a, b in pairs])
    key = np.minimum(e_i, e_j) * n_nodes + np.maximum(e_i, e_j)
    uniq, inv = np.unique(key, return_inverse=True)
    edge_w = np.zeros(len(uniq))
    np.add.at(edge_w, inv, e_c)
    edges = np.column_stack([uniq // n_nodes, uniq % n_nodes])

    # load quadrature: collapsed Gauss rule in reference coordinates
    tx, ty, tw = _triangle_rule()
    qref = p[:, 0, None, :] + tx[None, :, None] * e1[:, None, :] + ty[None, :, None] * e2[:, None, :]
    flat = qref.reshape(-1, 2)
    qphys = d.map(flat)
    jdet = np.abs(d.jacobian_det(flat)).reshape(qref.shape[:2])
    base = 2.0 * area_ref[:, None] * tw[None, :] * jdet
    wq = base * gauss_density(qphys, 2).reshape(qref.shape[:2])
    shape = np.stack([1.0 - tx - ty, tx, ty])  # (3, q)
    load = _load_matrix(n_nodes, cells, shape, wq)
    leb = np.asarray(_load_matrix(n_nodes, cells, shape, base) @ np.ones(base.size))

    bpts, bload = _boundary_load_2d(d, box, xs, ys, nid, n_nodes)

    t = np.arange(len(cells))
    rows = np.repeat(np.concatenate([2 * t, 2 * t + 1]), 3)
    cols = np.tile(cells.ravel(), 2)
    vals = np.concatenate([g[:, :, 0].ravel(), g[:, :, 1].ravel()])
    grad = sp.csr_matrix((vals, (rows, cols)), shape=(2 * len(cells), n_nodes))
    return WeightedMesh(d, h, nodes, cells, leb, edges, edge_w, grad, elem_w,
                        qphys, load, bpts, bload)


def _boundary_load_2d(d, box, xs, ys, nid, n_nodes):
    """Boundary quadrature points and the matrix of int_bdry f psi_i phi dS."""
    pts, mats = [], []
    t01 = 0.5 * (_GL_X + 1.0)
    for axis, side in _physical_sides(d, box):
        if axis == 0:
            fixed, t = box[0][side], ys
            idx = np.array([nid(0 if side == 0 else len(xs) - 1, j) for j in range(len(ys))])
        else:
            fixed, t = box[1][side], xs
            idx = np.array([nid(i, 0 if side == 0 else len(ys) - 1) for i in range(len(xs))])
        a, b = t[:-1], t[1:]
        q = a[:, None] + (b - a)[:, None] * t01[None, :]
        ref = np.empty((q.size, 2))
        ref[:, axis] = fixed
        ref[:, 1 - axis] = q.ravel()
        speed = np.linalg.norm(d.jacobian(ref)[:, :, 1 - axis], axis=1)
        phys = d.map(ref)
        wq = (0.5 * (b - a)[:, None] * _GL_W[None, :]).ravel() * speed * gauss_density(phys, 2)
        seg = np.column_stack([idx[:-1], idx[1:]])
        mats.append(_load_matrix(n_nodes, seg, np.stack([1.0 - t01, t01]), wq.reshape(q.shape)))
        pts.append(phys)
    if not pts:
        return np.zeros((0, 2)), sp.csr_matrix((n_nodes, 0))
    return np.vstack(pts), sp.hstack(mats).tocsr()


# --------------------------------------------------------------------------
# Neumann problems
# --------------------------------------------------------------------------


@dataclass
class NeumannSolution:
    u: np.ndarray
    mean: float
    residual: float
    defect: float
    multiplier: float

    solvable = True


@dataclass
class Incompatible:
    """The data violate the compatibility condition; carries the measured defect."""

    defect: float
    eps: float

    solvable = False


def _values(f, x):
    if f is None:
        return np.zeros(x.shape[0])
    if np.isscalar(f):
        return np.full(x.shape[0], float(f))
    fn = getattr(f, "value", f)
    return np.asarray(fn(x), dtype=float).reshape(x.shape[0])


def _bordered_solve(mesh: WeightedMesh, load: np.ndarray):
    """Solve A u + mu m = load, m^T u = 0 (mean-zero normalisation)."""
    n = mesh.size
    m = mesh.mass
    k = sp.bmat([[mesh.stiffness, sp.csc_matrix(m[:, None])],
                 [sp.csr_matrix(m[None, :]), None]], format="csc")
    rhs = np.concatenate([load, [0.0]])
    sol = spla.splu(k).solve(rhs)
    u, mu = sol[:n], sol[n]
    # one step of iterative refinement
    r = rhs - k @ sol
    sol = sol + spla.splu(k).solve(r)
    u, mu = sol[:n], sol[n]
    res = mesh.stiffness @ u + mu * m - load
    scale = max(np.linalg.norm(load), 1e-300)
    return u, mu, float(np.linalg.norm(res) / scale)


def _neumann(mesh, f, g, eps):
    fq = _values(f, mesh.load_points)
    load = np.asarray(mesh.load @ fq)
    if g is not None and mesh.boundary_points.shape[0]:
        load = load + np.asarray(mesh.boundary_load @ _values(g, mesh.boundary_points))
    defect = float(np.sum(load))
    norm_f = math.sqrt(float(np.sum(mesh.load @ fq**2)))
    eps = 1e-8 * (norm_f + 1.0) if eps is None else eps
    if abs(defect) > eps:
        return Incompatible(defect, eps)
    u, mu, res = _bordered_solve(mesh, load)
    if not np.all(np.isfinite(u)):
        raise SolverError("Neumann solve failed")
    return NeumannSolution(u, float(mesh.mass @ u), res, defect, float(mu))


def solve_neumann(mesh: WeightedMesh, f, *, eps: float | None = None):
    """-(u_i phi)_i = f phi in Omega, du/dnu = 0 on the boundary.

    Solvable iff int f dgamma = 0 (checked against eps, by default
    1e-8 (||f||_{L^2(gamma)} + 1)).  Returns :class:`Incompatible` when the
    condition fails, otherwise the solution with int u dgamma = 0.
    """
    return _neumann(mesh, f, None, eps)


def solve_nonhomogeneous_neumann(mesh: WeightedMesh, f, g, *, eps: float | None = None):
    """As :func:`solve_neumann` with du/dnu = g on the boundary.

    Solvable iff int f dgamma + int_bdry g phi dS = 0.
    """
    return _neumann(mesh, f, g, eps)


# --------------------------------------------------------------------------
# eigenproblems
# --------------------------------------------------------------------------


@dataclass
class EigenSolution:
    """Eigenpairs sorted ascending; vectors are normalised in the problem's mass."""

    problem: str
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    residuals: np.ndarray
    mesh: WeightedMesh = field(repr=False)
    weighting: str | None = None

    def to_dict(self) -> dict:
        return {"problem": self.problem, "domain": self.mesh.domain.spec(), "h": self.mesh.h,
                "weighting": self.weighting, "eigenvalues": [float(v) for v in self.eigenvalues],
                "residuals": [float(v) for v in self.residuals]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_csv(self, path) -> None:
        self.mesh.to_csv(path, {f"v{k + 1}": self.eigenvectors[:, k]
                                for k in range(self.eigenvectors.shape[1])})


def _mass(mesh: WeightedMesh, weighting: str) -> np.ndarray:
    if weighting not in WEIGHTINGS:
        raise ValueError(f"weighting must be one of {WEIGHTINGS}")
    return mesh.mass if weighting == "MassGamma" else mesh.lebesgue_mass


def _residuals(mesh, vecs, vals, bvec):
    out = []
    for k in range(vecs.shape[1]):
        v = vecs[:, k]
        r = mesh.apply_stiffness(v) - vals[k] * bvec * v
        out.append(np.linalg.norm(r) / np.linalg.norm(v))
    return np.array(out)


def oscillator_spectrum(mesh: WeightedMesh, k: int = 4, weighting: str = "MassGamma") -> EigenSolution:
    """First k eigenpairs of A v = lambda M v (Neumann conditions on every side)."""
    if k < 2:
        raise ValueError("k must be >= 2")
    k = min(k, mesh.size)
    m = _mass(mesh, weighting)
    if mesh.dim == 1:
        a = mesh.stiffness
        s = 1.0 / np.sqrt(m)
        diag = a.diagonal() * s * s
        off = a.diagonal(1) * s[:-1] * s[1:]
        vals, w = sla.eigh_tridiagonal(diag, off, select="i", select_range=(0, k - 1))
        vecs = w * s[:, None]
    else:
        rng = np.random.default_rng(0)
        shift = 0.1 * float(np.min(mesh.stiffness.diagonal() / m))
        try:
            vals, vecs = spla.eigsh(mesh.stiffness, k=k, M=sp.diags(m), sigma=-shift, which="LM",
                                    v0=rng.standard_normal(mesh.size), tol=0)
        except spla.ArpackNoConvergence as exc:
            raise SolverError("eigensolver did not converge") from exc
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
    vecs = vecs / np.sqrt(np.sum(m[:, None] * vecs**2, axis=0))
    vecs = _fix_sign(vecs)
    return EigenSolution("oscillator", vals, vecs, _residuals(mesh, vecs, vals, m), mesh, weighting)


def _fix_sign(vecs):
    idx = np.argmax(np.abs(vecs), axis=0)
    sgn = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    return vecs * np.where(sgn == 0, 1.0, sgn)


class _Schur:
    """Boundary Schur complement of K = A + shift M (the K-harmonic extension)."""

    def __init__(self, mesh: WeightedMesh, shift: float = 0.0):
        self.mesh = mesh
        n = mesh.size
        self.k = (mesh.stiffness + shift * sp.diags(mesh.mass)).tocsc()
        self.b_idx = mesh.boundary
        mask = np.ones(n, dtype=bool)
        mask[self.b_idx] = False
        self.i_idx = np.flatnonzero(mask)
        self.k_ii = self.k[self.i_idx][:, self.i_idx].tocsc()
        self.k_ib = self.k[self.i_idx][:, self.b_idx].tocsc()
        self.k_bb = self.k[self.b_idx][:, self.b_idx].toarray()
        self.lu = spla.splu(self.k_ii) if len(self.i_idx) else None

    def harmonic(self, vb: np.ndarray) -> np.ndarray:
        """Extend boundary values by solving K_ii v_i = -K_ib v_b."""
        vb = np.atleast_2d(vb.T).T
        out = np.zeros((self.mesh.size, vb.shape[1]))
        out[self.b_idx] = vb
        if self.lu is not None:
            out[self.i_idx] = -self.lu.solve(np.asarray(self.k_ib @ vb))
        return out

    def matvec(self, vb: np.ndarray) -> np.ndarray:
        out = self.k_bb @ vb
        if self.lu is not None:
            out = out - self.k_ib.T @ self.lu.solve(self.k_ib @ vb)
        return out

    def dense(self) -> np.ndarray:
        s = self.k_bb.copy()
        if self.lu is not None:
            x = self.lu.solve(self.k_ib.toarray())
            s -= np.asarray(self.k_ib.T @ x)
        return 0.5 * (s + s.T)


def _boundary_eig(mesh: WeightedMesh, shift: float, k: int):
    if len(mesh.boundary) < 1:
        raise ValueError("domain has no boundary")
    schur = _Schur(mesh, shift)
    s = schur.dense()
    bw = mesh.boundary_weight
    k = min(k, len(bw))
    vals, wb = sla.eigh(s, np.diag(bw), subset_by_index=(0, k - 1))
    vecs = schur.harmonic(wb)
    return vals, vecs, schur


def steklov_spectrum(mesh: WeightedMesh, k: int = 4) -> EigenSolution:
    """First k eigenpairs of A v = lambda B v, B the boundary mass.

    Interior-supported modes (infinite eigenvalues) are removed by working
    with the A-harmonic extension of boundary values.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    if len(mesh.boundary) < 2:
        raise ValueError("Steklov spectrum needs at least two boundary nodes")
    vals, vecs, _ = _boundary_eig(mesh, 0.0, k)
    bvec = mesh.boundary_mass_vector()
    vecs = vecs / np.sqrt(np.sum(bvec[:, None] * vecs**2, axis=0))
    vecs = _fix_sign(vecs)
    return EigenSolution("steklov", vals, vecs, _residuals(mesh, vecs, vals, bvec), mesh)


# --------------------------------------------------------------------------
# constrained Rayleigh minimisation (independent route to lambda_2)
# --------------------------------------------------------------------------


@dataclass
class RayleighResult:
    value: float
    vector: np.ndarray
    iterations: int
    converged: bool
    history: list = field(default_factory=list)


def _ritz(s, a_s, b_diag):
    """Coefficients of the Ritz vectors of span(s), dropping dependent directions."""
    sb = np.sqrt(b_diag)[:, None] * s
    u, sv, vt = np.linalg.svd(sb, full_matrices=False)
    keep = sv > 1e-10 * sv[0]
    t = vt[keep].T / sv[keep]  # s @ t is B-orthonormal
    ga = t.T @ (0.5 * (s.T @ a_s + a_s.T @ s)) @ t
    _, z = np.linalg.eigh(0.5 * (ga + ga.T))
    c = np.zeros((s.shape[1], s.shape[1]))
    c[:, : z.shape[1]] = t @ z
    return c


def rayleigh_minimize(apply_a, b_diag: np.ndarray, constraint: np.ndarray | None = None, *,
                      precond=None, x0: np.ndarray | None = None, tol: float = 1e-13,
                      maxiter: int = 2000, seed: int = 0) -> RayleighResult:
    """Minimise x^T A x / x^T B x, optionally subject to constraint^T x = 0.

    Locally optimal preconditioned conjugate gradient on one vector: each
    step does a Rayleigh-Ritz on span{x, P T r, p}, with P the projection
    onto the constraint set along the constant vector.  B must be diagonal
    and positive.
    """
    n = b_diag.size
    if constraint is None:
        def proj(v):
            return v
    else:
        ones = np.ones(n)
        cy = float(constraint @ ones)

        def proj(v):
            return v - ones * (constraint @ v) / cy

    def bnorm(v):
        return math.sqrt(max(float(v @ (b_diag * v)), 1e-300))

    rng = np.random.default_rng(seed)
    x = proj(rng.standard_normal(n) if x0 is None else np.array(x0, dtype=float))
    x /= bnorm(x)
    ax = apply_a(x)
    rho = float(x @ ax)
    p = ap = None
    history = [rho]
    for it in range(1, maxiter + 1):
        r = ax - rho * b_diag * x
        w = proj(precond(r) if precond is not None else r)
        w /= bnorm(w)
        s = np.column_stack([x, w] + ([p] if p is not None else []))
        a_s = np.column_stack([ax, apply_a(w)] + ([ap] if p is not None else []))
        c = _ritz(s, a_s, b_diag)
        c0 = c[:, 0]
        new, ax = s @ c0, a_s @ c0
        p, ap = s[:, 1:] @ c0[1:], a_s[:, 1:] @ c0[1:]
        nb = bnorm(new)
        x, ax = new / nb, ax / nb
        pn = bnorm(p)
        p, ap = p / pn, ap / pn
        new_rho = float(x @ ax)
        history.append(new_rho)
        done = abs(rho - new_rho) <= tol * abs(new_rho)
        rho = new_rho
        if done:
            return RayleighResult(rho, x, it, True, history)
    return RayleighResult(rho, x, maxiter, False, history)


def oscillator_rayleigh(mesh: WeightedMesh, weighting: str = "MassGamma", **kw) -> RayleighResult:
    """lambda_2 of the oscillator problem as a Rayleigh minimum over mean-zero vectors."""
    m = _mass(mesh, weighting)
    lu = spla.splu((mesh.stiffness + sp.diags(m)).tocsc())
    return rayleigh_minimize(mesh.apply_stiffness, m, m, precond=lu.solve, **kw)


def steklov_rayleigh(mesh: WeightedMesh, shift: float = 0.0, constrained: bool = True,
                     **kw) -> RayleighResult:
    """Minimum of u^T (A + shift M) u / ||Tu||^2 by iteration on boundary values.

    The energy of boundary data is evaluated through sparse harmonic
    extensions, never forming the Schur complement.  With ``constrained``
    the boundary mean int_bdry u phi dS is held at zero.
    """
    schur = _Schur(mesh, shift)
    bw = mesh.boundary_weight
    diag = np.diag(schur.k_bb).copy()
    return rayleigh_minimize(schur.matvec, bw, bw if constrained else None,
                             precond=lambda r: r / diag, **kw)


# --------------------------------------------------------------------------
# Poincare and trace constants
# --------------------------------------------------------------------------


@dataclass
class PoincareResult:
    """Poincare-type constant; for p != 2 an optimiser lower bound."""

    constant: float
    p: float
    subspace: str
    exact: bool
    converged: bool
    iterations: int
    message: str = ""
    vector: np.ndarray | None = field(default=None, repr=False)

    def __float__(self):
        return self.constant


def _constrained_eig_min(mesh: WeightedMesh, c: np.ndarray):
    """Smallest eigenpair of A v = lambda M v on {c^T v = 0}."""
    m = mesh.mass
    lu = spla.splu((mesh.stiffness + sp.diags(m)).tocsc())
    res = rayleigh_minimize(mesh.apply_stiffness, m, c, precond=lu.solve)
    if not res.converged:
        raise SolverError("constrained minimisation did not converge")
    return res.value, res.vector


def poincare_constant(mesh: WeightedMesh, p: float = 2.0, subspace: str = "mean", *,
                      maxiter: int = 500) -> PoincareResult:
    """Best constant C in ||u||_p <= C ||grad u||_p over a zero-average subspace.

    ``subspace="mean"``: ||u - u_Omega|| with u_Omega the gamma-mean.
    ``subspace="trace"``: u with int_bdry u phi dS = 0.
    p = 2 is exact (1/sqrt of the constrained first eigenvalue); p in {1, 4}
    returns the best ratio an optimiser finds, a lower bound.
    """
    if subspace not in ("mean", "trace"):
        raise ValueError("subspace must be 'mean' or 'trace'")
    if subspace == "trace" and len(mesh.boundary) == 0:
        raise ValueError("trace subspace needs a boundary")
    c = mesh.mass if subspace == "mean" else mesh.boundary_mass_vector()
    if subspace == "mean":
        lam = oscillator_spectrum(mesh, 2)
        lam2, v2 = float(lam.eigenvalues[1]), lam.eigenvectors[:, 1]
    else:
        lam2, v2 = _constrained_eig_min(mesh, c)
    if p == 2:
        if lam2 <= 1e-12:
            # the constraint barely restricts constants (boundary where phi ~ 0)
            return PoincareResult(math.inf, 2.0, subspace, True, True, 0,
                                  "first constrained eigenvalue at roundoff level", v2)
        return PoincareResult(1.0 / math.sqrt(lam2), 2.0, subspace, True, True, 0, "exact", v2)
    if p not in (1.0, 4.0, 1, 4):
        raise ValueError("p must be 1, 2 or 4")
    return _poincare_optimize(mesh, float(p), c, v2, subspace, maxiter)


def _poincare_optimize(mesh, p, c, v0, subspace, maxiter):
    """Maximise ||u - mean||_p / ||grad u||_p over the constraint set with L-BFGS.

    Both norms are smoothed by eps = 1e-12 inside the absolute values so
    that p = 1 stays differentiable; the reported ratio is unsmoothed.
    """
    n = mesh.size
    m = mesh.mass
    piv = int(np.argmax(np.abs(c)))
    keep = np.delete(np.arange(n), piv)
    tie = c[keep] / c[piv]
    eps = 1e-12

    def full(z):
        v = np.empty(n)
        v[keep] = z
        v[piv] = -(tie @ z)
        return v

    def centred(v):
        return v - (m @ v) / m.sum() if subspace == "mean" else v

    def objective(z):
        v = full(z)
        cv = centred(v)
        a = (cv * cv + eps) ** (p / 2 - 1)
        num = float(np.sum(m * a * (cv * cv + eps)))
        dnum = p * m * a * cv
        if subspace == "mean":
            dnum = dnum - m * dnum.sum() / m.sum()
        g = (mesh.grad @ v).reshape(-1, mesh.dim)
        b = (np.sum(g * g, axis=1) + eps) ** (p / 2 - 1)
        den = float(np.sum(mesh.elem_weight * b * (np.sum(g * g, axis=1) + eps)))
        dden = mesh.grad.T @ ((p * mesh.elem_weight * b)[:, None] * g).ravel()
        gv = -(dnum / num - dden / den) / p
        gz = gv[keep] - tie * gv[piv]
        return -(math.log(num) - math.log(den)) / p, gz

    res = optimize.minimize(objective, v0[keep], jac=True, method="L-BFGS-B",
                            options={"maxiter": maxiter, "ftol": 1e-14, "gtol": 1e-10})
    v = full(res.x)

    def ratio(u):
        return (mesh.lp_power(centred(u), p) / mesh.grad_lp_power(u, p)) ** (1 / p)

    start, end = ratio(v0), ratio(v)
    best, vec = (end, v) if end >= start else (start, v0)
    msg = "optimiser lower bound; " + str(res.message)
    return PoincareResult(best, p, subspace, False, bool(res.success), int(res.nit), msg, vec)


@dataclass
class TraceConstant:
    """Smallest mu in (A + M) v = mu B v and its extremal.

    ``mu`` is the best constant in ||u||_{W^{1,2}}^2 >= mu ||Tu||^2 (the
    squared-norm quotient); ``constant = 1/sqrt(mu)`` bounds the trace.
    """

    mu: float
    constant: float
    vector: np.ndarray = field(repr=False)
    residual: float
    constant_ratio: float
    oracle: float | None = None


def best_trace_constant(mesh: WeightedMesh, *, check: bool = True) -> TraceConstant:
    if len(mesh.boundary) == 0:
        raise ValueError("domain has no boundary")
    vals, vecs, schur = _boundary_eig(mesh, 1.0, 1)
    mu = float(vals[0])
    v = vecs[:, 0]
    bvec = mesh.boundary_mass_vector()
    v = v / math.sqrt(v @ (bvec * v))
    v = _fix_sign(v[:, None])[:, 0]
    kv = mesh.apply_stiffness(v) + mesh.mass * v
    res = float(np.linalg.norm(kv - mu * bvec * v) / max(np.linalg.norm(kv), 1e-300))
    const_ratio = float(mesh.mass.sum() / mesh.boundary_weight.sum())
    oracle = None
    if check:
        oracle = steklov_rayleigh(mesh, shift=1.0, constrained=False).value
    return TraceConstant(mu, 1.0 / math.sqrt(mu), v, res, const_ratio, oracle)


def dense_trace_constant(mesh: WeightedMesh) -> float:
    """Brute-force oracle: smallest finite eigenvalue of the dense pencil (A + M, B)."""
    k = (mesh.stiffness + sp.diags(mesh.mass)).toarray()
    b = np.diag(mesh.boundary_mass_vector())
    vals = sla.eigvals(k, b)
    finite = vals[np.isfinite(vals)].real
    finite = finite[finite > 0]
    return float(np.min(finite))
