"""Compatible mixed Galerkin spaces on pipe networks and assembly of the matrix system.

Pressure lives edgewise in ``Q`` (P0 cells or Legendre modes), flux edgewise in
``V`` (nodal P1 or Lagrange at Gauss-Lobatto nodes). Flux values at the pipe ends
are edge-local; the mass balance ``sum_e n^e(v) m^e(v) = 0`` at interior vertices
is built into ``V`` by eliminating one endpoint value per vertex. Pressure
continuity at junctions is then natural: the vertex terms of the integration
by parts cancel for every admissible test function.

The semidiscrete system reads::

    M_p dp/dt + G m                = f
    M_m dm/dt - G^T p + D(m)       = g - B h(t)

with ``G[i, j] = (d/dx phi_j, psi_i)`` integrated exactly and ``M_m`` and
``D`` computed with the nodal (trapezoid or Gauss-Lobatto) quadrature.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import damping as _damping
from .netgraph import Network
from .quadrature import (
    LagrangeBasis,
    QuadratureRule,
    gauss_legendre,
    gauss_lobatto,
    shifted_legendre,
    trapezoid,
)

METHODS = ("fem", "spectral", "fem_p1p1")


class SpaceError(ValueError):
    pass


def _cell_count(length, h):
    n = length / h
    k = int(round(n))
    if k < 1 or abs(n - k) > 1e-9 * max(1.0, n):
        raise SpaceError(f"pipe length {length} is not an integer multiple of h = {h}")
    return k


class EdgeSpace:
    """Local pressure and flux bases on one pipe of length ``length``.

    Local matrices are stored in physical units except ``div``, which is
    length-independent (the 1/L of the derivative cancels the L of the measure).
    """

    def __init__(self, method, resolution, length=1.0):
        if method not in METHODS:
            raise SpaceError(f"unknown method {method!r}")
        self.method = method
        self.length = float(length)
        if method == "spectral":
            order = int(resolution)
            if order != resolution or order < 1:
                raise SpaceError(f"spectral order must be an integer >= 1, got {resolution}")
            self.order = order
            self.n_cells = None
            self.rule = gauss_lobatto(order)
            self.basis = LagrangeBasis(self.rule.points)
            self.n_flux = order + 1
            self.n_pres = order
            self._spectral_matrices()
        else:
            self.n_cells = _cell_count(self.length, float(resolution))
            self.order = 1
            self.rule = trapezoid(self.n_cells)
            self.n_flux = self.n_cells + 1
            self.n_pres = self.n_cells if method == "fem" else self.n_cells + 1
            self._fem_matrices()
        self.nodes = self.rule.points
        self.weights = self.length * self.rule.weights

    @property
    def h(self):
        return self.length / self.n_cells if self.n_cells else None

    def _fem_matrices(self):
        n, L = self.n_cells, self.length
        hx = L / n
        main = np.full(n + 1, 4.0)
        main[0] = main[-1] = 2.0
        self.mass_flux = sp.diags(
            [np.ones(n), main, np.ones(n)], [-1, 0, 1], format="csr"
        ) * (hx / 6.0)
        self.stiff_flux = sp.diags(
            [-np.ones(n), np.r_[1.0, np.full(n - 1, 2.0), 1.0], -np.ones(n)], [-1, 0, 1], format="csr"
        ) / hx
        self.flux_integrals = np.full(n + 1, hx)
        self.flux_integrals[[0, -1]] = hx / 2
        if self.method == "fem":
            self.mass_pres = sp.identity(n, format="csr") * hx
            self.div = sp.diags([-np.ones(n), np.ones(n)], [0, 1], shape=(n, n + 1), format="csr")
        else:
            # deliberately incompatible pair: pressure also continuous P1
            self.mass_pres = self.mass_flux.copy()
            self.div = sp.diags(
                [-0.5 * np.ones(n), np.r_[-0.5, np.zeros(n - 1), 0.5], 0.5 * np.ones(n)],
                [-1, 0, 1],
                format="csr",
            )

    def _spectral_matrices(self):
        p, L = self.order, self.length
        g = gauss_legendre(p + 2)
        phi = self.basis.values(g.points)
        dphi = self.basis.derivatives(g.points)
        psi = shifted_legendre(p, g.points)
        w = g.weights
        self.mass_flux = sp.csr_matrix(L * phi.T @ (w[:, None] * phi))
        self.stiff_flux = sp.csr_matrix(dphi.T @ (w[:, None] * dphi) / L)
        self.flux_integrals = L * (w @ phi)
        self.mass_pres = sp.diags(L / (2.0 * np.arange(p) + 1.0), format="csr")
        div = psi.T @ (w[:, None] * dphi)
        div[np.abs(div) < 1e-14] = 0.0
        self.div = sp.csr_matrix(div)

    def flux_values(self, s):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        if self.method == "spectral":
            return self.basis.values(s)
        return _hat_values(self.n_cells, s)

    def pressure_values(self, s):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        if self.method == "spectral":
            return shifted_legendre(self.n_pres, s)
        if self.method == "fem_p1p1":
            return _hat_values(self.n_cells, s)
        n = self.n_cells
        cell = np.minimum((s * n).astype(int), n - 1)
        out = np.zeros((s.size, n))
        out[np.arange(s.size), cell] = 1.0
        return out


def _hat_values(n, s):
    out = np.zeros((s.size, n + 1))
    cell = np.minimum((s * n).astype(int), n - 1)
    t = s * n - cell
    out[np.arange(s.size), cell] = 1.0 - t
    out[np.arange(s.size), cell + 1] = t
    return out


@dataclass
class GlobalSpace:
    """Pressure/flux spaces on a whole network with Kirchhoff-constrained flux.

    ``T`` maps constrained flux coefficients to edge-local nodal values
    ("full" flux vector). ``kept[j]`` is the full index of constrained DOF ``j``.
    """

    network: Network
    method: str
    resolution: float
    edge_spaces: list
    flux_offsets: np.ndarray
    pres_offsets: np.ndarray
    T: sp.csr_matrix
    kept: np.ndarray
    eliminated: dict
    quadrature: list = field(default_factory=list)

    @property
    def n_flux_full(self):
        return int(self.flux_offsets[-1])

    @property
    def n_flux(self):
        return self.T.shape[1]

    @property
    def n_pres(self):
        return int(self.pres_offsets[-1])

    def endpoint_dof(self, edge_index, vertex_id):
        """Full flux index of the nodal value of edge ``edge_index`` at ``vertex_id``."""
        e = self.network.edges[edge_index]
        start = self.flux_offsets[edge_index]
        return start if vertex_id == e.tail else self.flux_offsets[edge_index + 1] - 1

    def expand_flux(self, m):
        return self.T @ m

    def restrict_flux(self, m_full):
        return np.asarray(m_full)[self.kept]

    def edge_flux(self, m, edge_index):
        full = self.expand_flux(m)
        return full[self.flux_offsets[edge_index] : self.flux_offsets[edge_index + 1]]

    def edge_pressure(self, p, edge_index):
        return p[self.pres_offsets[edge_index] : self.pres_offsets[edge_index + 1]]

    def kirchhoff_defects(self, m):
        """``sum_e n^e(v) m^e(v)`` at every interior vertex."""
        full = self.expand_flux(m)
        net = self.network
        out = {}
        for v in net.interior_vertices:
            total = 0.0
            for k, e in enumerate(net.edges):
                if v.id in (e.tail, e.head):
                    total += net.incidence(e.id, v.id) * full[self.endpoint_dof(k, v.id)]
            out[v.id] = total
        return out

    def kernel_edge_constants(self):
        """Basis (columns, one row per edge) of Kirchhoff-feasible edgewise constants."""
        return network_kernel(self.network)

    def kernel_flux(self):
        """Constrained flux coefficients of the kernel basis fields."""
        K = self.kernel_edge_constants()
        full = np.zeros((self.n_flux_full, K.shape[1]))
        for k in range(len(self.network.edges)):
            full[self.flux_offsets[k] : self.flux_offsets[k + 1]] = K[k]
        return full[self.kept]

    def interpolate(self, p_fun, m_fun):
        """Nodal flux interpolant and L2-projected pressure of callables ``fun(edge_index, x)``."""
        m_full = np.empty(self.n_flux_full)
        p = np.empty(self.n_pres)
        for k, es in enumerate(self.edge_spaces):
            x = es.nodes * es.length
            m_full[self.flux_offsets[k] : self.flux_offsets[k + 1]] = m_fun(k, x)
            p[self.pres_offsets[k] : self.pres_offsets[k + 1]] = _project_pressure(es, lambda s: p_fun(k, s))
        return p, self.restrict_flux(m_full)

    def compatibility_pair(self):
        return _full_pair(self)


def _project_pressure(es: EdgeSpace, fun, n_gauss=None):
    L = es.length
    if es.method == "spectral":
        g = gauss_legendre(n_gauss or es.order + 8)
        vals = fun(L * g.points)
        psi = es.pressure_values(g.points)
        rhs = L * psi.T @ (g.weights * vals)
        return rhs / es.mass_pres.diagonal()
    g = gauss_legendre(n_gauss or 4)
    n = es.n_cells
    rhs = np.zeros(es.n_pres)
    for c in range(n):
        s = (c + g.points) / n
        psi = es.pressure_values(s)
        rhs += (L / n) * psi.T @ (g.weights * fun(L * s))
    return spla.spsolve(es.mass_pres.tocsc(), rhs) if es.method == "fem_p1p1" else rhs / es.mass_pres.diagonal()


def network_kernel(net: Network):
    """Null space of the interior-vertex incidence matrix (edges as columns)."""
    interior = net.interior_vertices
    A = np.zeros((len(interior), len(net.edges)))
    for i, v in enumerate(interior):
        for k, e in enumerate(net.edges):
            if v.id in (e.tail, e.head):
                A[i, k] = net.incidence(e.id, v.id)
    if not interior:
        return np.eye(len(net.edges))
    return sla.null_space(A)


def build_space(network: Network, method: str, resolution) -> GlobalSpace:
    """Per-edge bases plus Kirchhoff elimination.

    ``resolution`` is the mesh width ``h`` for ``fem`` (pipe lengths must be
    integer multiples of it) or the polynomial order for ``spectral``.
    """
    if method not in METHODS:
        raise SpaceError(f"unknown method {method!r}; expected one of {METHODS}")
    if method == "spectral":
        if int(resolution) != resolution or resolution < 1:
            raise SpaceError(f"spectral order must be an integer >= 1, got {resolution}")
    elif not resolution > 0:
        raise SpaceError(f"mesh width must be positive, got {resolution}")
    edge_spaces = [EdgeSpace(method, resolution, e.length) for e in network.edges]
    flux_offsets = np.concatenate(([0], np.cumsum([es.n_flux for es in edge_spaces])))
    pres_offsets = np.concatenate(([0], np.cumsum([es.n_pres for es in edge_spaces])))
    n_full = int(flux_offsets[-1])

    def dof(k, vid):
        e = network.edges[k]
        return flux_offsets[k] if vid == e.tail else flux_offsets[k + 1] - 1

    # eliminated dof -> list of (full dof, coefficient)
    eliminated = {}
    for v in network.interior_vertices:
        adj = [k for k, e in enumerate(network.edges) if v.id in (e.tail, e.head)]
        k0 = adj[0]
        n0 = network.incidence(network.edges[k0].id, v.id)
        eliminated[int(dof(k0, v.id))] = [
            (int(dof(k, v.id)), -n0 * network.incidence(network.edges[k].id, v.id)) for k in adj[1:]
        ]
    kept = np.array([i for i in range(n_full) if i not in eliminated], dtype=int)
    col = {int(i): j for j, i in enumerate(kept)}
    rows, cols, vals = [], [], []
    for i in kept:
        rows.append(i)
        cols.append(col[int(i)])
        vals.append(1.0)
    for i, terms in eliminated.items():
        for j, c in terms:
            rows.append(i)
            cols.append(col[j])
            vals.append(float(c))
    T = sp.csr_matrix((vals, (rows, cols)), shape=(n_full, kept.size))
    quadrature = [QuadratureRule(es.nodes * es.length, es.weights) for es in edge_spaces]
    return GlobalSpace(
        network, method, resolution, edge_spaces, flux_offsets, pres_offsets, T, kept, eliminated, quadrature
    )


@dataclass
class Operators:
    """Assembled matrices plus the nodal quadrature used for the damping term.

    ``quad_basis`` maps flux coefficients to values at the quadrature points,
    ``quad_weights`` are the matching weights. ``M_m`` is the lumped mass
    ``quad_basis^T diag(w) quad_basis``; ``M_m_exact`` and ``M_p`` are exact and
    only enter energies.
    """

    M_p: object
    M_m: object
    G: object
    B: object
    M_m_exact: object
    quad_basis: object
    quad_weights: np.ndarray
    damping: _damping.DampingModel
    f: np.ndarray
    g: np.ndarray
    space: object = None

    @property
    def n_pres(self):
        return self.M_p.shape[0]

    @property
    def n_flux(self):
        return self.M_m.shape[0]

    @property
    def network(self):
        return self.space.network

    def boundary_vector(self, h):
        return self.B @ np.asarray(h, dtype=float)

    def with_damping(self, damping):
        return Operators(
            self.M_p, self.M_m, self.G, self.B, self.M_m_exact, self.quad_basis,
            self.quad_weights, damping, self.f, self.g, self.space,
        )


def assemble(space: GlobalSpace, damping, f=None, g=None) -> Operators:
    """Assemble ``M_p``, lumped ``M_m``, ``G``, ``B`` and the damping quadrature.

    ``f`` and ``g`` are optional load vectors (pressure and flux space); both
    default to zero as in the pipe network experiment.
    """
    net = space.network
    T = space.T
    M_p = sp.block_diag([es.mass_pres for es in space.edge_spaces], format="csr")
    G_full = sp.block_diag([es.div for es in space.edge_spaces], format="csr")
    M_full = sp.block_diag([es.mass_flux for es in space.edge_spaces], format="csr")
    w = np.concatenate([es.weights for es in space.edge_spaces])
    bverts = net.boundary_vertices
    B_full = sp.lil_matrix((space.n_flux_full, len(bverts)))
    for j, v in enumerate(bverts):
        (k, e), = [(k, e) for k, e in enumerate(net.edges) if v.id in (e.tail, e.head)]
        B_full[space.endpoint_dof(k, v.id), j] = net.incidence(e.id, v.id)
    Tt = T.T.tocsr()
    M_m = (Tt @ sp.diags(w) @ T).tocsr()
    return Operators(
        M_p=M_p,
        M_m=M_m,
        G=(G_full @ T).tocsr(),
        B=(Tt @ B_full.tocsr()).tocsr(),
        M_m_exact=(Tt @ M_full @ T).tocsr(),
        quad_basis=T,
        quad_weights=w,
        damping=damping,
        f=np.zeros(space.n_pres) if f is None else np.asarray(f, dtype=float),
        g=np.zeros(space.n_flux) if g is None else np.asarray(g, dtype=float),
        space=space,
    )


def apply_damping(ops: Operators, m, damping=None):
    """Vector ``(d(m_h), phi_i)_h`` evaluated with the operators' quadrature."""
    d = ops.damping if damping is None else damping
    u = ops.quad_basis @ m
    return ops.quad_basis.T @ (ops.quad_weights * _damping.evaluate(d, u))


def damping_jacobian(ops: Operators, m, damping=None):
    """Matrix ``(d'(m_h) phi_j, phi_i)_h``; sparse when the quadrature basis is sparse."""
    d = ops.damping if damping is None else damping
    Phi = ops.quad_basis
    c = ops.quad_weights * _damping.evaluate_derivative(d, Phi @ m)
    if sp.issparse(Phi):
        return (Phi.T @ sp.diags(c) @ Phi).tocsr()
    return Phi.T @ (c[:, None] * Phi)


# -- structural checks --------------------------------------------------------


@dataclass
class CompatibilityPair:
    """Gram data needed to test ``Q = d/dx V`` and ``ker(d/dx) in V``.

    ``G[i, j] = (d/dx v_j, q_i)``, ``M_q`` the Q-Gram, ``K[i, j] = (d/dx v_i, d/dx v_j)``,
    ``M_v`` the exact V-Gram, ``kernel_loads[:, k] = (kappa_k, v_i)`` and
    ``kernel_norms[k] = ||kappa_k||^2`` for the edgewise-constant kernel fields ``kappa_k``.
    """

    G: np.ndarray
    M_q: np.ndarray
    K: np.ndarray
    M_v: np.ndarray
    kernel_loads: np.ndarray
    kernel_norms: np.ndarray


def _dense(A):
    return A.toarray() if sp.issparse(A) else np.asarray(A)


def _full_pair(space: GlobalSpace) -> CompatibilityPair:
    T = space.T
    K_full = sp.block_diag([es.stiff_flux for es in space.edge_spaces], format="csr")
    M_full = sp.block_diag([es.mass_flux for es in space.edge_spaces], format="csr")
    kern = space.kernel_edge_constants()
    loads_full = np.zeros((space.n_flux_full, kern.shape[1]))
    norms = np.zeros(kern.shape[1])
    for k, es in enumerate(space.edge_spaces):
        loads_full[space.flux_offsets[k] : space.flux_offsets[k + 1]] = np.outer(es.flux_integrals, kern[k])
        norms += es.length * kern[k] ** 2
    return CompatibilityPair(
        G=_dense(sp.block_diag([es.div for es in space.edge_spaces]) @ T),
        M_q=_dense(sp.block_diag([es.mass_pres for es in space.edge_spaces])),
        K=_dense(T.T @ K_full @ T),
        M_v=_dense(T.T @ M_full @ T),
        kernel_loads=T.T @ loads_full,
        kernel_norms=norms,
    )


@dataclass(frozen=True)
class CompatibilityReport:
    derivative_image_equals_Q: bool
    kernel_contained: bool
    image_residual: float
    q_rank: int
    q_dim: int
    kernel_residual: float

    @property
    def passed(self):
        return self.derivative_image_equals_Q and self.kernel_contained


def check_compatibility(space, tol=1e-10) -> CompatibilityReport:
    """Test ``Q = d/dx V`` (projection residual plus rank) and ``ker(d/dx) in V``.

    On a network the kernel of ``d/dx`` inside the Kirchhoff-constrained flux
    space is the space of feasible edgewise constants (cycle flows plus
    through-flows between boundary vertices).
    """
    pair = space if isinstance(space, CompatibilityPair) else space.compatibility_pair()
    G, Mq, K = pair.G, pair.M_q, pair.K
    # K - G^T Mq^{-1} G is the Gram of the part of d/dx V orthogonal to Q
    R = K - G.T @ np.linalg.solve(Mq, G)
    scale = max(np.abs(K).max(), 1e-300)
    image_res = float(np.abs(R).max() / scale)
    q_dim = G.shape[0]
    sv = np.linalg.svd(G, compute_uv=False)
    q_rank = int(np.sum(sv > tol * max(sv.max(), 1e-300) * max(G.shape))) if sv.size else 0
    image_ok = image_res < tol and q_rank == q_dim

    loads, norms = pair.kernel_loads, pair.kernel_norms
    if loads.size:
        captured = np.einsum("ik,ik->k", loads, np.linalg.solve(pair.M_v, loads))
        kres = float(np.max(np.abs(norms - captured) / norms))
    else:
        kres = 0.0
    return CompatibilityReport(image_ok, kres < tol, image_res, q_rank, q_dim, kres)


@dataclass(frozen=True)
class NormEquivalenceReport:
    lambda_min: float
    lambda_max: float
    satisfied: bool


LOWER, UPPER = 0.25, 2.25


def generalized_extremes(A, M):
    """Extreme eigenvalues of the pencil ``A x = lambda M x`` (``M`` SPD)."""
    A, M = _dense(A), _dense(M)
    try:
        lam = sla.eigh(A, M, eigvals_only=True)
    except np.linalg.LinAlgError as err:
        raise SpaceError("consistent mass matrix is singular; basis is broken") from err
    return float(lam.min()), float(lam.max())


def certify_norm_equivalence(space_or_ops, lumped=None, exact=None) -> NormEquivalenceReport:
    """Compare the quadrature norm with the L2 norm on the flux space.

    Reports the extreme generalized eigenvalues of (lumped, exact) mass and
    whether they lie in ``[1/4, 9/4]``, i.e. ``1/2 ||v|| <= ||v||_h <= 3/2 ||v||``.
    """
    if lumped is None:
        ops = space_or_ops if isinstance(space_or_ops, Operators) else assemble(space_or_ops, None)
        lumped, exact = ops.M_m, ops.M_m_exact
    lo, hi = generalized_extremes(lumped, exact)
    return NormEquivalenceReport(lo, hi, bool(lo >= LOWER - 1e-12 and hi <= UPPER + 1e-12))


# -- sampling -------------------------------------------------------------------------


def pressure_traces(ops: Operators, p, m, g_full=None):
    """Pressure at both ends of every pipe, recovered from the flux equation.

    Testing the flux equation with an unconstrained endpoint basis function
    leaves exactly the vertex term ``n^e(v) p(v)``; at interior vertices all
    adjacent pipes report the same value, at boundary vertices the prescribed one.
    Returns ``{(edge_index, vertex_id): value}``.
    """
    space = ops.space
    G_full = sp.block_diag([es.div for es in space.edge_spaces], format="csr")
    r = -(G_full.T @ p) + ops.quad_weights * _damping.evaluate(ops.damping, space.T @ m)
    if g_full is not None:
        r = r - g_full
    out = {}
    for k, e in enumerate(space.network.edges):
        for vid in (e.tail, e.head):
            n = space.network.incidence(e.id, vid)
            out[(k, vid)] = float(-n * r[space.endpoint_dof(k, vid)])
    return out


def sample_state(ops: Operators, p, m):
    """Rows ``(edge_id, x, p, m)`` at the flux nodes of every pipe.

    Pipe ends carry the recovered pressure traces; interior nodes carry the
    average of the adjacent cells (``fem``) or the polynomial value (``spectral``).
    """
    space = ops.space
    traces = pressure_traces(ops, p, m)
    m_full = space.T @ m
    rows = []
    for k, (e, es) in enumerate(zip(space.network.edges, space.edge_spaces)):
        pk = space.edge_pressure(p, k)
        mk = m_full[space.flux_offsets[k] : space.flux_offsets[k + 1]]
        s = es.nodes
        if es.method == "fem":
            pv = np.empty(s.size)
            pv[1:-1] = 0.5 * (pk[:-1] + pk[1:])
        else:
            pv = es.pressure_values(s) @ pk
        pv[0] = traces[(k, e.tail)]
        pv[-1] = traces[(k, e.head)]
        for j in range(s.size):
            rows.append((e.id, float(s[j] * es.length), float(pv[j]), float(mk[j])))
    return rows
