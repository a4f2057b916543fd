"""Stationary Newton solves and implicit-midpoint time integration.

Both work on any :class:`~pipewave.galerkin.Operators`-like object, so the same
code drives full-order and reduced models.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .galerkin import apply_damping, damping_jacobian
from .quadrature import gauss_legendre, shifted_legendre
from . import damping as _damping

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    pass


class NewtonError(SolverError):
    """Newton failed to reach the tolerance; carries the final residual."""

    def __init__(self, message, residual, step=None, time=None, history=None):
        super().__init__(message)
        self.residual = residual
        self.step = step
        self.time = time
        self.history = history or []


class SingularJacobianError(SolverError):
    pass


@dataclass
class SolverOptions:
    newton_tol: float = 1e-10
    newton_max_iter: int = 50
    dt: float = 0.01
    t_end: float = 50.0
    sample_times: list | None = None

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.newton_tol > 0:
            raise ValueError("newton_tol must be positive")
        if self.t_end < 0:
            raise ValueError("t_end must be nonnegative")
        if self.sample_times is not None:
            bad = [t for t in self.sample_times if t < 0 or t > self.t_end + 1e-12]
            if bad:
                raise ValueError(f"sample times outside [0, t_end]: {bad}")

    @classmethod
    def from_config(cls, time_cfg=None, newton_cfg=None):
        time_cfg, newton_cfg = dict(time_cfg or {}), dict(newton_cfg or {})
        return cls(
            newton_tol=float(newton_cfg.get("tol", 1e-10)),
            newton_max_iter=int(newton_cfg.get("max_iter", 50)),
            dt=float(time_cfg.get("dt", 0.01)),
            t_end=float(time_cfg.get("t_end", 50.0)),
            sample_times=time_cfg.get("sample_times"),
        )


@dataclass
class State:
    p: np.ndarray
    m: np.ndarray
    t: float = 0.0

    def __sub__(self, other):
        return State(self.p - other.p, self.m - other.m, self.t)

    def copy(self):
        return State(self.p.copy(), self.m.copy(), self.t)


@dataclass
class Trajectory:
    """Sampled states and the time derivatives implied by the semidiscrete equations."""

    times: np.ndarray
    p: np.ndarray  # (n_samples, n_pres)
    m: np.ndarray  # (n_samples, n_flux)
    dp: np.ndarray
    dm: np.ndarray
    newton_iterations: list = field(default_factory=list)

    def __len__(self):
        return len(self.times)

    @property
    def states(self):
        return [State(p, m, t) for t, p, m in zip(self.times, self.p, self.m)]

    @property
    def dstates(self):
        return [State(p, m, t) for t, p, m in zip(self.times, self.dp, self.dm)]

    def state(self, i):
        return State(self.p[i], self.m[i], self.times[i])

    def at(self, t):
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-9 * max(1.0, abs(t)):
            raise KeyError(f"time {t} was not sampled")
        return self.state(i)


# -- linear algebra helpers ----------------------------------------------------


def _solve(A, b):
    data = A.data if sp.issparse(A) else A
    if not np.all(np.isfinite(data)):
        # SuperLU does not survive inf/nan entries
        raise SingularJacobianError("matrix has non-finite entries")
    if sp.issparse(A):
        try:
            lu = spla.splu(A.tocsc())
        except RuntimeError as err:
            raise SingularJacobianError(str(err)) from err
        x = lu.solve(b)
    else:
        try:
            x = np.linalg.solve(A, b)
        except np.linalg.LinAlgError as err:
            raise SingularJacobianError(str(err)) from err
    if not np.all(np.isfinite(x)):
        raise SingularJacobianError("linear solve produced non-finite values")
    return x


def _diag_or_none(A):
    if sp.issparse(A):
        if (A - sp.diags(A.diagonal())).count_nonzero() == 0:
            return A.diagonal()
        return None
    A = np.asarray(A)
    d = np.diag(A)
    return d if np.array_equal(A, np.diag(d)) else None


class _MassInverse:
    def __init__(self, M):
        self.d = _diag_or_none(M)
        if self.d is None:
            self.lu = spla.splu(sp.csc_matrix(M)) if sp.issparse(M) else None
            self.M = M

    def __call__(self, b):
        if self.d is not None:
            return b / self.d if b.ndim == 1 else b / self.d[:, None]
        if self.lu is not None:
            return self.lu.solve(b)
        return np.linalg.solve(self.M, b)


def _stack(blocks, sparse):
    if sparse:
        return sp.bmat(blocks, format="csc")
    return np.block([[np.asarray(b.toarray() if sp.issparse(b) else b) for b in row] for row in blocks])


# -- stationary problem ----------------------------------------------------------


def stationary_residual_vector(ops, state, h, f=None, g=None, damping=None):
    f = ops.f if f is None else f
    g = ops.g if g is None else g
    r1 = ops.G @ state.m - f
    r2 = -(ops.G.T @ state.p) + apply_damping(ops, state.m, damping) - g + ops.boundary_vector(h)
    return np.concatenate([r1, r2])


def steady_residual(ops, state, h, f=None, g=None, damping=None) -> float:
    """Max-norm of the stationary residual at ``state`` for boundary values ``h``."""
    return float(np.max(np.abs(stationary_residual_vector(ops, state, h, f, g, damping))))


def stationary_jacobian(ops, m, damping=None):
    n_p = ops.n_pres
    G = ops.G
    J = damping_jacobian(ops, m, damping)
    sparse = sp.issparse(G)
    if sparse:
        Z = sp.csr_matrix((n_p, n_p))
        return sp.bmat([[Z, G], [-G.T, J]], format="csc")
    return np.block([[np.zeros((n_p, n_p)), G], [-G.T, J]])


def solve_stationary(
    ops, h, f=None, g=None, *, damping=None, tol=1e-10, max_iter=50, guess=None, history=None
) -> State:
    """Newton iteration on the coupled saddle-point system

        G m = f,    -G^T p + D(m) m = g - B h

    with exact damping Jacobian and a halving line search. Without a guess the
    iteration starts from the solution with linear damping ``d(m) = m``.
    """
    d = ops.damping if damping is None else damping
    f = ops.f if f is None else np.asarray(f, dtype=float)
    g = ops.g if g is None else np.asarray(g, dtype=float)
    n_p = ops.n_pres
    if guess is None:
        rhs = np.concatenate([f, g - ops.boundary_vector(h)])
        n_p = ops.n_pres
        M = ops.M_m
        K = (
            sp.bmat([[sp.csr_matrix((n_p, n_p)), ops.G], [-ops.G.T, M]], format="csc")
            if sp.issparse(ops.G)
            else np.block([[np.zeros((n_p, n_p)), ops.G], [-ops.G.T, M]])
        )
        x = _solve(K, rhs)
    else:
        x = np.concatenate([guess.p, guess.m])

    def F(x):
        return stationary_residual_vector(ops, State(x[:n_p], x[n_p:]), h, f, g, d)

    r = F(x)
    res = float(np.max(np.abs(r)))
    hist = [res] if history is None else history
    if history is not None:
        history.append(res)
    it = 0
    while res >= tol:
        if it >= max_iter:
            raise NewtonError(
                f"stationary Newton did not converge in {max_iter} iterations (residual {res:.3e})",
                res,
                history=hist,
            )
        J = stationary_jacobian(ops, x[n_p:], d)
        dx = _solve(J, -r)
        lam, base = 1.0, float(np.linalg.norm(r))
        for _ in range(20):
            x_try = x + lam * dx
            r_try = F(x_try)
            if np.linalg.norm(r_try) <= base or lam < 2**-19:
                break
            lam *= 0.5
        x, r = x_try, r_try
        new = float(np.max(np.abs(r)))
        hist.append(new)
        it += 1
        if it > 5 and new >= res and new < 1e3 * tol:
            # stagnation at roundoff level
            res = new
            break
        res = new
    if res >= tol:
        raise NewtonError(f"stationary Newton stagnated at residual {res:.3e}", res, history=hist)
    return State(x[:n_p], x[n_p:], 0.0)


def initial_data(ops, p0, m0, *, damping=None, tol=1e-10, max_iter=50, n_gauss=None) -> State:
    """Compatible discrete initial values from continuous ``p0(k, x)``, ``m0(k, x)``.

    Solves the stationary system with ``(f, q) = (d/dx m0, q)``,
    ``(g, v) = (d(m0), v) - (p0, d/dx v)`` and zero boundary values; the
    boundary pressure enters through ``p0`` itself.
    """
    space = ops.space
    d = ops.damping if damping is None else damping
    f = np.zeros(space.n_pres)
    g_full = np.zeros(space.n_flux_full)
    for k, es in enumerate(space.edge_spaces):
        L = es.length
        if es.method == "spectral":
            cells = [(0.0, 1.0)]
            rule = gauss_legendre(n_gauss or es.order + 10)
        else:
            n = es.n_cells
            cells = [(c / n, (c + 1) / n) for c in range(n)]
            rule = gauss_legendre(n_gauss or 6)
        fk = np.zeros(es.n_pres)
        gk = np.zeros(es.n_flux)
        for a, b in cells:
            s = a + (b - a) * rule.points
            w = (b - a) * L * rule.weights
            x = L * s
            mv, pv = np.asarray(m0(k, x), float), np.asarray(p0(k, x), float)
            phi = es.flux_values(s)
            dphi = _flux_derivatives(es, s)
            gk += phi.T @ (w * _damping.evaluate(d, mv)) - dphi.T @ (w * pv)
            # (d/dx m0, q) = [m0 q]_a^b - (m0, d/dx q)
            psi_b = es.pressure_values(np.array([b - 1e-14 if b == 1.0 else b]))[0]
            psi_a = es.pressure_values(np.array([a]))[0]
            if es.method == "fem":
                cell = int(round(a * es.n_cells))
                psi_a = psi_b = np.eye(es.n_pres)[cell]
            mb, ma = float(m0(k, np.array([L * b]))[0]), float(m0(k, np.array([L * a]))[0])
            fk += mb * psi_b - ma * psi_a
            if es.method == "spectral":
                dpsi = shifted_legendre(es.n_pres, s, derivative=True) / L
                fk -= dpsi.T @ (w * mv)
        f[space.pres_offsets[k] : space.pres_offsets[k + 1]] = fk
        g_full[space.flux_offsets[k] : space.flux_offsets[k + 1]] = gk
    g = space.T.T @ g_full
    zero_h = np.zeros(ops.B.shape[1])
    return solve_stationary(ops, zero_h, f, g, damping=d, tol=tol, max_iter=max_iter)


def _flux_derivatives(es, s):
    if es.method == "spectral":
        return es.basis.derivatives(s) / es.length
    n = es.n_cells
    cell = np.minimum((s * n).astype(int), n - 1)
    out = np.zeros((s.size, n + 1))
    out[np.arange(s.size), cell] = -n / es.length
    out[np.arange(s.size), cell + 1] = n / es.length
    return out


# -- transient problem ----------------------------------------------------------------


def time_derivatives(ops, state, h, damping=None, _inverses=None):
    """``(dp/dt, dm/dt)`` from the semidiscrete equations at ``state``."""
    Mp_inv, Mm_inv = _inverses or (_MassInverse(ops.M_p), _MassInverse(ops.M_m))
    dp = Mp_inv(ops.f - ops.G @ state.m)
    dm = Mm_inv(ops.G.T @ state.p - apply_damping(ops, state.m, damping) + ops.g - ops.boundary_vector(h))
    return dp, dm


class MidpointStepper:
    """Implicit midpoint rule with the pressure eliminated from the stage equation.

    With ``mu = (m_n + m_{n+1}) / 2`` the stage equation is

        (2/dt M_m + dt/2 G^T M_p^{-1} G) mu + D(mu)
            = 2/dt M_m m_n + G^T p_n + dt/2 G^T M_p^{-1} f + g - B h(t_mid)

    which has a symmetric positive definite Jacobian for monotone damping.
    """

    def __init__(self, ops, damping=None, tol=1e-10, max_iter=50):
        self.ops = ops
        self.damping = ops.damping if damping is None else damping
        self.tol = tol
        self.max_iter = max_iter
        self.Mp_inv = _MassInverse(ops.M_p)
        self.sparse = sp.issparse(ops.G)
        G = ops.G
        if self.sparse:
            self.schur = (G.T @ sp.diags(1.0 / self.Mp_inv.d) @ G).tocsr() if self.Mp_inv.d is not None else sp.csr_matrix(G.T @ self.Mp_inv(G.toarray()))
        else:
            self.schur = G.T @ self.Mp_inv(np.asarray(G))
        self._K = {}
        self.iterations = []

    def _lhs(self, dt):
        key = round(dt, 15)
        if key not in self._K:
            self._K[key] = (2.0 / dt) * self.ops.M_m + (dt / 2.0) * self.schur
        return self._K[key]

    def step(self, state, dt, h_mid, step_index=None):
        ops = self.ops
        K = self._lhs(dt)
        rhs = (2.0 / dt) * (ops.M_m @ state.m) + ops.G.T @ state.p + ops.g - ops.boundary_vector(h_mid)
        rhs = rhs + (dt / 2.0) * (ops.G.T @ self.Mp_inv(ops.f))
        mu = state.m.copy()

        def R(mu):
            return K @ mu + apply_damping(ops, mu, self.damping) - rhs

        r = R(mu)
        res = float(np.max(np.abs(r)))
        it = 0
        while res >= self.tol:
            if it >= self.max_iter:
                raise NewtonError(
                    f"midpoint Newton failed at step {step_index} (t = {state.t:.6g}), residual {res:.3e}",
                    res,
                    step=step_index,
                    time=state.t,
                )
            J = K + damping_jacobian(ops, mu, self.damping)
            delta = _solve(J, -r)
            lam, base = 1.0, float(np.linalg.norm(r))
            for _ in range(20):
                trial = mu + lam * delta
                r_try = R(trial)
                if np.linalg.norm(r_try) <= base or lam < 2**-19:
                    break
                lam *= 0.5
            mu, r = trial, r_try
            new = float(np.max(np.abs(r)))
            it += 1
            if it > 3 and new >= res and new < 1e3 * self.tol:
                res = new
                break
            res = new
        if res >= self.tol and not res < 1e3 * self.tol:
            raise NewtonError(f"midpoint Newton stagnated at step {step_index}", res, step=step_index, time=state.t)
        self.iterations.append(it)
        m_new = 2.0 * mu - state.m
        p_new = state.p + dt * self.Mp_inv(ops.f - ops.G @ mu)
        return State(p_new, m_new, state.t + dt)


def _boundary_function(ops, boundary):
    if boundary is None:
        net = ops.network
        return net.boundary_values, net.ramp_times()
    if callable(boundary):
        return lambda t: np.asarray(boundary(t), dtype=float), []
    ramps = list(boundary)
    return (lambda t: [r.value(t) for r in ramps]), [r.ramp_time for r in ramps]


def time_grid(dt, t_end, breakpoints=()):
    """Uniform grid of width ``dt`` with ``breakpoints`` inserted as grid points."""
    n = int(round(t_end / dt))
    if abs(n * dt - t_end) > 1e-9 * max(1.0, t_end):
        n = int(np.ceil(t_end / dt))
    grid = np.minimum(np.arange(n + 1) * dt, t_end)
    extra = [b for b in breakpoints if 0 < b < t_end]
    pts = np.concatenate([grid, extra, [t_end]])
    pts = np.unique(np.round(pts, 12))
    keep = np.concatenate(([True], np.diff(pts) > 1e-9 * max(1.0, dt)))
    return pts[keep]


def integrate(ops, initial: State, options: SolverOptions, boundary=None, *, damping=None) -> Trajectory:
    """Implicit midpoint integration from ``initial.t`` to ``options.t_end``.

    ``boundary`` is ``None`` (use the network's ramps), a callable ``t -> h`` or a
    sequence of :class:`~pipewave.netgraph.BoundaryRamp`. Ramp kinks and sample
    times are always grid points. When ``sample_times`` is ``None`` every step
    is recorded.
    """
    if not options.dt > 0:
        raise ValueError("dt must be positive")
    hfun, kinks = _boundary_function(ops, boundary)
    samples = options.sample_times
    grid = time_grid(options.dt, options.t_end, list(kinks) + list(samples or []))
    grid = grid[grid >= initial.t - 1e-12]
    if samples is None:
        want = np.ones(len(grid), dtype=bool)
    else:
        want = np.zeros(len(grid), dtype=bool)
        for ts in samples:
            want[int(np.argmin(np.abs(grid - ts)))] = True

    stepper = MidpointStepper(ops, damping, options.newton_tol, options.newton_max_iter)
    inverses = (stepper.Mp_inv, _MassInverse(ops.M_m))
    rec_t, rec_p, rec_m, rec_dp, rec_dm = [], [], [], [], []
    state = State(np.array(initial.p, dtype=float), np.array(initial.m, dtype=float), float(grid[0]))

    def record(st):
        dp, dm = time_derivatives(ops, st, hfun(st.t), damping, inverses)
        rec_t.append(st.t)
        rec_p.append(st.p.copy())
        rec_m.append(st.m.copy())
        rec_dp.append(dp)
        rec_dm.append(dm)

    if want[0]:
        record(state)
    for n in range(len(grid) - 1):
        dt = grid[n + 1] - grid[n]
        state = stepper.step(state, dt, hfun(0.5 * (grid[n] + grid[n + 1])), n)
        state.t = float(grid[n + 1])
        if want[n + 1]:
            record(state)
    return Trajectory(
        np.array(rec_t), np.array(rec_p), np.array(rec_m), np.array(rec_dp), np.array(rec_dm),
        stepper.iterations,
    )
