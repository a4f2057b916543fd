"""Structure-preserving POD reduction of the network wave system.

The reduced flux space ``V_H`` collects

* POD modes of the flux fluctuations (mass-weighted),
* discrete antiderivatives of the POD modes of the pressure fluctuations and of
  the reference pressure, and
* the Kirchhoff-feasible edgewise constants (the kernel of ``d/dx``).

The reduced pressure space is then *defined* as ``Q_H = d/dx V_H``, so the
reduced pair is compatible by construction and the reference steady state is
reproduced exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.optimize as sopt
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .galerkin import CompatibilityPair, Operators, generalized_extremes, LOWER, UPPER
from .solvers import SolverOptions, State, Trajectory, integrate, solve_stationary

TRUNCATION = 1e-12


class ReductionError(ValueError):
    pass


class QuadratureError(ValueError):
    pass


@dataclass
class SnapshotSet:
    """Fluctuation snapshots ``x(t_k) - x_ref`` as columns."""

    times: np.ndarray
    p: np.ndarray  # (n_pres, n_snap)
    m: np.ndarray  # (n_flux, n_snap)
    ops: Operators
    reference: State
    metadata: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.times)

    def singular_values(self, which="m"):
        """Mass-weighted singular values of the flux (``"m"``) or pressure (``"p"``) snapshots."""
        X, M = (self.m, self.ops.M_m) if which == "m" else (self.p, self.ops.M_p)
        lam = np.linalg.eigvalsh(X.T @ (M @ X))[::-1]
        return np.sqrt(np.clip(lam, 0.0, None))

    def rank(self, which="m"):
        s = self.singular_values(which)
        if s.size == 0 or s[0] == 0:
            return 0
        return int(np.sum(s > TRUNCATION * s[0]))


def collect_snapshots(trajectory: Trajectory, ops: Operators, reference: State, **metadata) -> SnapshotSet:
    if len(trajectory) == 0:
        raise ReductionError("trajectory has no samples")
    P = (trajectory.p - reference.p).T
    Mm = (trajectory.m - reference.m).T
    return SnapshotSet(np.asarray(trajectory.times), P, Mm, ops, reference, dict(metadata))


def pod_modes(X, M, n):
    """Leading ``n`` M-orthonormal POD modes of the columns of ``X`` (method of snapshots)."""
    C = X.T @ (M @ X)
    lam, V = np.linalg.eigh(C)
    order = np.argsort(lam)[::-1]
    lam, V = lam[order], V[:, order]
    if n > len(lam) or lam[n - 1] <= (TRUNCATION**2) * max(lam[0], 1e-300):
        rank = int(np.sum(lam > (TRUNCATION**2) * max(lam[0], 1e-300)))
        raise ReductionError(f"n_sv = {n} exceeds the snapshot rank {rank}")
    return X @ (V[:, :n] / np.sqrt(lam[:n])), np.sqrt(np.clip(lam, 0, None))


def _mass_factor(M):
    """Upper factor ``R`` with ``M = R^T R``."""
    M = _dense(M)
    d = np.diag(M)
    if np.array_equal(M, np.diag(d)):
        return np.diag(np.sqrt(d))
    return np.linalg.cholesky(M).T


def mass_orthonormalize(X, M, tol=TRUNCATION):
    """M-orthonormal basis of ``span(X)``; singular values below ``tol`` (relative) are dropped."""
    if X.shape[1] == 0:
        return X
    R = _mass_factor(M)
    U, s, _ = np.linalg.svd(R @ X, full_matrices=False)
    keep = s > tol * max(s[0], 1e-300)
    return np.linalg.solve(R, U[:, keep])


def _antiderivatives(ops: Operators, Q):
    """Flux fields ``v`` in V with ``d/dx v = q`` for each pressure column ``q``.

    Minimal M_m-norm solutions from ``[[M_m, G^T], [G, 0]] [v; y] = [0; M_p q]``.
    """
    n_m, n_p = ops.n_flux, ops.n_pres
    A = sp.bmat([[sp.csr_matrix(ops.M_m), sp.csr_matrix(ops.G).T], [sp.csr_matrix(ops.G), None]], format="csc")
    lu = spla.splu(A)
    rhs = np.vstack([np.zeros((n_m, Q.shape[1])), ops.M_p @ Q])
    sol = lu.solve(rhs)
    return sol[:n_m]


@dataclass
class ReducedModel:
    """Reduced pair ``(Q_H, V_H)`` with projected operators.

    ``W_m`` and ``W_p`` hold the bases in training-space coefficients; they are
    orthonormal in the lumped flux mass and the pressure mass respectively.
    """

    W_m: np.ndarray
    W_p: np.ndarray
    ops: Operators
    training_ops: Operators
    n_sv: int
    metadata: dict = field(default_factory=dict)

    @property
    def network(self):
        return self.training_ops.network

    @property
    def n_flux(self):
        return self.W_m.shape[1]

    @property
    def n_pres(self):
        return self.W_p.shape[1]

    def lift(self, state: State) -> State:
        return State(self.W_p @ state.p, self.W_m @ state.m, state.t)

    def restrict(self, state: State) -> State:
        """Mass-orthogonal projection of a training-space state."""
        t = self.training_ops
        return State(self.W_p.T @ (t.M_p @ state.p), self.W_m.T @ (t.M_m @ state.m), state.t)

    def lift_trajectory(self, traj: Trajectory) -> Trajectory:
        return Trajectory(
            traj.times, traj.p @ self.W_p.T, traj.m @ self.W_m.T, traj.dp @ self.W_p.T, traj.dm @ self.W_m.T,
            traj.newton_iterations,
        )

    def compatibility_pair(self) -> CompatibilityPair:
        full = self.training_ops.space.compatibility_pair()
        W_m, W_p = self.W_m, self.W_p
        return CompatibilityPair(
            G=W_p.T @ full.G @ W_m,
            M_q=W_p.T @ full.M_q @ W_p,
            K=W_m.T @ full.K @ W_m,
            M_v=W_m.T @ full.M_v @ W_m,
            kernel_loads=W_m.T @ full.kernel_loads,
            kernel_norms=full.kernel_norms,
        )

    def with_quadrature(self, rule: "ReducedQuadrature") -> "ReducedModel":
        """Copy whose damping term uses ``rule`` instead of the full nodal quadrature."""
        if not rule.report.satisfied:
            raise QuadratureError("refusing to install a reduced quadrature without a passing certificate")
        full_basis = _dense(self.training_ops.quad_basis @ self.W_m)
        ops = _copy_ops(self.ops, quad_basis=full_basis[rule.indices], quad_weights=rule.weights)
        model = ReducedModel(self.W_m, self.W_p, ops, self.training_ops, self.n_sv, dict(self.metadata))
        ops.space = model
        model.metadata["quadrature_points"] = int(len(rule.indices))
        return model


def _dense(A):
    return A.toarray() if sp.issparse(A) else np.asarray(A)


def _copy_ops(ops, **changes):
    fields = dict(
        M_p=ops.M_p, M_m=ops.M_m, G=ops.G, B=ops.B, M_m_exact=ops.M_m_exact, quad_basis=ops.quad_basis,
        quad_weights=ops.quad_weights, damping=ops.damping, f=ops.f, g=ops.g, space=ops.space,
    )
    fields.update(changes)
    return Operators(**fields)


def project_operators(ops: Operators, W_m, W_p) -> Operators:
    return Operators(
        M_p=W_p.T @ (ops.M_p @ W_p),
        M_m=W_m.T @ (ops.M_m @ W_m),
        G=W_p.T @ (ops.G @ W_m),
        B=_dense(W_m.T @ ops.B),
        M_m_exact=W_m.T @ (ops.M_m_exact @ W_m),
        quad_basis=_dense(ops.quad_basis @ W_m),
        quad_weights=ops.quad_weights,
        damping=ops.damping,
        f=W_p.T @ ops.f,
        g=W_m.T @ ops.g,
    )


def build_reduced(snapshots: SnapshotSet, n_sv: int, *, include_reference=True) -> ReducedModel:
    """POD reduction preserving ``Q_H = d/dx V_H`` and ``ker(d/dx) in V_H``."""
    ops = snapshots.ops
    rank_m, rank_p = snapshots.rank("m"), snapshots.rank("p")
    rank = min(rank_m, rank_p)
    if n_sv < 1 or n_sv > rank:
        raise ReductionError(f"n_sv = {n_sv} must lie in [1, snapshot rank = {rank}]")
    Mp = ops.M_p
    flux_modes, _ = pod_modes(snapshots.m, ops.M_m, n_sv)
    pres_modes, _ = pod_modes(snapshots.p, Mp, n_sv)
    candidates = [_mass_solve(Mp, _dense(ops.G @ flux_modes)), pres_modes]
    if include_reference:
        candidates.append(snapshots.reference.p[:, None])
    # Q_H first, then V_H = ker(d/dx) + antiderivatives of Q_H: same span as the
    # modes themselves, but G is then one-to-one from the antiderivative part
    W_p = mass_orthonormalize(np.column_stack(candidates), Mp)
    kernel = mass_orthonormalize(ops.space.kernel_flux(), ops.M_m)
    W_m = np.column_stack([kernel, mass_orthonormalize(_antiderivatives(ops, W_p), ops.M_m)])
    red_ops = project_operators(ops, W_m, W_p)
    model = ReducedModel(
        W_m, W_p, red_ops, ops, n_sv,
        dict(snapshots.metadata, n_sv=n_sv, n_snapshots=len(snapshots), dim_V=W_m.shape[1], dim_Q=W_p.shape[1]),
    )
    red_ops.space = model
    return model


def _mass_solve(M, B):
    if sp.issparse(M):
        d = M.diagonal()
        if (M - sp.diags(d)).count_nonzero() == 0:
            return B / d[:, None]
        return spla.splu(M.tocsc()).solve(B)
    return np.linalg.solve(M, B)


def simulate_reduced(model: ReducedModel, initial: State, options: SolverOptions, boundary=None) -> Trajectory:
    """Integrate the reduced system.

    ``initial`` may be reduced or a training-space state; it is recognized by
    its length, so pass ``model.restrict(state)`` when the two dimensions agree.
    """
    if initial.m.shape[0] != model.n_flux:
        initial = model.restrict(initial)
    return integrate(model.ops, initial, options, boundary)


def reduced_stationary(model: ReducedModel, h, **kw) -> State:
    guess = kw.pop("guess", None)
    if guess is not None and guess.m.shape[0] != model.n_flux:
        guess = model.restrict(guess)
    return solve_stationary(model.ops, h, guess=guess, **kw)


# -- reduced quadrature -----------------------------------------------------------------


@dataclass(frozen=True)
class QuadratureCertificate:
    lambda_min: float  # relative to the full nodal rule
    lambda_max: float
    l2_lambda_min: float  # relative to the exact L2 Gram
    l2_lambda_max: float
    satisfied: bool


@dataclass(frozen=True)
class ReducedQuadrature:
    indices: np.ndarray  # rows of the full quadrature kept
    weights: np.ndarray
    report: QuadratureCertificate


def reduce_quadrature(model: ReducedModel, target_point_count: int) -> ReducedQuadrature:
    """Nonnegative-weight subset of the nodal quadrature matching the ``V_H`` Gram moments.

    Weights come from nonnegative least squares on the products of basis
    functions; the result is accepted only if the induced norm is equivalent to
    the L2 norm on ``V_H`` with eigenvalues in ``[1/4, 9/4]``.
    """
    U = _dense(model.training_ops.quad_basis @ model.W_m)
    w_full = model.training_ops.quad_weights
    n_q, n_v = U.shape
    exact = model.ops.M_m_exact
    full_gram = U.T @ (w_full[:, None] * U)
    if target_point_count >= n_q:
        idx, w = np.arange(n_q), w_full.copy()
    else:
        if target_point_count < n_v:
            raise QuadratureError(
                f"{target_point_count} points cannot resolve a {n_v}-dimensional space (rank deficiency)"
            )
        iu = np.triu_indices(n_v)
        A = U[:, iu[0]] * U[:, iu[1]]  # (n_q, n_moments)
        b = A.T @ w_full
        scale = np.linalg.norm(A, axis=0).max()
        w, _ = sopt.nnls(A.T / scale, b / scale, maxiter=50 * n_q)
        support = np.flatnonzero(w > 0)
        if support.size > target_point_count:
            support = np.sort(support[np.argsort(w[support])[::-1][:target_point_count]])
            ws, _ = sopt.nnls(A[support].T / scale, b / scale, maxiter=50 * n_q)
            w = np.zeros(n_q)
            w[support] = ws
            support = np.flatnonzero(w > 0)
        idx, w = support, w[support]
        if idx.size < n_v:
            raise QuadratureError(f"moment matching left only {idx.size} points for dimension {n_v}")
    gram = U[idx].T @ (w[:, None] * U[idx])
    try:
        lo, hi = generalized_extremes(gram, full_gram)
        l2_lo, l2_hi = generalized_extremes(gram, exact)
    except Exception as err:  # singular Gram
        raise QuadratureError(f"certification failed: {err}") from err
    ok = l2_lo >= LOWER and l2_hi <= UPPER
    cert = QuadratureCertificate(lo, hi, l2_lo, l2_hi, bool(ok))
    if not ok:
        raise QuadratureError(
            f"reduced quadrature violates norm equivalence: eigenvalues [{l2_lo:.4g}, {l2_hi:.4g}]"
        )
    return ReducedQuadrature(idx, w, cert)


# -- persistence ----------------------------------------------------------------------------


def save_basis(model: ReducedModel, path):
    """Write both bases plus a JSON header (dims, n_sv, training metadata) to ``.npz``."""
    header = dict(model.metadata)
    header.update(
        n_sv=model.n_sv,
        full_flux_dim=int(model.W_m.shape[0]),
        full_pres_dim=int(model.W_p.shape[0]),
        dim_V=int(model.W_m.shape[1]),
        dim_Q=int(model.W_p.shape[1]),
    )
    with open(path, "wb") as fh:
        np.savez(fh, W_m=model.W_m, W_p=model.W_p, header=np.array(json.dumps(header, sort_keys=True)))


def load_basis(path, training_ops: Operators) -> ReducedModel:
    with np.load(path) as data:
        W_m, W_p = data["W_m"], data["W_p"]
        header = json.loads(str(data["header"]))
    if W_m.shape[0] != training_ops.n_flux or W_p.shape[0] != training_ops.n_pres:
        raise ReductionError(
            f"basis dimensions {W_m.shape[0]}/{W_p.shape[0]} do not match training space "
            f"{training_ops.n_flux}/{training_ops.n_pres}"
        )
    red_ops = project_operators(training_ops, W_m, W_p)
    model = ReducedModel(W_m, W_p, red_ops, training_ops, int(header["n_sv"]), header)
    red_ops.space = model
    return model
