"""Energies, decay-rate fits, a-priori bound evaluation and the decay experiment driver."""

from __future__ import annotations

import csv
import io
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import mor
from .damping import Assumption1Report, DampingModel
from .galerkin import assemble, build_space
from .netgraph import Network, paper_network
from .solvers import SolverOptions, State, integrate, solve_stationary, time_derivatives

log = logging.getLogger(__name__)

TABLE_TIMES = (0.0, 10.0, 20.0, 30.0, 40.0, 50.0)


class FitError(ValueError):
    pass


def energy(ops, deviation: State, *, lumped=False) -> float:
    """``1/2 ||q||^2 + 1/2 ||v||^2`` of a coefficient pair, summed over the network.

    Uses the exact flux mass by default; ``lumped=True`` switches to the
    quadrature norm the time stepping uses.
    """
    q, v = deviation.p, deviation.m
    Mm = ops.M_m if lumped else ops.M_m_exact
    return 0.5 * float(q @ (ops.M_p @ q)) + 0.5 * float(v @ (Mm @ v))


def derivative_energy(ops, state: State, h, *, lumped=False) -> float:
    """Energy of ``(dp/dt, dm/dt)`` computed from the semidiscrete equations."""
    dp, dm = time_derivatives(ops, state, h)
    return energy(ops, State(dp, dm), lumped=lumped)


def fit_gamma(times, energies, window=(10.0, 50.0)):
    """Least-squares slope of ``-log E`` against ``t`` over samples inside ``window``.

    Returns ``(gamma, log_c)`` with ``E(t) ~ exp(log_c - gamma t)``.
    """
    t = np.asarray(times, dtype=float)
    E = np.asarray(energies, dtype=float)
    lo, hi = window
    sel = (t >= lo - 1e-12) & (t <= hi + 1e-12)
    if sel.sum() < 2:
        raise FitError(f"need at least 2 samples in window {window}, got {int(sel.sum())}")
    if np.any(E[sel] <= 0):
        raise FitError("energies in the fit window must be positive")
    slope, intercept = np.polyfit(t[sel], np.log(E[sel]), 1)
    return float(-slope), float(intercept)


@dataclass
class DecayReport:
    sample_times: np.ndarray
    energies_state: np.ndarray
    energies_derivative: np.ndarray
    gamma: float
    fit_window: tuple
    log_c: float = float("nan")
    gamma_derivative: float = float("nan")
    log_c_derivative: float = float("nan")


def decay_report(ops, trajectory, steady: State, window=(10.0, 50.0), *, lumped=False) -> DecayReport:
    E = np.array([energy(ops, s - steady, lumped=lumped) for s in trajectory.states])
    Ed = np.array([energy(ops, s, lumped=lumped) for s in trajectory.dstates])
    gamma = log_c = gd = lcd = float("nan")
    try:
        gamma, log_c = fit_gamma(trajectory.times, E, window)
    except FitError:
        pass
    try:
        gd, lcd = fit_gamma(trajectory.times, Ed, window)
    except FitError:
        pass
    return DecayReport(np.asarray(trajectory.times), E, Ed, gamma, tuple(window), log_c, gd, lcd)


def lemma1_bounds(report: Assumption1Report, f_norm=0.0, g_norm=0.0, h_norm=0.0, c=1.0) -> dict:
    """Normalized stationary a-priori bounds (generic constant ``c``, default 1).

    ``M = c/d0 (|g| + |h| + d1 |f| + d2 |f|^(s+1)) + c |f|`` bounds the flux and
    ``c (|g| + |h| + d1 M + d2 M^(s+1))`` the pressure, where ``s`` is the
    growth exponent and ``|h|`` the l1 norm of the boundary values.
    """
    if not report.d0 > 0:
        return {"applicable": False, "M": float("nan"), "p_bound": float("nan")}
    s = report.sigma
    d0, d1, d2 = report.d0, report.d1, report.d2
    M = c / d0 * (g_norm + h_norm + d1 * f_norm + d2 * f_norm ** (s + 1)) + c * f_norm
    pb = c * (g_norm + h_norm + d1 * M + d2 * M ** (s + 1))
    return {"applicable": True, "M": float(M), "p_bound": float(pb)}


# -- experiment driver ----------------------------------------------------------------


@dataclass
class ExperimentConfig:
    """Everything the decay experiment needs; defaults reproduce the pipe network run."""

    network: Network = field(default_factory=paper_network)
    damping: DampingModel = field(default_factory=DampingModel.power_abs)
    options: SolverOptions = field(
        default_factory=lambda: SolverOptions(dt=0.01, t_end=50.0, sample_times=list(TABLE_TIMES))
    )
    rows: list = field(
        default_factory=lambda: [("fem", 0.2), ("fem", 0.05), ("spectral", 3), ("spectral", 10)]
    )
    training_h: float = 0.005
    training_samples: int = 501
    fit_window: tuple = (10.0, 50.0)
    reduced_quadrature: int | None = None
    lumped_energy: bool = False


@dataclass
class Table1Row:
    method: str
    param: float
    times: np.ndarray
    energies: np.ndarray
    gamma: float
    derivative_energies: np.ndarray = None
    gamma_derivative: float = float("nan")


def run_full_row(cfg: ExperimentConfig, method, param):
    space = build_space(cfg.network, method, param)
    ops = assemble(space, cfg.damping)
    net = cfg.network
    tol, it = cfg.options.newton_tol, cfg.options.newton_max_iter
    steady = solve_stationary(ops, net.final_boundary_values(), tol=tol, max_iter=it)
    start = solve_stationary(ops, net.boundary_values(0.0), tol=tol, max_iter=it, guess=steady)
    traj = integrate(ops, start, cfg.options)
    rep = decay_report(ops, traj, steady, cfg.fit_window, lumped=cfg.lumped_energy)
    return Table1Row(method, param, rep.sample_times, rep.energies_state, rep.gamma,
                     rep.energies_derivative, rep.gamma_derivative)


def train_reduction(cfg: ExperimentConfig):
    """Full-order training run at ``training_h``; returns ``(snapshots, steady, start)``."""
    space = build_space(cfg.network, "fem", cfg.training_h)
    ops = assemble(space, cfg.damping)
    net = cfg.network
    o = cfg.options
    steady = solve_stationary(ops, net.final_boundary_values(), tol=o.newton_tol, max_iter=o.newton_max_iter)
    start = solve_stationary(ops, net.boundary_values(0.0), tol=o.newton_tol, max_iter=o.newton_max_iter,
                             guess=steady)
    samples = list(np.linspace(0.0, o.t_end, cfg.training_samples))
    train_opts = SolverOptions(o.newton_tol, o.newton_max_iter, o.dt, o.t_end, samples)
    traj = integrate(ops, start, train_opts)
    snaps = mor.collect_snapshots(traj, ops, steady, training_h=cfg.training_h, n_samples=len(samples))
    return snaps, steady, start


def run_reduced_row(cfg: ExperimentConfig, snapshots, n_sv, model=None):
    model = model or mor.build_reduced(snapshots, n_sv)
    if cfg.reduced_quadrature:
        model = model.with_quadrature(mor.reduce_quadrature(model, cfg.reduced_quadrature))
    net = cfg.network
    o = cfg.options
    full_steady = snapshots.reference
    steady = mor.reduced_stationary(model, net.final_boundary_values(), guess=full_steady,
                                    tol=o.newton_tol, max_iter=o.newton_max_iter)
    start = mor.reduced_stationary(model, net.boundary_values(0.0), guess=steady,
                                   tol=o.newton_tol, max_iter=o.newton_max_iter)
    traj = mor.simulate_reduced(model, start, o)
    rep = decay_report(model.ops, traj, steady, cfg.fit_window, lumped=cfg.lumped_energy)
    return Table1Row("mor", n_sv, rep.sample_times, rep.energies_state, rep.gamma,
                     rep.energies_derivative, rep.gamma_derivative)


def _threads():
    try:
        return max(1, int(os.environ.get("PIPEWAVE_THREADS", "1")))
    except ValueError:
        return 1


def run_table1(cfg: ExperimentConfig | None = None) -> list:
    """Energy decay rows for every requested ``(method, param)``.

    ``method`` is ``fem`` (param = h), ``spectral`` (param = order) or ``mor``
    (param = n_sv; one shared training run at ``cfg.training_h``).
    """
    cfg = cfg or ExperimentConfig()
    full = [(m, p) for m, p in cfg.rows if m != "mor"]
    reduced = [p for m, p in cfg.rows if m == "mor"]
    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        futures = {(m, p): pool.submit(run_full_row, cfg, m, p) for m, p in full}
        results = {k: f.result() for k, f in futures.items()}
    if reduced:
        snaps, _, _ = train_reduction(cfg)
        for n in reduced:
            results[("mor", n)] = run_reduced_row(cfg, snaps, int(n))
    return [results[(m, p)] for m, p in cfg.rows]


def _fmt(x, digits=5):
    return format(float(x), f".{digits}g")


def table1_csv(rows, digits=5) -> str:
    """``method,param,E0,E10,...,gamma`` at fixed significant digits."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    times = rows[0].times if rows else TABLE_TIMES
    w.writerow(["method", "param"] + [f"E{_fmt(t)}" for t in times] + ["gamma"])
    for r in rows:
        w.writerow([r.method, _fmt(r.param)] + [_fmt(e, digits) for e in r.energies] + [_fmt(r.gamma, digits)])
    return buf.getvalue()
