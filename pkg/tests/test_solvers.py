import numpy as np
import pytest
from hypothesis import given, strategies as st

from pipewave.damping import DampingModel
from pipewave.diagnostics import derivative_energy, energy
from pipewave.galerkin import assemble, build_space
from pipewave.netgraph import BoundaryRamp, paper_network, single_pipe
from pipewave.solvers import (
    MidpointStepper,
    NewtonError,
    SolverOptions,
    State,
    initial_data,
    integrate,
    solve_stationary,
    stationary_jacobian,
    stationary_residual_vector,
    steady_residual,
    time_grid,
)

BACKENDS = [("fem", 0.25), ("fem", 0.05), ("spectral", 1), ("spectral", 6)]


def ops_for(net, disc, damping):
    return assemble(build_space(net, *disc), damping)


def pipe_fields(ops, p_fun, m_fun):
    return ops.space.interpolate(lambda k, x: p_fun(x), lambda k, x: m_fun(x))


@pytest.mark.parametrize("disc", BACKENDS)
def test_linear_pipe_oracle(disc):
    ops = ops_for(single_pipe(2.0, 1.0), disc, DampingModel.linear(1.0))
    s = solve_stationary(ops, [2.0, 1.0])
    p_ref, m_ref = pipe_fields(ops, lambda x: 2 - x, lambda x: np.ones_like(x))
    np.testing.assert_allclose(s.m, m_ref, atol=1e-10)
    np.testing.assert_allclose(s.p, p_ref, atol=1e-10)


@pytest.mark.parametrize("disc", BACKENDS)
def test_quadratic_pipe_oracle(disc):
    ops = ops_for(single_pipe(1.0, 0.0), disc, DampingModel.power_abs())
    s = solve_stationary(ops, [1.0, 0.0])
    p_ref, m_ref = pipe_fields(ops, lambda x: 1 - x, lambda x: np.ones_like(x))
    np.testing.assert_allclose(s.m, m_ref, atol=1e-10)
    np.testing.assert_allclose(s.p, p_ref, atol=1e-10)


@given(st.floats(-50, 120), st.sampled_from(BACKENDS[:3]))
def test_constant_pressure_no_flow(c, disc):
    net = paper_network()
    ops = ops_for(net, disc, DampingModel.power_abs())
    s = solve_stationary(ops, [c, c])
    assert np.abs(s.m).max() < 1e-10
    p_ref, _ = ops.space.interpolate(lambda k, x: np.full_like(x, c), lambda k, x: 0 * x)
    np.testing.assert_allclose(s.p, p_ref, atol=1e-9 * max(1, abs(c)))


def test_steady_residual_examples():
    ops = ops_for(single_pipe(), ("fem", 0.25), DampingModel.power_abs())
    zero = State(np.zeros(ops.n_pres), np.zeros(ops.n_flux))
    assert steady_residual(ops, zero, [1.0, 0.0]) == pytest.approx(np.abs(ops.boundary_vector([1.0, 0.0])).max())
    s = solve_stationary(ops, [1.0, 0.0])
    assert steady_residual(ops, s, [1.0, 0.0]) < 1e-10


def test_newton_superlinear():
    net = paper_network()
    ops = ops_for(net, ("fem", 0.1), DampingModel.power_abs())
    hist = []
    solve_stationary(ops, net.final_boundary_values(), history=hist)
    hist = np.array(hist)
    tail = hist[(hist < 1e-2) & (hist > 1e-13)]
    assert len(tail) >= 2
    rates = tail[1:] / tail[:-1]
    # successive contraction factors shrink (superlinear), and the last is tiny
    assert rates[-1] < 1e-2
    assert np.all(rates[1:] < rates[:-1])


def test_newton_failure_reports_residual():
    net = paper_network()
    ops = ops_for(net, ("fem", 0.2), DampingModel.power_abs())
    with pytest.raises(NewtonError) as exc:
        solve_stationary(ops, net.final_boundary_values(), max_iter=1)
    assert exc.value.residual > 0 and exc.value.history


@pytest.mark.parametrize("disc", [("fem", 0.2), ("spectral", 4)])
def test_stationary_jacobian_fd(disc, rng):
    net = paper_network()
    ops = ops_for(net, disc, DampingModel.affine_power(0.5, 1.0, 1.0))
    h = net.final_boundary_values()
    for _ in range(10):
        x = State(rng.normal(size=ops.n_pres) * 10, rng.normal(size=ops.n_flux) * 3)
        d = State(rng.normal(size=ops.n_pres), rng.normal(size=ops.n_flux))
        eps = 1e-6
        fd = (
            stationary_residual_vector(ops, State(x.p + eps * d.p, x.m + eps * d.m), h)
            - stationary_residual_vector(ops, State(x.p - eps * d.p, x.m - eps * d.m), h)
        ) / (2 * eps)
        jv = stationary_jacobian(ops, x.m) @ np.concatenate([d.p, d.m])
        assert np.linalg.norm(fd - jv) <= 1e-6 * np.linalg.norm(jv)


def test_initial_data_constant():
    net = single_pipe(3.0, 3.0)
    ops = ops_for(net, ("fem", 0.25), DampingModel.power_abs())
    s = initial_data(ops, lambda k, x: np.full_like(x, 3.0), lambda k, x: 0 * x)
    np.testing.assert_allclose(s.p, 3.0, atol=1e-12)
    np.testing.assert_allclose(s.m, 0.0, atol=1e-12)


@pytest.mark.parametrize("disc", [("fem", 0.25), ("spectral", 3)])
def test_initial_data_fixed_point(disc):
    # exact steady state of the linear pipe is reproduced by the discrete projection
    net = single_pipe(2.0, 1.0)
    ops = ops_for(net, disc, DampingModel.linear(1.0))
    s = initial_data(ops, lambda k, x: 2 - x, lambda k, x: np.ones_like(x))
    ref = solve_stationary(ops, [2.0, 1.0])
    np.testing.assert_allclose(s.p, ref.p, atol=1e-10)
    np.testing.assert_allclose(s.m, ref.m, atol=1e-10)


def test_time_grid_breakpoints():
    g = time_grid(0.3, 1.0, [0.5, 2.0])
    assert g[0] == 0 and g[-1] == 1.0 and 0.5 in g
    assert np.all(np.diff(g) > 0)


def test_options_validation():
    for kw in ({"dt": 0.0}, {"newton_tol": 0.0}, {"t_end": -1}, {"t_end": 1, "sample_times": [2]}):
        with pytest.raises(ValueError):
            SolverOptions(**kw)


def test_fixed_point_1000_steps():
    net = paper_network()
    ops = ops_for(net, ("fem", 0.2), DampingModel.power_abs())
    tol = 1e-10
    s = solve_stationary(ops, net.final_boundary_values(), tol=tol)
    traj = integrate(ops, s, SolverOptions(tol, 50, 0.01, 10.0, None), boundary=lambda t: net.final_boundary_values())
    assert len(traj) == 1001
    assert np.abs(traj.p - s.p).max() < 10 * tol
    assert np.abs(traj.m - s.m).max() < 10 * tol


def test_linear_damping_energy_nonincreasing():
    net = single_pipe(0.0, 0.0)
    ops = ops_for(net, ("fem", 0.25), DampingModel.linear(0.7))
    p0, m0 = ops.space.interpolate(lambda k, x: np.sin(3 * x), lambda k, x: np.cos(x))
    traj = integrate(ops, State(p0, m0), SolverOptions(dt=0.05, t_end=5.0))
    zero = State(np.zeros(ops.n_pres), np.zeros(ops.n_flux))
    E = [energy(ops, s - zero, lumped=True) for s in traj.states]
    assert np.all(np.diff(E) <= 1e-12)
    assert E[-1] < E[0]


def test_undamped_reversible_and_conservative():
    net = paper_network()
    ops = ops_for(net, ("fem", 0.2), DampingModel.linear(0.0))
    rng = np.random.default_rng(3)
    s0 = State(rng.normal(size=ops.n_pres), rng.normal(size=ops.n_flux))
    stepper = MidpointStepper(ops, tol=1e-12)
    h = [5.0, 5.0]
    s = s0.copy()
    for n in range(200):
        s = stepper.step(s, 0.02, h, n)
    for n in range(200):
        s = stepper.step(s, -0.02, h, n)
    assert np.abs(s.p - s0.p).max() < 1e-8 and np.abs(s.m - s0.m).max() < 1e-8


def test_dt_halving_second_order():
    net = paper_network()
    ops = ops_for(net, ("fem", 0.2), DampingModel.power_abs())
    steady = solve_stationary(ops, net.final_boundary_values())
    start = solve_stationary(ops, net.boundary_values(0.0), guess=steady)
    out = []
    for dt in (0.04, 0.02, 0.01):
        tr = integrate(ops, start, SolverOptions(dt=dt, t_end=10.0, sample_times=[10.0]))
        out.append(np.concatenate([tr.p[-1], tr.m[-1]]))
    r = np.linalg.norm(out[0] - out[1]) / np.linalg.norm(out[1] - out[2])
    assert 3.5 < r < 4.5


def test_derivative_energy_boundary_only():
    ops = ops_for(single_pipe(), ("fem", 0.25), DampingModel.power_abs())
    zero = State(np.zeros(ops.n_pres), np.zeros(ops.n_flux))
    Bh = ops.boundary_vector([1.0, 0.0])
    Mm = ops.M_m.diagonal()
    v = Bh / Mm
    assert derivative_energy(ops, zero, [1.0, 0.0], lumped=True) == pytest.approx(0.5 * v @ (Mm * v))
    # one-step finite difference of the integrator
    dt = 1e-5
    tr = integrate(ops, zero, SolverOptions(dt=dt, t_end=dt), boundary=lambda t: [1.0, 0.0])
    dm = (tr.m[-1] - tr.m[0]) / dt
    dp = (tr.p[-1] - tr.p[0]) / dt
    assert energy(ops, State(dp, dm), lumped=True) == pytest.approx(0.5 * v @ (Mm * v), rel=1e-4)


def test_steady_derivative_energy_vanishes():
    net = paper_network()
    ops = ops_for(net, ("fem", 0.2), DampingModel.power_abs())
    s = solve_stationary(ops, net.final_boundary_values())
    assert derivative_energy(ops, s, net.final_boundary_values()) < 1e-18


def test_trajectory_lookup():
    ops = ops_for(single_pipe(), ("fem", 0.5), DampingModel.linear(1.0))
    s = State(np.zeros(ops.n_pres), np.zeros(ops.n_flux))
    tr = integrate(ops, s, SolverOptions(dt=0.1, t_end=1.0, sample_times=[0.0, 0.5, 1.0]))
    assert list(tr.times) == [0.0, 0.5, 1.0]
    assert tr.at(0.5).t == 0.5
    with pytest.raises(KeyError):
        tr.at(0.25)


def test_ramp_kink_on_grid():
    net = single_pipe().with_ramps({"a": BoundaryRamp(1.0, 1.0, 0.37)})
    ops = ops_for(net, ("fem", 0.5), DampingModel.linear(1.0))
    s = State(np.zeros(ops.n_pres), np.zeros(ops.n_flux))
    tr = integrate(ops, s, SolverOptions(dt=0.1, t_end=1.0))
    assert np.any(np.isclose(tr.times, 0.37))


def test_non_finite_jacobian_rejected():
    from pipewave.solvers import SingularJacobianError, _solve
    import scipy.sparse as sp
    with pytest.raises(SingularJacobianError):
        _solve(sp.csr_matrix(np.array([[1.0, np.inf], [0.0, 1.0]])), np.ones(2))
    with pytest.raises(SingularJacobianError):
        _solve(np.array([[np.nan]]), np.ones(1))
