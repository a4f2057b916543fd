import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pipewave.damping import DampingModel, DampingWarning, check_assumption1, evaluate, evaluate_derivative
from pipewave.diagnostics import lemma1_bounds


def test_values():
    assert evaluate(DampingModel.power_abs(1, 1), 2.0) == 4.0
    assert evaluate(DampingModel.linear(3.0), -1.5) == -4.5
    for model in (DampingModel.linear(2), DampingModel.power_abs(1, 2), DampingModel.affine_power(1, 1, 1)):
        assert evaluate(model, 0.0) == 0.0


def test_derivatives():
    assert evaluate_derivative(DampingModel.power_abs(1, 1), 3.0) == 6.0
    assert evaluate_derivative(DampingModel.power_abs(1, 1), 0.0) == 0.0
    model = DampingModel.affine_power(0.5, 2.0, 2.0)
    assert evaluate_derivative(model, 1.0) == pytest.approx(6.5)
    fd = (evaluate(model, 1 + 1e-6) - evaluate(model, 1 - 1e-6)) / 2e-6
    assert fd == pytest.approx(6.5, rel=1e-8)


@given(
    st.sampled_from(["linear", "power_abs", "affine_power"]),
    st.floats(0, 2),
    st.floats(0, 2),
    st.sampled_from([1.0, 2.0, 1.5]),
    st.floats(-5, 5).filter(lambda m: abs(m) > 1e-3),
)
def test_derivative_matches_fd(family, alpha, beta, sigma, m):
    model = DampingModel.from_config({"family": family, "alpha": alpha, "beta": beta, "sigma": sigma})
    eps = 1e-6 * max(1.0, abs(m))
    fd = (evaluate(model, m + eps) - evaluate(model, m - eps)) / (2 * eps)
    assert fd == pytest.approx(evaluate_derivative(model, m), rel=1e-6, abs=1e-8)
    # odd and monotone
    assert evaluate(model, -m) == pytest.approx(-evaluate(model, m))
    assert evaluate(model, m) * m >= 0


def test_array_evaluation():
    m = np.linspace(-2, 2, 9)
    np.testing.assert_allclose(evaluate(DampingModel.power_abs(), m), np.abs(m) * m)


def test_config_roundtrip():
    model = DampingModel.affine_power(0.3, 1.2, 2.0)
    assert DampingModel.from_config(model.to_config()) == model


def test_bad_parameters():
    with pytest.raises(ValueError):
        DampingModel("cubic")
    with pytest.raises(ValueError):
        DampingModel.linear(-1.0)


def test_assumption_reports():
    rep = check_assumption1(DampingModel.linear(1.0), 10.0)
    assert rep.satisfies_d0_positive and rep.d0 == 1.0
    with pytest.warns(DampingWarning):
        rep = check_assumption1(DampingModel.power_abs(1, 1), 10.0)
    assert not rep.satisfies_d0_positive and rep.d0 == 0.0
    rep = check_assumption1(DampingModel.affine_power(0.1, 1, 1), 10.0)
    assert (rep.d0, rep.d1, rep.d2) == pytest.approx((0.1, 0.1, 2.0))
    with pytest.raises(ValueError):
        check_assumption1(DampingModel.linear(1.0), 0.0)


@given(st.floats(0, 2), st.floats(0.01, 2), st.sampled_from([1.0, 2.0]), st.floats(0.1, 20))
def test_growth_bound_holds(alpha, beta, sigma, bound):
    model = DampingModel.affine_power(beta, alpha, sigma)
    rep = check_assumption1(model, bound, warn=False)
    m = np.linspace(-bound, bound, 101)
    dp = evaluate_derivative(model, m)
    assert np.all(dp >= rep.d0 - 1e-12)
    assert np.all(dp <= rep.d1 + rep.d2 * np.abs(m) ** rep.sigma + 1e-9)


def test_lemma1():
    lin = check_assumption1(DampingModel.linear(1.0), 1.0)
    out = lemma1_bounds(lin)
    assert out["applicable"] and out["M"] == 0 and out["p_bound"] == 0
    assert lemma1_bounds(lin, f_norm=0, g_norm=1, h_norm=0)["M"] == pytest.approx(1.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DampingWarning)
        quad = check_assumption1(DampingModel.power_abs(), 1.0)
    assert lemma1_bounds(quad, g_norm=1)["applicable"] is False


def test_unknown_family_in_config():
    with pytest.raises(ValueError, match="cubic"):
        DampingModel.from_config({"family": "cubic"})
