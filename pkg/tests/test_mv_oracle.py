import numpy as np
import pytest

from relaxctl.mv_oracle import solve_mean_variance, suggested_action_grid


def test_constant_coefficients_match_closed_form():
    oracle = solve_mean_variance()
    A = np.exp(0.02)
    B = np.exp(((0.08 - 0.02) / 0.2) ** 2)
    assert oracle.growth == pytest.approx(A, rel=1e-12)
    assert oracle.squared_sharpe == pytest.approx(0.09, rel=1e-10)
    assert oracle.value == pytest.approx(-A - (B - 1.0) / 4.0, rel=1e-12)
    assert oracle.mean_target == pytest.approx(A + (B - 1.0) / 2.0, rel=1e-12)


def test_reference_value():
    # frozen reference for the default parameter set
    assert solve_mean_variance().value == pytest.approx(-1.0437449, abs=1e-6)


def test_penalty_scaling():
    # a larger variance penalty pulls the optimum toward the riskless cost -A
    loose = solve_mean_variance(mu_pen=0.5)
    tight = solve_mean_variance(mu_pen=8.0)
    A = np.exp(0.02)
    assert loose.value < tight.value < -A + 0.05
    assert tight.mean_target < loose.mean_target


def test_time_varying_rate():
    oracle = solve_mean_variance(rate=lambda t: 0.02 + 0.01 * t, appreciation=lambda t: 0.02 + 0.01 * t + 0.06)
    assert oracle.growth == pytest.approx(np.exp(0.02 + 0.005), rel=1e-10)
    assert oracle.squared_sharpe == pytest.approx(0.09, rel=1e-10)


def test_zero_excess_return_means_no_risk():
    oracle = solve_mean_variance(appreciation=lambda t: 0.02)
    assert oracle.squared_sharpe == pytest.approx(0.0, abs=1e-14)
    assert oracle.value == pytest.approx(-np.exp(0.02), rel=1e-12)
    assert oracle.pi_star_t0 == 0.0


def test_suggested_grid_brackets_the_deterministic_optimum():
    oracle = solve_mean_variance()
    grid = suggested_action_grid(oracle, atoms=21)
    assert grid.shape == (21,)
    assert grid[0] == 0.0
    assert grid[-1] == pytest.approx(2.0 * oracle.pi_star_t0)
    # pi* for the default parameters: 0.06 / (2 * 0.04 * e^0.02) = 0.75 e^-0.02
    assert oracle.pi_star_t0 == pytest.approx(0.75 * np.exp(-0.02), rel=1e-10)
