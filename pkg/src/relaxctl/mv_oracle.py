"""Independent value oracle for the linear-quadratic mean-variance problem.

For wealth dynamics dx = (rho x + pi (b - rho)) dt + pi s dW and the penalized
objective J(pi) = -E[x_T] + mu Var[x_T], the efficient frontier gives

    Var[x_T] = (E[x_T] - A)^2 / (B - 1),
    A = x0 exp(int_0^T rho dt),  B = exp(int_0^T theta^2 dt),
    theta_t = (b_t - rho_t) / s_t,

so minimizing over the achievable means E yields

    J* = -A - (B - 1) / (4 mu).

A and B are obtained here by fourth-order Runge-Kutta integration of the
scalar adjoint ODEs A' = rho A, B' = theta^2 B, keeping the oracle free of
any Monte Carlo or optimizer machinery.  This module was written and frozen
against the closed-form constant-coefficient value before the control search
was built.
"""

from dataclasses import dataclass

import numpy as np


def _rk4(f, y0: float, t0: float, t1: float, steps: int) -> float:
    h = (t1 - t0) / steps
    y = y0
    t = t0
    for _ in range(steps):
        k1 = f(t, y)
        k2 = f(t + 0.5 * h, y + 0.5 * h * k1)
        k3 = f(t + 0.5 * h, y + 0.5 * h * k2)
        k4 = f(t + h, y + h * k3)
        y += (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        t += h
    return y


@dataclass(frozen=True)
class MeanVarianceOracle:
    value: float  # optimal penalized cost J*
    mean_target: float  # optimal E[x_T]
    growth: float  # A = x0 exp(int rho)
    squared_sharpe: float  # int_0^T theta^2 dt
    pi_star_t0: float  # deterministic-control optimum pi at t = 0


def solve_mean_variance(
    mu_pen: float = 1.0,
    rate=lambda t: 0.02,
    appreciation=lambda t: 0.08,
    volatility=lambda t: 0.2,
    x0: float = 1.0,
    horizon: float = 1.0,
    steps: int = 20000,
) -> MeanVarianceOracle:
    """Integrate the adjoint ODEs and return the optimal penalized cost."""

    def theta2(t):
        th = (appreciation(t) - rate(t)) / volatility(t)
        return th * th

    growth = _rk4(lambda t, y: rate(t) * y, x0, 0.0, horizon, steps)
    bfac = _rk4(lambda t, y: theta2(t) * y, 1.0, 0.0, horizon, steps)
    sq = float(np.log(bfac))
    value = -growth - (bfac - 1.0) / (4.0 * mu_pen)
    mean_target = growth + (bfac - 1.0) / (2.0 * mu_pen)
    # Pointwise minimizer over deterministic pi at t = 0; its cost differs from
    # the feedback optimum only at order (int theta^2)^2, useful for sizing
    # action grids.
    r0 = growth / x0  # exp(int_0^T rho)
    pi0 = (appreciation(0.0) - rate(0.0)) / (
        2.0 * mu_pen * volatility(0.0) ** 2 * r0
    )
    return MeanVarianceOracle(
        value=float(value),
        mean_target=float(mean_target),
        growth=float(growth),
        squared_sharpe=sq,
        pi_star_t0=float(pi0),
    )


def suggested_action_grid(oracle: MeanVarianceOracle, atoms: int = 21) -> np.ndarray:
    """Evenly spaced allocation atoms spanning [0, 2 * pi_star]."""
    return np.linspace(0.0, 2.0 * oracle.pi_star_t0, atoms)
