"""Chattering approximation: rapidly-switching strict controls for a mixture.

The horizon is cut into n equal slices.  Within each slice the sliding
control's (slice-averaged) weights are realized as consecutive blocks of
sub-steps, one block per atom, block lengths given by largest-remainder
rounding of alpha_i * (sub-steps per slice).  As n grows the time-integrated
action statistics of the chattered control converge to those of the mixture
at rate 1/n.
"""

from dataclasses import dataclass

import numpy as np

from .controls import (
    SlidingControl,
    StrictControl,
    embed_strict,
    pushforward_test,
)
from .costs import per_particle_costs
from .errors import ValidationError
from .models import ModelSpec
from .simulate import simulate_naive_relaxed, simulate_relaxed, simulate_strict


def largest_remainder_counts(weights: np.ndarray, total: int) -> np.ndarray:
    """Integer block lengths summing to `total`, proportional to `weights`.

    Floors the exact shares, then hands the remaining units to the largest
    fractional parts; ties go to the smallest atom index.
    """
    shares = np.asarray(weights, dtype=float) * total
    counts = np.floor(shares).astype(np.int64)
    remainder = int(round(total - counts.sum()))
    if remainder > 0:
        # stable sort => ties broken by smallest index
        order = np.argsort(-(shares - counts), kind="stable")
        counts[order[:remainder]] += 1
    return counts


def resample_to_slices(mu: SlidingControl, n: int) -> SlidingControl:
    """Slice-average the weights so the control is constant on n equal slices."""
    K = mu.timegrid.K
    if K % n != 0:
        raise ValidationError(f"K = {K} is not divisible by the slice count n = {n}")
    per = K // n
    sliced = mu.weights.reshape(n, per, mu.grid.p).mean(axis=1)
    w = np.repeat(sliced, per, axis=0)
    return SlidingControl(grid=mu.grid, timegrid=mu.timegrid, weights=w)


def chatter(mu: SlidingControl, n: int) -> StrictControl:
    """Strict control whose slice occupation fractions realize mu's weights.

    Requires K divisible by n*p so every slice has enough sub-steps to hold
    one block per atom.  mu is first resampled to be constant on the slices.
    """
    K, p = mu.timegrid.K, mu.grid.p
    if n < 1:
        raise ValidationError("slice count n must be >= 1")
    if K % (n * p) != 0:
        need = n * p * max(1, -(-K // (n * p)))
        raise ValidationError(
            f"K = {K} is not divisible by n*p = {n * p}; "
            f"least compatible K >= {K} is {need}"
        )
    sliced = resample_to_slices(mu, n)
    per = K // n
    assignment = np.empty(K, dtype=np.int64)
    for s in range(n):
        counts = largest_remainder_counts(sliced.weights[s * per], per)
        pos = s * per
        for i in range(p):
            assignment[pos : pos + counts[i]] = i
            pos += counts[i]
    return StrictControl(grid=mu.grid, timegrid=mu.timegrid, assignment=assignment)


def chatter_error(mu: SlidingControl, n: int, g) -> float:
    """sup over grid times of the time-integrated action gap under g.

    max_t | int_0^t g(s, u^n_s) ds - int_0^t int g(s, a) mu_s(da) ds |,
    evaluated exactly on the grid (the integrands are piecewise constant).
    """
    chattered = embed_strict(chatter(mu, n))
    times = mu.timegrid.times
    return max(
        abs(pushforward_test(g, chattered, t) - pushforward_test(g, mu, t))
        for t in times
    )


@dataclass(frozen=True)
class ConvergenceRow:
    n: int
    j_strict: float
    j_strict_stderr: float
    j_relaxed: float
    j_relaxed_stderr: float
    j_diff: float
    j_diff_stderr: float
    sup_diff: float | None  # coupled path statistic; drift-only models only


def convergence_study(
    model: ModelSpec,
    mu: SlidingControl,
    ns,
    N: int,
    seed: int,
) -> list[ConvergenceRow]:
    """Cost and path statistics of chatter(mu, n) against mu across n.

    Costs are estimated with a common seed.  For models whose diffusion does
    not depend on the action the strict and relaxed paths can share a single
    Brownian driver, and the coupled E[sup_t |X^n_t - X_t|^2] is reported;
    for controlled diffusions the pathwise coupling is representation
    dependent and only the cost gap is meaningful.
    """
    grid = mu.timegrid
    ens_rel, _ = simulate_relaxed(model, mu, N, grid, seed)
    cost_rel = per_particle_costs(model, ens_rel, mu)
    rows = []
    for n in ns:
        u_n = chatter(mu, n)
        ens_str = simulate_strict(model, u_n, N, grid, seed)
        cost_str = per_particle_costs(model, ens_str, embed_strict(u_n))
        diff = cost_str - cost_rel
        sup_diff = None
        if not model.sigma_controlled:
            # Shared driver: both regimes through the single-driver dynamics,
            # which coincide with the correct ones when sigma ignores the atom.
            e1 = simulate_naive_relaxed(model, embed_strict(u_n), N, grid, seed)
            e2 = simulate_naive_relaxed(model, mu, N, grid, seed)
            gap = np.abs(e1.states - e2.states).max(axis=2).max(axis=1)
            sup_diff = float(np.mean(gap**2))

        def stats(v):
            m = float(np.mean(v))
            se = 0.0 if v.shape[0] < 2 else float(np.std(v, ddof=1) / np.sqrt(v.shape[0]))
            return m, se

        js, jss = stats(cost_str)
        jr, jrs = stats(cost_rel)
        jd, jds = stats(diff)
        rows.append(
            ConvergenceRow(
                n=int(n),
                j_strict=js,
                j_strict_stderr=jss,
                j_relaxed=jr,
                j_relaxed_stderr=jrs,
                j_diff=jd,
                j_diff_stderr=jds,
                sup_diff=sup_diff,
            )
        )
    return rows
