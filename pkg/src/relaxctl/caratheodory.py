"""Support reduction of mixtures preserving the (drift, covariance, cost) moments.

Any point in the convex hull of vectors in R^D is a convex combination of at
most D+1 of them.  reduce_support strips a mixture down to that bound by
repeatedly walking along an affine dependence of the supported vectors until
a weight hits zero.  Applied per time step with the model's moment map
(b, sigma sigma*, h), this reduces any sliding control to at most d + d^2 + 2
atoms per step without changing the step's generator or running cost.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .controls import SlidingControl, StrictControl
from .errors import ValidationError
from .models import ModelSpec, moment_map
from .simulate import ParticleEnsemble

# Relative moment-preservation tolerance of the reduction.
MOMENT_RTOL = 1e-10
# Singular values below this multiple of the largest count as zero.
_NULLSPACE_RTOL = 1e-12
# Per-component matching tolerance (after scaling) for strict extraction.
STRICT_MATCH_TOL = 1e-8


class DegenerateReductionWarning(UserWarning):
    """Emitted when a dependence solve is too ill-conditioned to act on."""


def _affine_dependence(vectors: np.ndarray) -> np.ndarray | None:
    """Nonzero c with sum_i c_i v_i = 0 and sum_i c_i = 0, or None if unresolved.

    vectors has shape (s, D) with s > D + 1, so such a c exists; it is read off
    the smallest singular vector of the stacked system.
    """
    s = vectors.shape[0]
    a = np.vstack([vectors.T, np.ones(s)])  # (D+1, s)
    _, sing, vt = np.linalg.svd(a)
    c = vt[-1]
    scale = max(sing[0], 1.0)
    if np.linalg.norm(a @ c) > 1e-8 * scale:
        return None
    return c


def reduce_support(weights, vectors) -> np.ndarray:
    """Reduce a simplex vector to at most D+1 nonzero entries.

    The weighted moment sum_i w_i v_i, nonnegativity and the unit sum are all
    preserved; the support of the output is contained in that of the input.
    On a numerically degenerate instance the input is returned unchanged with
    a DegenerateReductionWarning.
    """
    w = np.asarray(weights, dtype=float).copy()
    v = np.asarray(vectors, dtype=float)
    if v.ndim != 2 or v.shape[0] != w.shape[0]:
        raise ValidationError("need one moment vector per weight")
    if (w < 0).any() or abs(w.sum() - 1.0) > 1e-9:
        raise ValidationError("weights must lie in the probability simplex")
    D = v.shape[1]
    while True:
        support = np.nonzero(w > 0.0)[0]
        if support.shape[0] <= D + 1:
            break
        c_sub = _affine_dependence(v[support])
        if c_sub is None:
            warnings.warn(
                "affine dependence solve degenerate; returning partially reduced weights",
                DegenerateReductionWarning,
            )
            break
        # Walk along -c until the first supported weight hits zero.  Flip the
        # sign if needed so some c_i is positive; ties go to the smallest index.
        if not (c_sub > 1e-15).any():
            c_sub = -c_sub
        pos = c_sub > 1e-15
        ratios = np.full(c_sub.shape, np.inf)
        ratios[pos] = w[support][pos] / c_sub[pos]
        theta = ratios.min()
        hit = int(np.argmin(ratios))
        w[support] = w[support] - theta * c_sub
        w[support[hit]] = 0.0
        np.maximum(w, 0.0, out=w)
        w /= w.sum()
    return w


def sliding_from_relaxed(
    model: ModelSpec, mu: SlidingControl, ensemble: ParticleEnsemble
) -> SlidingControl:
    """Per-step support reduction of mu along the ensemble mean state.

    The moment map is evaluated at the ensemble mean state and the cached
    empirical mean-fields, producing one deterministic sliding control with
    per-row support at most d + d^2 + 2.  Exact for models whose moment map
    does not depend on the state.
    """
    if ensemble.rng_manifest.get("control_fingerprint") != mu.fingerprint():
        raise ValidationError(
            "ensemble was not simulated under this control (manifest mismatch)"
        )
    tg = mu.timegrid
    times = tg.times
    new_weights = np.empty_like(mu.weights)
    for k in range(tg.K):
        xbar = ensemble.states[:, k, :].mean(axis=0)
        vectors = np.stack(
            [
                moment_map(
                    model,
                    times[k],
                    xbar,
                    ensemble.mf_psi[k],
                    ensemble.mf_phi[k],
                    ensemble.mf_varphi[k],
                    mu.grid.atom(i),
                ).value
                for i in range(mu.grid.p)
            ]
        )
        new_weights[k] = reduce_support(mu.weights[k], vectors)
    return SlidingControl(grid=mu.grid, timegrid=tg, weights=new_weights)


@dataclass(frozen=True)
class NotRepresentable:
    """Result marker: no single atom matches the averaged moment vector."""

    step: int
    residual: float

    def __bool__(self):
        return False


def extract_strict_if_convex(
    model: ModelSpec, mu: SlidingControl, ensemble: ParticleEnsemble
):
    """Strict control matching mu's averaged moment vector at every step.

    Per step, searches the action grid for an atom whose moment vector equals
    the mu-average within STRICT_MATCH_TOL per component (components scaled by
    their range over the grid).  Returns a StrictControl on success, otherwise
    a NotRepresentable naming the first failing step; the latter is a result,
    not an error.
    """
    if ensemble.rng_manifest.get("control_fingerprint") != mu.fingerprint():
        raise ValidationError(
            "ensemble was not simulated under this control (manifest mismatch)"
        )
    tg = mu.timegrid
    times = tg.times
    assignment = np.empty(tg.K, dtype=np.int64)
    for k in range(tg.K):
        xbar = ensemble.states[:, k, :].mean(axis=0)
        vectors = np.stack(
            [
                moment_map(
                    model,
                    times[k],
                    xbar,
                    ensemble.mf_psi[k],
                    ensemble.mf_phi[k],
                    ensemble.mf_varphi[k],
                    mu.grid.atom(i),
                ).value
                for i in range(mu.grid.p)
            ]
        )
        target = mu.weights[k] @ vectors
        scale = vectors.max(axis=0) - vectors.min(axis=0)
        scale[scale == 0.0] = 1.0
        residuals = np.abs(vectors - target) / scale
        worst = residuals.max(axis=1)
        matches = np.nonzero(worst <= STRICT_MATCH_TOL)[0]
        if matches.shape[0] == 0:
            return NotRepresentable(step=k, residual=float(worst.min()))
        assignment[k] = matches[0]  # smallest atom index
    return StrictControl(grid=mu.grid, timegrid=tg, assignment=assignment)
