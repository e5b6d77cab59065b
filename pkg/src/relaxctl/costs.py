"""Monte Carlo cost estimation for strict and relaxed controls.

The relaxed cost per particle is

    sum_k dt * sum_i alpha_i(t_k) h(t_k, X^j_k, m_varphi(k), a_i) + g(X^j_K, m_lam)

with the mean-field arguments taken from the ensemble-level cached empirical
means (shared by every particle), matching the McKean-Vlasov structure where
E[varphi(X_t)] is a deterministic function of time.
"""

from dataclasses import dataclass

import numpy as np

from .controls import SlidingControl, TimeGrid
from .errors import ValidationError
from .models import ModelSpec
from .simulate import ParticleEnsemble, simulate_relaxed


@dataclass(frozen=True)
class CostEstimate:
    mean: float
    stderr: float
    N: int
    per_particle: np.ndarray | None = None

    def to_json_dict(self) -> dict:
        return {"mean": self.mean, "stderr": self.stderr, "N": self.N}


def _estimate_from_samples(samples: np.ndarray, keep_samples: bool) -> CostEstimate:
    samples = np.asarray(samples, dtype=float)
    n = samples.shape[0]
    mean = float(np.mean(samples))
    stderr = 0.0 if n < 2 else float(np.std(samples, ddof=1) / np.sqrt(n))
    return CostEstimate(
        mean=mean, stderr=stderr, N=n, per_particle=samples if keep_samples else None
    )


def per_particle_costs(
    model: ModelSpec, ensemble: ParticleEnsemble, control: SlidingControl
) -> np.ndarray:
    """Realized cost of every particle path under the given sliding control."""
    if ensemble.rng_manifest.get("control_fingerprint") != control.fingerprint():
        raise ValidationError(
            "ensemble was not simulated under this control (manifest mismatch)"
        )
    tg = ensemble.timegrid
    dt = tg.dt
    times = tg.times
    running = np.zeros(ensemble.N)
    for k in range(tg.K):
        row = control.weights[k]
        xk = ensemble.states[:, k, :]
        y = ensemble.mf_varphi[k]
        for i in np.nonzero(row > 0.0)[0]:
            a = control.grid.atom(int(i))
            running += dt * row[i] * np.asarray(model.h(times[k], xk, y, a), dtype=float)
    terminal = np.asarray(
        model.g(ensemble.states[:, tg.K, :], ensemble.mf_lam_final), dtype=float
    )
    return running + terminal


def estimate_cost(
    model: ModelSpec,
    ensemble: ParticleEnsemble,
    control: SlidingControl,
    keep_samples: bool = False,
) -> CostEstimate:
    """Monte Carlo estimate of the (relaxed) expected cost with standard error."""
    return _estimate_from_samples(
        per_particle_costs(model, ensemble, control), keep_samples
    )


def paired_cost_difference(
    model: ModelSpec,
    c1: SlidingControl,
    c2: SlidingControl,
    N: int,
    grid: TimeGrid,
    seed: int,
    keep_samples: bool = False,
) -> CostEstimate:
    """Estimate J(c1) - J(c2) with common random numbers.

    Both controls are simulated from the same seed so shared atoms see
    identical noise; the per-particle differences carry the reduced variance.
    """
    if c1.grid.atoms.shape != c2.grid.atoms.shape or not np.array_equal(
        c1.grid.atoms, c2.grid.atoms
    ):
        raise ValidationError("paired controls must share the action grid")
    if c1.timegrid != grid or c2.timegrid != grid:
        raise ValidationError("paired controls must live on the simulation time grid")
    e1, _ = simulate_relaxed(model, c1, N, grid, seed)
    e2, _ = simulate_relaxed(model, c2, N, grid, seed)
    diffs = per_particle_costs(model, e1, c1) - per_particle_costs(model, e2, c2)
    return _estimate_from_samples(diffs, keep_samples)
