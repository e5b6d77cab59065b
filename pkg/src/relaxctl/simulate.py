"""Interacting-particle Euler-Maruyama schemes for controlled mean-field SDEs.

Three dynamics regimes share one stepping loop:

* strict        -- one Brownian driver per particle, coefficients at the
                   assigned atom;
* naive relaxed -- atom-averaged coefficients against a single driver (the
                   construction the counterexample rules out);
* relaxed       -- the martingale-measure dynamics: per-atom drivers weighted
                   by sqrt(alpha_i), realizing a measure whose covariance is
                   dt * mu_t(da).

The mean-field arguments are the empirical means over the same ensemble,
recomputed at every step.  Noise is addressed per (seed, step, atom slot), so
a strict control and its Dirac embedding see bit-identical increments; the
naive regime draws from its own slot (one past the last atom).
"""

from dataclasses import dataclass

import numpy as np

from . import rng
from .controls import SlidingControl, StrictControl, TimeGrid, embed_strict
from .errors import SimulationError, ValidationError
from .models import ModelSpec

# Abort threshold: |X| beyond this multiple of (1 + |x0|) means blow-up.
EXPLOSION_FACTOR = 1e6

# Materialize driver increments eagerly only below this element count.
_MATERIALIZE_LIMIT = 20_000_000


@dataclass(frozen=True)
class ParticleEnsemble:
    """N particle paths on a time grid plus cached mean-field trajectories."""

    model: ModelSpec
    timegrid: TimeGrid
    states: np.ndarray  # (N, K+1, d)
    mf_psi: np.ndarray  # (K+1, d)
    mf_phi: np.ndarray  # (K+1, d)
    mf_varphi: np.ndarray  # (K+1, d)
    mf_lam_final: np.ndarray  # (d,)
    rng_manifest: dict
    box_exits: int

    @property
    def N(self) -> int:
        return self.states.shape[0]


@dataclass(frozen=True)
class DriverIncrements:
    """Addressed Brownian increments of the p per-atom drivers.

    Entries are Normal(0, dt), addressed by (particle, step, atom, coordinate).
    Blocks are regenerated on demand from the counter-based scheme, so holding
    this object costs nothing until increments are actually read.
    """

    seed: int
    N: int
    K: int
    p: int
    d: int
    dt: float

    def block(self, k: int) -> np.ndarray:
        """Increments for step k, shape (N, p, d)."""
        out = np.empty((self.N, self.p, self.d))
        for i in range(self.p):
            out[:, i, :] = rng.gaussian_block(self.seed, k, i, self.N, self.d, self.dt)
        return out

    @property
    def gaussians(self) -> np.ndarray:
        """Full (N, K, p, d) array; refuses to materialize absurd sizes."""
        total = self.N * self.K * self.p * self.d
        if total > _MATERIALIZE_LIMIT:
            raise ValidationError(
                f"driver array of {total} elements is too large to materialize; "
                "use block(k) to stream"
            )
        out = np.empty((self.N, self.K, self.p, self.d))
        for k in range(self.K):
            out[:, k, :, :] = self.block(k)
        return out


def _meanfield(fn, x: np.ndarray) -> np.ndarray:
    # np.mean reduces pairwise in fixed particle order: deterministic.
    return np.mean(np.asarray(fn(x), dtype=float), axis=0)


def _run(model: ModelSpec, grid: TimeGrid, N: int, seed: int, step_fn, manifest_extra):
    if N < 1:
        raise ValidationError("particle count N must be >= 1")
    d, K, dt = model.d, grid.K, grid.dt
    times = grid.times
    states = np.empty((N, K + 1, d))
    mf_psi = np.empty((K + 1, d))
    mf_phi = np.empty((K + 1, d))
    mf_varphi = np.empty((K + 1, d))
    x = np.broadcast_to(model.x0, (N, d)).copy()
    states[:, 0, :] = x
    lo, hi = model.state_box[:, 0], model.state_box[:, 1]
    explosion = EXPLOSION_FACTOR * (1.0 + float(np.abs(model.x0).max()))
    box_exits = 0
    for k in range(K):
        mf_psi[k] = _meanfield(model.psi, x)
        mf_phi[k] = _meanfield(model.phi, x)
        mf_varphi[k] = _meanfield(model.varphi, x)
        x = x + step_fn(k, times[k], x, mf_psi[k], mf_phi[k])
        bad = ~np.isfinite(x)
        if bad.any():
            j = int(np.argwhere(bad)[0, 0])
            raise SimulationError(
                f"non-finite state at step {k + 1}, particle {j}",
                step=k + 1,
                particle=j,
            )
        amax = np.abs(x).max()
        if amax > explosion:
            j = int(np.abs(x).max(axis=1).argmax())
            raise SimulationError(
                f"state explosion (|X| = {amax:.3g}) at step {k + 1}, particle {j}",
                step=k + 1,
                particle=j,
            )
        box_exits += int(((x < lo) | (x > hi)).any(axis=1).sum())
        states[:, k + 1, :] = x
    mf_psi[K] = _meanfield(model.psi, x)
    mf_phi[K] = _meanfield(model.phi, x)
    mf_varphi[K] = _meanfield(model.varphi, x)
    mf_lam_final = _meanfield(model.lam, x)
    for arr in (states, mf_psi, mf_phi, mf_varphi, mf_lam_final):
        arr.setflags(write=False)
    return ParticleEnsemble(
        model=model,
        timegrid=grid,
        states=states,
        mf_psi=mf_psi,
        mf_phi=mf_phi,
        mf_varphi=mf_varphi,
        mf_lam_final=mf_lam_final,
        rng_manifest=rng.make_manifest(seed, N, grid, manifest_extra),
        box_exits=box_exits,
    )


def _diffuse(sig: np.ndarray, dw: np.ndarray) -> np.ndarray:
    # sig (N, d, d), dw (N, d) -> (N, d)
    return np.einsum("nij,nj->ni", np.asarray(sig, dtype=float), dw)


def simulate_strict(
    model: ModelSpec, u: StrictControl, N: int, grid: TimeGrid, seed: int
) -> ParticleEnsemble:
    """Euler-Maruyama under a strict control with mean-field coupling."""
    if u.timegrid != grid:
        raise ValidationError("control and simulation must share the time grid")
    dt, d = grid.dt, model.d

    def step(k, t, x, y_psi, y_phi):
        i = int(u.assignment[k])
        a = u.grid.atom(i)
        dw = rng.gaussian_block(seed, k, i, x.shape[0], d, dt)
        return np.asarray(model.b(t, x, y_psi, a), dtype=float) * dt + _diffuse(
            model.sigma(t, x, y_phi, a), dw
        )

    extra = {
        "regime": "strict",
        "model": model.name,
        "control_fingerprint": embed_strict(u).fingerprint(),
    }
    return _run(model, grid, N, seed, step, extra)


def simulate_naive_relaxed(
    model: ModelSpec, mu: SlidingControl, N: int, grid: TimeGrid, seed: int
) -> ParticleEnsemble:
    """Atom-averaged coefficients against a single Brownian driver.

    This is the relaxation the counterexample rejects: averaging sigma inside
    one stochastic integral changes the quadratic variation.  Kept as an
    explicit regime so the separation can be measured.
    """
    if mu.timegrid != grid:
        raise ValidationError("control and simulation must share the time grid")
    dt, d, p = grid.dt, model.d, mu.grid.p

    def step(k, t, x, y_psi, y_phi):
        row = mu.weights[k]
        active = np.nonzero(row > 0.0)[0]
        drift = np.zeros((x.shape[0], d))
        sig = np.zeros((x.shape[0], d, d))
        for i in active:
            a = mu.grid.atom(int(i))
            drift += row[i] * np.asarray(model.b(t, x, y_psi, a), dtype=float)
            sig += row[i] * np.asarray(model.sigma(t, x, y_phi, a), dtype=float)
        dw = rng.gaussian_block(seed, k, p, x.shape[0], d, dt)  # slot p: own driver
        return drift * dt + _diffuse(sig, dw)

    extra = {
        "regime": "naive_relaxed",
        "model": model.name,
        "control_fingerprint": mu.fingerprint(),
    }
    return _run(model, grid, N, seed, step, extra)


def simulate_relaxed(
    model: ModelSpec, mu: SlidingControl, N: int, grid: TimeGrid, seed: int
):
    """Martingale-measure dynamics on a finite action grid.

    Each atom i carries its own Brownian driver B^i; the diffusion term is
    sum_i sqrt(alpha_i) sigma(..., a_i) dB^i, so the realized quadratic
    variation relaxes as a Lebesgue integral.  Zero-weight atoms contribute
    nothing and consume no stream position (streams are addressed, not
    sequential), which makes the Dirac embedding collapse to the strict
    dynamics bit-exactly.

    Returns the ensemble together with the addressed driver increments for
    covariance-measure diagnostics.
    """
    if mu.timegrid != grid:
        raise ValidationError("control and simulation must share the time grid")
    dt, d = grid.dt, model.d

    def step(k, t, x, y_psi, y_phi):
        row = mu.weights[k]
        active = np.nonzero(row > 0.0)[0]
        out = np.zeros((x.shape[0], d))
        for i in active:
            a = mu.grid.atom(int(i))
            dbi = rng.gaussian_block(seed, k, int(i), x.shape[0], d, dt)
            out += row[i] * np.asarray(model.b(t, x, y_psi, a), dtype=float) * dt
            out += np.sqrt(row[i]) * _diffuse(model.sigma(t, x, y_phi, a), dbi)
        return out

    extra = {
        "regime": "relaxed",
        "model": model.name,
        "control_fingerprint": mu.fingerprint(),
    }
    ensemble = _run(model, grid, N, seed, step, extra)
    driver = DriverIncrements(seed=seed, N=N, K=grid.K, p=mu.grid.p, d=d, dt=dt)
    return ensemble, driver


_MF_FIELDS = {"psi": "mf_psi", "phi": "mf_phi", "varphi": "mf_varphi", "lam": None}


def empirical_meanfield(ensemble: ParticleEnsemble, which: str, k: int) -> np.ndarray:
    """(1/N) sum_j map(X^j_k) recomputed from the stored states."""
    if which not in _MF_FIELDS:
        raise ValidationError(f"unknown mean-field map {which!r}; one of {sorted(_MF_FIELDS)}")
    if not 0 <= k <= ensemble.timegrid.K:
        raise ValidationError(f"step {k} outside 0..{ensemble.timegrid.K}")
    fn = getattr(ensemble.model, which if which != "lam" else "lam")
    return _meanfield(fn, ensemble.states[:, k, :])


def qv_samples(
    driver: DriverIncrements, mu: SlidingControl, atom_subset, t: float
) -> np.ndarray:
    """Per-particle realized quadratic variation of M([0, t] x B).

    M([0, t] x B) = sum_{k: t_k < t} sum_{i in B} sqrt(alpha_i(t_k)) dB^i_k per
    coordinate; the realized QV is averaged over coordinates.  Expectation is
    the covariance-measure mass sum_{k: t_k < t} dt * sum_{i in B} alpha_i(t_k).
    """
    subset = sorted(int(i) for i in set(atom_subset))
    if any(i < 0 or i >= driver.p for i in subset):
        raise ValidationError("atom subset contains an invalid index")
    k_end = mu.timegrid.index_of(t)
    out = np.zeros(driver.N)
    if not subset:
        return out
    sel = np.array(subset)
    for k in range(k_end):
        roots = np.sqrt(mu.weights[k, sel])
        blk = driver.block(k)[:, sel, :]  # (N, |B|, d)
        incr = np.einsum("i,nid->nd", roots, blk)
        out += (incr**2).sum(axis=1) / driver.d
    return out


def qv_estimate(
    driver: DriverIncrements, mu: SlidingControl, atom_subset, t: float
) -> float:
    """Ensemble average of the realized quadratic variation of M([0, t] x B)."""
    return float(np.mean(qv_samples(driver, mu, atom_subset, t)))
