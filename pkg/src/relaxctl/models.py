"""Coefficient bundles for controlled mean-field SDEs, plus named presets.

A ModelSpec packages the drift b, diffusion sigma, mean-field maps Psi/Phi,
running cost h, terminal cost g and cost mean-field maps varphi/lam, together
with declared bound/Lipschitz constants and the state/action boxes on which
those constants are claimed to hold.

Vectorization convention (batch size N, state dimension d):
    b(t, x, y, a)     -> (N, d)   with x (N, d), y (d,), a scalar or (m,)
    sigma(t, x, y, a) -> (N, d, d)
    psi/phi/varphi/lam: (N, d) -> (N, d)
    h(t, x, y, a)     -> (N,)
    g(x, y)           -> (N,)
"""

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import PresetLookupError

Array = np.ndarray


@dataclass(frozen=True)
class ModelSpec:
    name: str
    d: int
    m: int
    x0: Array
    b: Callable
    sigma: Callable
    psi: Callable
    phi: Callable
    h: Callable
    g: Callable
    varphi: Callable
    lam: Callable
    bound: float  # declared sup bound B_max for b, sigma, Psi, Phi, h on the boxes
    lipschitz: float  # declared Lipschitz constant L in (x, y)
    state_box: Array  # (d, 2)
    action_box: Array  # (m, 2)
    horizon: float = 1.0
    sigma_controlled: bool = True  # False when sigma does not depend on the action

    def __post_init__(self):
        object.__setattr__(self, "x0", np.asarray(self.x0, dtype=float).reshape(self.d))
        object.__setattr__(
            self, "state_box", np.asarray(self.state_box, dtype=float).reshape(self.d, 2)
        )
        object.__setattr__(
            self, "action_box", np.asarray(self.action_box, dtype=float).reshape(self.m, 2)
        )


@dataclass(frozen=True)
class MomentVector:
    """Concatenation (b, vec(sigma sigma*), h) at a fixed (t, x, mean-fields, a)."""

    value: Array
    d: int

    @property
    def drift(self) -> Array:
        return self.value[: self.d]

    @property
    def diffusion_matrix(self) -> Array:
        return self.value[self.d : self.d + self.d * self.d].reshape(self.d, self.d)

    @property
    def running_cost(self) -> float:
        return float(self.value[-1])


def _identity(x):
    return x


def _col(values, n):
    """Broadcast a scalar or (n,) array to a column-shaped (n, 1) state array."""
    return np.broadcast_to(np.asarray(values, dtype=float), (n,)).reshape(n, 1)


def _scalar_a(a) -> float:
    return float(np.asarray(a, dtype=float).reshape(-1)[0])


def _rademacher_ode() -> ModelSpec:
    # dX = a dt, h = x^2: the deterministic minimizing-sequence example.
    def b(t, x, y, a):
        return np.full_like(x, _scalar_a(a))

    def sigma(t, x, y, a):
        return np.zeros((x.shape[0], 1, 1))

    def h(t, x, y, a):
        return x[:, 0] ** 2

    def g(x, y):
        return np.zeros(x.shape[0])

    return ModelSpec(
        name="rademacher_ode",
        d=1,
        m=1,
        x0=[0.0],
        b=b,
        sigma=sigma,
        psi=_identity,
        phi=_identity,
        h=h,
        g=g,
        varphi=_identity,
        lam=_identity,
        bound=1.0,
        lipschitz=2.0,
        state_box=[[-1.0, 1.0]],
        action_box=[[-1.0, 1.0]],
        horizon=1.0,
        sigma_controlled=False,
    )


def _fleming_drift(squared: bool) -> ModelSpec:
    # dX = a dt + dW, running cost E[X]^2 + (1 - a)^2 (literal) or (1 - a^2)^2.
    def b(t, x, y, a):
        return np.full_like(x, _scalar_a(a))

    def sigma(t, x, y, a):
        return np.ones((x.shape[0], 1, 1))

    if squared:

        def h(t, x, y, a):
            av = _scalar_a(a)
            return np.full(x.shape[0], float(y[0]) ** 2 + (1.0 - av * av) ** 2)

    else:

        def h(t, x, y, a):
            av = _scalar_a(a)
            return np.full(x.shape[0], float(y[0]) ** 2 + (1.0 - av) ** 2)

    def g(x, y):
        return np.zeros(x.shape[0])

    return ModelSpec(
        name="fleming_drift_squared" if squared else "fleming_drift",
        d=1,
        m=1,
        x0=[0.0],
        b=b,
        sigma=sigma,
        psi=_identity,
        phi=_identity,
        h=h,
        g=g,
        varphi=_identity,
        lam=_identity,
        bound=13.0,
        lipschitz=6.0,
        state_box=[[-3.0, 3.0]],
        action_box=[[-1.0, 1.0]],
        horizon=1.0,
        sigma_controlled=False,
    )


def _diffusion_counterexample() -> ModelSpec:
    # dX = a dW: the example separating naive and martingale-measure relaxation.
    def b(t, x, y, a):
        return np.zeros_like(x)

    def sigma(t, x, y, a):
        return np.full((x.shape[0], 1, 1), _scalar_a(a))

    def h(t, x, y, a):
        return np.zeros(x.shape[0])

    def g(x, y):
        return np.zeros(x.shape[0])

    return ModelSpec(
        name="diffusion_counterexample",
        d=1,
        m=1,
        x0=[0.0],
        b=b,
        sigma=sigma,
        psi=_identity,
        phi=_identity,
        h=h,
        g=g,
        varphi=_identity,
        lam=_identity,
        bound=4.0,
        lipschitz=1.0,
        state_box=[[-4.0, 4.0]],
        action_box=[[-1.0, 1.0]],
        horizon=1.0,
        sigma_controlled=True,
    )


def mean_variance_model(
    mu_pen: float = 1.0,
    rate: Callable = lambda t: 0.02,
    appreciation: Callable = lambda t: 0.08,
    volatility: Callable = lambda t: 0.2,
    x0: float = 1.0,
    horizon: float = 1.0,
    action_bounds=(0.0, 1.5),
) -> ModelSpec:
    """Wealth dynamics with a risky allocation `a` and mean-variance terminal cost.

    dx = (rate*x + a*(appreciation - rate)) dt + a*volatility dW,
    J = E[-x_T + mu_pen * (x_T - E[x_T])^2].
    """

    def b(t, x, y, a):
        return rate(t) * x + _scalar_a(a) * (appreciation(t) - rate(t))

    def sigma(t, x, y, a):
        return np.full((x.shape[0], 1, 1), _scalar_a(a) * volatility(t))

    def h(t, x, y, a):
        return np.zeros(x.shape[0])

    def g(x, y):
        return -x[:, 0] + mu_pen * (x[:, 0] - float(y[0])) ** 2

    return ModelSpec(
        name="mean_variance",
        d=1,
        m=1,
        x0=[x0],
        b=b,
        sigma=sigma,
        psi=_identity,
        phi=_identity,
        h=h,
        g=g,
        varphi=_identity,
        lam=_identity,
        bound=3.0,
        lipschitz=1.0,
        state_box=[[0.0, 3.0]],
        action_box=[list(action_bounds)],
        horizon=horizon,
        sigma_controlled=True,
    )


def _lipschitz_mf_test() -> ModelSpec:
    # Synthetic model exercising every mean-field slot with smooth bounded maps.
    def b(t, x, y, a):
        return np.tanh(x) + 0.5 * np.tanh(float(y[0])) + _scalar_a(a)

    def sigma(t, x, y, a):
        s = 1.0 + 0.5 * np.cos(x[:, 0]) + 0.25 * np.sin(float(y[0]))
        return s.reshape(-1, 1, 1)

    def h(t, x, y, a):
        return x[:, 0] ** 2 + _scalar_a(a) ** 2

    def g(x, y):
        return x[:, 0] ** 2

    return ModelSpec(
        name="lipschitz_mf_test",
        d=1,
        m=1,
        x0=[0.0],
        b=b,
        sigma=sigma,
        psi=np.tanh,
        phi=np.tanh,
        h=h,
        g=g,
        varphi=_identity,
        lam=_identity,
        bound=2.5,
        lipschitz=2.0,
        state_box=[[-1.0, 1.0]],
        action_box=[[-1.0, 1.0]],
        horizon=1.0,
        sigma_controlled=False,
    )


_PRESETS = {
    "rademacher_ode": _rademacher_ode,
    "fleming_drift": lambda: _fleming_drift(squared=False),
    "fleming_drift_squared": lambda: _fleming_drift(squared=True),
    "diffusion_counterexample": _diffusion_counterexample,
    "mean_variance": mean_variance_model,
    "lipschitz_mf_test": _lipschitz_mf_test,
}

PRESET_NAMES = tuple(sorted(_PRESETS))


def lookup_model(name: str) -> ModelSpec:
    try:
        factory = _PRESETS[name]
    except KeyError:
        raise PresetLookupError(name, PRESET_NAMES) from None
    return factory()


def moment_map(model: ModelSpec, t, x, y_psi, y_phi, y_varphi, a) -> MomentVector:
    """(b, vec(sigma sigma*), h) at a single state point; the Caratheodory map."""
    x = np.asarray(x, dtype=float).reshape(1, model.d)
    y_psi = np.asarray(y_psi, dtype=float).reshape(model.d)
    y_phi = np.asarray(y_phi, dtype=float).reshape(model.d)
    y_varphi = np.asarray(y_varphi, dtype=float).reshape(model.d)
    bval = np.asarray(model.b(t, x, y_psi, a), dtype=float).reshape(model.d)
    sval = np.asarray(model.sigma(t, x, y_phi, a), dtype=float).reshape(model.d, model.d)
    hval = float(np.asarray(model.h(t, x, y_varphi, a), dtype=float).reshape(()))
    ssT = sval @ sval.T
    return MomentVector(
        value=np.concatenate([bval, ssT.reshape(-1), [hval]]), d=model.d
    )


@dataclass(frozen=True)
class FunctionCheck:
    name: str
    max_abs: float
    worst_lipschitz_ratio: float
    bound_ok: bool
    lipschitz_ok: bool
    witness: tuple | None = None


@dataclass(frozen=True)
class ValidationReport:
    model: str
    samples: int
    seed: int
    checks: tuple

    @property
    def passed(self) -> bool:
        return all(c.bound_ok and c.lipschitz_ok for c in self.checks)

    def summary(self) -> str:
        lines = [f"validate_model({self.model}): {'PASS' if self.passed else 'FAIL'}"]
        for c in self.checks:
            lines.append(
                f"  {c.name:6s} max|f|={c.max_abs:.6g} "
                f"lip_ratio={c.worst_lipschitz_ratio:.6g} "
                f"bound={'ok' if c.bound_ok else 'VIOLATED'} "
                f"lipschitz={'ok' if c.lipschitz_ok else 'VIOLATED'}"
            )
        return "\n".join(lines)


def validate_model(model: ModelSpec, samples: int = 200, seed: int = 0) -> ValidationReport:
    """Sampled check of the declared bound and Lipschitz constants.

    Draws (t, x, y, a, x', y') tuples from the declared boxes and records the
    worst observed |f| and Lipschitz ratio for f in {b, sigma, Psi, Phi, h}.
    Violations are reported, not raised.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    d, m = model.d, model.m
    lo, hi = model.state_box[:, 0], model.state_box[:, 1]
    alo, ahi = model.action_box[:, 0], model.action_box[:, 1]

    def draw_state():
        return lo + (hi - lo) * rng.random(d)

    def fnorm(v):
        return float(np.linalg.norm(np.asarray(v, dtype=float).reshape(-1)))

    evals = {
        "b": lambda t, x, y, a: model.b(t, x.reshape(1, d), y, a),
        "sigma": lambda t, x, y, a: model.sigma(t, x.reshape(1, d), y, a),
        "Psi": lambda t, x, y, a: model.psi(x.reshape(1, d)),
        "Phi": lambda t, x, y, a: model.phi(x.reshape(1, d)),
        "h": lambda t, x, y, a: model.h(t, x.reshape(1, d), y, a),
    }
    worst_abs = {k: 0.0 for k in evals}
    worst_lip = {k: 0.0 for k in evals}
    witness = {k: None for k in evals}

    for _ in range(samples):
        t = model.horizon * rng.random()
        x, y = draw_state(), draw_state()
        xp, yp = draw_state(), draw_state()
        a = alo + (ahi - alo) * rng.random(m)
        denom = fnorm(x - xp) + fnorm(y - yp)
        for name, f in evals.items():
            v = f(t, x, y, a)
            vp = f(t, xp, yp, a)
            mag = max(fnorm(v), fnorm(vp))
            if mag > worst_abs[name]:
                worst_abs[name] = mag
                if mag > model.bound:
                    witness[name] = (t, tuple(x), tuple(y), tuple(a))
            if denom > 1e-12:
                ratio = fnorm(np.asarray(v) - np.asarray(vp)) / denom
                worst_lip[name] = max(worst_lip[name], ratio)

    checks = tuple(
        FunctionCheck(
            name=name,
            max_abs=worst_abs[name],
            worst_lipschitz_ratio=worst_lip[name],
            bound_ok=worst_abs[name] <= model.bound * (1 + 1e-12),
            lipschitz_ok=worst_lip[name] <= model.lipschitz * (1 + 1e-12),
            witness=witness[name],
        )
        for name in evals
    )
    return ValidationReport(model=model.name, samples=samples, seed=seed, checks=checks)
