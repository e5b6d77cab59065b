"""Strict and sliding (measure-valued) controls on finite action grids.

A strict control assigns one action atom to each step of a uniform time grid.
A sliding control assigns a probability vector over the atoms to each step,
representing the time-indexed mixture sum_i alpha_i(t) * delta_{a_i}(da).
Strict controls embed into sliding controls as Dirac rows.

All types are immutable after construction and safe to share across workers.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

# A weight row must sum to 1 within this tolerance after normalization.
ROW_SUM_TOL = 1e-12
# Rows whose sum is within this of 1 are renormalized; beyond it is an error.
ROW_RENORM_TOL = 1e-9


def _frozen_array(a, dtype=float):
    out = np.asarray(a, dtype=dtype).copy()
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class ActionGrid:
    """Finite set of action atoms standing in for a compact action space.

    atoms has shape (p, m): p distinct points in R^m.  The bounding box is
    either declared at construction or taken as the hull of the atoms.
    """

    atoms: np.ndarray
    box: np.ndarray  # (m, 2) lower/upper bounds

    @property
    def p(self) -> int:
        return self.atoms.shape[0]

    @property
    def m(self) -> int:
        return self.atoms.shape[1]

    def atom(self, i: int):
        """Atom i as a scalar when m == 1, else as a length-m vector."""
        a = self.atoms[i]
        return float(a[0]) if a.shape[0] == 1 else a

    def index_of(self, value) -> int:
        target = np.atleast_1d(np.asarray(value, dtype=float))
        for i in range(self.p):
            if np.array_equal(self.atoms[i], target):
                return i
        raise ValidationError(f"value {value!r} is not an atom of the grid")


def make_action_grid(points, box=None) -> ActionGrid:
    """Build an ActionGrid from a nonempty list of pairwise-distinct points.

    Scalar entries are treated as points in R^1.
    """
    if points is None or len(points) == 0:
        raise ValidationError("action grid needs at least one point")
    atoms = np.asarray(points, dtype=float)
    if atoms.ndim == 1:
        atoms = atoms[:, None]
    if atoms.ndim != 2:
        raise ValidationError("action grid points must be scalars or vectors")
    if len({tuple(row) for row in atoms.tolist()}) != atoms.shape[0]:
        raise ValidationError("action grid points must be pairwise distinct")
    if box is None:
        box = np.stack([atoms.min(axis=0), atoms.max(axis=0)], axis=1)
    else:
        box = np.asarray(box, dtype=float).reshape(atoms.shape[1], 2)
        inside = (atoms >= box[:, 0]) & (atoms <= box[:, 1])
        if not inside.all():
            raise ValidationError("all atoms must lie inside the declared box")
    return ActionGrid(_frozen_array(atoms), _frozen_array(box))


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t_k = k*T/K on [0, T]."""

    T: float
    K: int

    def __post_init__(self):
        if not self.T > 0:
            raise ValidationError("horizon T must be positive")
        if not (isinstance(self.K, (int, np.integer)) and self.K >= 1):
            raise ValidationError("step count K must be an integer >= 1")

    @property
    def dt(self) -> float:
        return self.T / self.K

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.K + 1)

    def index_of(self, t: float) -> int:
        """Index k with t_k == t (within one part in 1e9 of a step)."""
        if t < -1e-12 or t > self.T * (1 + 1e-12):
            raise ValidationError(f"time {t} outside [0, {self.T}]")
        k = int(round(t / self.dt))
        if abs(k * self.dt - t) > 1e-9 * max(1.0, self.T):
            raise ValidationError(f"time {t} is not a grid point")
        return min(max(k, 0), self.K)


@dataclass(frozen=True)
class StrictControl:
    """Piecewise-constant atom-valued control: atom assignment[k] on [t_k, t_{k+1})."""

    grid: ActionGrid
    timegrid: TimeGrid
    assignment: np.ndarray  # (K,) int

    def __post_init__(self):
        a = _frozen_array(self.assignment, dtype=np.int64)
        if a.shape != (self.timegrid.K,):
            raise ValidationError("assignment must have one entry per time step")
        if a.min(initial=0) < 0 or a.max(initial=0) >= self.grid.p:
            raise ValidationError("assignment contains an invalid atom index")
        object.__setattr__(self, "assignment", a)

    def to_json_dict(self) -> dict:
        return {
            "atoms": self.grid.atoms.tolist(),
            "assignment": self.assignment.tolist(),
            "T": self.timegrid.T,
            "K": self.timegrid.K,
        }

    @classmethod
    def from_json_dict(cls, obj) -> "StrictControl":
        return cls(
            grid=make_action_grid(obj["atoms"]),
            timegrid=TimeGrid(T=float(obj["T"]), K=int(obj["K"])),
            assignment=np.asarray(obj["assignment"], dtype=np.int64),
        )


@dataclass(frozen=True)
class SlidingControl:
    """Simplex-weighted mixture of atoms per time step.

    weights has shape (K, p); row k holds the mixture weights on [t_k, t_{k+1}).
    Rows are renormalized on construction when their sum drifts from 1 by at
    most ROW_RENORM_TOL; larger drift is treated as a bug in the caller.
    """

    grid: ActionGrid
    timegrid: TimeGrid
    weights: np.ndarray  # (K, p)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).copy()
        if w.shape != (self.timegrid.K, self.grid.p):
            raise ValidationError(
                f"weights must have shape (K, p) = ({self.timegrid.K}, {self.grid.p})"
            )
        if (w < 0).any():
            raise ValidationError("sliding control weights must be nonnegative")
        sums = w.sum(axis=1)
        if np.abs(sums - 1.0).max() > ROW_RENORM_TOL:
            k = int(np.abs(sums - 1.0).argmax())
            raise ValidationError(
                f"weight row {k} sums to {sums[k]!r}, too far from 1 to renormalize"
            )
        w /= sums[:, None]
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    def fingerprint(self) -> str:
        import hashlib

        h = hashlib.sha256()
        h.update(self.grid.atoms.tobytes())
        h.update(self.weights.tobytes())
        h.update(repr((self.timegrid.T, self.timegrid.K)).encode())
        return h.hexdigest()[:16]

    def to_json_dict(self) -> dict:
        return {
            "atoms": self.grid.atoms.tolist(),
            "weights": self.weights.tolist(),
            "T": self.timegrid.T,
            "K": self.timegrid.K,
        }

    @classmethod
    def from_json_dict(cls, obj) -> "SlidingControl":
        return cls(
            grid=make_action_grid(obj["atoms"]),
            timegrid=TimeGrid(T=float(obj["T"]), K=int(obj["K"])),
            weights=np.asarray(obj["weights"], dtype=float),
        )


def control_to_json(control) -> str:
    return json.dumps(control.to_json_dict())


def control_from_json(text: str):
    obj = json.loads(text)
    if "assignment" in obj:
        return StrictControl.from_json_dict(obj)
    return SlidingControl.from_json_dict(obj)


def rademacher_control(grid: ActionGrid, n: int, timegrid: TimeGrid) -> StrictControl:
    """Rapidly alternating control: value (-1)^k on the k-th of n equal slices.

    The grid must contain the atoms -1 and +1; the slice boundaries must fall
    on the time grid (K divisible by n).
    """
    if n < 1:
        raise ValidationError("n must be >= 1")
    if timegrid.K % n != 0:
        raise ValidationError(
            f"K = {timegrid.K} is not divisible by n = {n}; "
            "slice boundaries must align with the time grid"
        )
    plus = grid.index_of(1.0)
    minus = grid.index_of(-1.0)
    per_slice = timegrid.K // n
    slices = np.arange(timegrid.K) // per_slice
    assignment = np.where(slices % 2 == 0, plus, minus)
    return StrictControl(grid=grid, timegrid=timegrid, assignment=assignment)


def embed_strict(u: StrictControl) -> SlidingControl:
    """Dirac embedding: row k has weight 1 on the assigned atom."""
    w = np.zeros((u.timegrid.K, u.grid.p))
    w[np.arange(u.timegrid.K), u.assignment] = 1.0
    return SlidingControl(grid=u.grid, timegrid=u.timegrid, weights=w)


def pushforward_test(g, control: SlidingControl, t: float) -> float:
    """Time-integrated action functional int_0^t int g(s, a) mu_s(da) ds.

    Left-endpoint quadrature, exact for data piecewise constant on the grid.
    g receives the atom as a scalar when the action dimension is 1.
    """
    tg = control.timegrid
    k_end = tg.index_of(t)
    if k_end == 0:
        return 0.0
    times = tg.times
    gvals = np.array(
        [
            [g(times[k], control.grid.atom(i)) for i in range(control.grid.p)]
            for k in range(k_end)
        ]
    )
    return float(tg.dt * np.sum(control.weights[:k_end] * gvals))
