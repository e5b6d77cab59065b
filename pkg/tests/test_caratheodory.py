import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from relaxctl import (
    NotRepresentable,
    SlidingControl,
    StrictControl,
    TimeGrid,
    ValidationError,
    extract_strict_if_convex,
    lookup_model,
    make_action_grid,
    reduce_support,
    simulate_relaxed,
    sliding_from_relaxed,
)
from relaxctl.caratheodory import MOMENT_RTOL


def _moment(w, v):
    # independent full-precision recomputation of the weighted moment
    return np.array(
        [math.fsum(w[i] * v[i, j] for i in range(len(w))) for j in range(v.shape[1])]
    )


class TestReduceSupport:
    def test_scalar_vectors_reduce_to_two(self):
        w = np.full(5, 0.2)
        v = np.array([[0.0], [1.0], [2.0], [3.0], [4.0]])
        out = reduce_support(w, v)
        assert (out > 0).sum() <= 2
        assert _moment(out, v)[0] == pytest.approx(2.0, rel=MOMENT_RTOL)

    def test_duplicate_vectors_merge(self):
        w = np.full(4, 0.25)
        v = np.array([[1.0, 0.0]] * 4)
        out = reduce_support(w, v)
        assert (out > 0).sum() <= 3
        assert out.sum() == pytest.approx(1.0, abs=1e-12)

    def test_small_support_returned_unchanged(self):
        w = np.array([0.3, 0.7])
        v = np.array([[1.0, 2.0], [3.0, 4.0]])
        assert np.array_equal(reduce_support(w, v), w)

    def test_support_is_subset_of_input(self):
        rng = np.random.default_rng(0)
        w = rng.dirichlet(np.ones(12))
        w[3] = 0.0
        w = w / w.sum()
        v = rng.standard_normal((12, 2))
        out = reduce_support(w, v)
        assert out[3] == 0.0
        assert set(np.nonzero(out)[0]) <= set(np.nonzero(w)[0])

    def test_idempotent(self):
        rng = np.random.default_rng(1)
        w = rng.dirichlet(np.ones(20))
        v = rng.standard_normal((20, 3))
        once = reduce_support(w, v)
        assert np.array_equal(reduce_support(once, v), once)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValidationError):
            reduce_support(np.array([0.5, 0.5]), np.zeros((3, 2)))

    def test_non_simplex_weights_rejected(self):
        with pytest.raises(ValidationError):
            reduce_support(np.array([-0.1, 1.1]), np.zeros((2, 1)))
        with pytest.raises(ValidationError):
            reduce_support(np.array([0.5, 0.6]), np.zeros((2, 1)))

    @settings(max_examples=200, deadline=None)
    @given(st.integers(min_value=0, max_value=10**9))
    def test_random_instances_preserve_moment(self, seed):
        rng = np.random.default_rng(seed)
        p = int(rng.integers(5, 30))
        D = int(rng.integers(1, 5))
        w = rng.dirichlet(np.ones(p))
        v = rng.standard_normal((p, D))
        out = reduce_support(w, v)
        assert (out > 0).sum() <= D + 1
        assert (out >= 0).all()
        assert abs(out.sum() - 1.0) <= 1e-12
        target = _moment(w, v)
        got = _moment(out, v)
        scale = max(1.0, float(np.abs(target).max()))
        assert np.abs(got - target).max() <= MOMENT_RTOL * scale


class TestSlidingFromRelaxed:
    def test_counterexample_support_collapses(self):
        # moment map ignores the drift and cost, so only a^2 matters:
        # nine atoms collapse to at most d + d^2 + 2 = 4
        model = lookup_model("diffusion_counterexample")
        grid = make_action_grid([-1, -0.75, -0.5, -0.25, 0, 0.25, 0.5, 0.75, 1])
        tg = TimeGrid(T=1.0, K=16)
        mu = SlidingControl(
            grid=grid, timegrid=tg, weights=np.full((16, 9), 1.0 / 9.0)
        )
        ens, _ = simulate_relaxed(model, mu, 200, tg, 0)
        reduced = sliding_from_relaxed(model, mu, ens)
        support = (reduced.weights > 0).sum(axis=1)
        assert support.max() <= model.d + model.d**2 + 2
        # the generator moment sum_i alpha_i a_i^2 is preserved per step
        a2 = grid.atoms[:, 0] ** 2
        for k in range(tg.K):
            assert reduced.weights[k] @ a2 == pytest.approx(
                mu.weights[k] @ a2, rel=1e-9
            )

    def test_wrong_ensemble_rejected(self):
        model = lookup_model("diffusion_counterexample")
        grid = make_action_grid([-1, 0, 1])
        tg = TimeGrid(T=1.0, K=8)
        mu = SlidingControl(grid=grid, timegrid=tg, weights=np.full((8, 3), 1 / 3))
        other = SlidingControl(
            grid=grid, timegrid=tg, weights=np.tile([0.5, 0.25, 0.25], (8, 1))
        )
        ens, _ = simulate_relaxed(model, other, 10, tg, 0)
        with pytest.raises(ValidationError):
            sliding_from_relaxed(model, mu, ens)


class TestExtractStrict:
    def test_sign_mixture_matches_an_atom(self):
        # sigma sigma* = a^2 is the same at both atoms, so the half mixture's
        # averaged moment vector is exactly atom 0's
        model = lookup_model("diffusion_counterexample")
        grid = make_action_grid([-1, 1])
        tg = TimeGrid(T=1.0, K=8)
        mu = SlidingControl(grid=grid, timegrid=tg, weights=np.full((8, 2), 0.5))
        ens, _ = simulate_relaxed(model, mu, 50, tg, 0)
        u = extract_strict_if_convex(model, mu, ens)
        assert isinstance(u, StrictControl)
        assert (u.assignment == 0).all()  # smallest matching index

    def test_drift_mixture_is_not_representable(self):
        # averaged drift 0 lies strictly between the atom drifts -1 and 1
        model = lookup_model("rademacher_ode")
        grid = make_action_grid([-1, 1])
        tg = TimeGrid(T=1.0, K=8)
        mu = SlidingControl(grid=grid, timegrid=tg, weights=np.full((8, 2), 0.5))
        ens, _ = simulate_relaxed(model, mu, 50, tg, 0)
        res = extract_strict_if_convex(model, mu, ens)
        assert isinstance(res, NotRepresentable)
        assert not res
        assert res.step == 0 and res.residual > 0

    def test_dirac_rows_always_extract(self):
        model = lookup_model("rademacher_ode")
        grid = make_action_grid([-1, 1])
        tg = TimeGrid(T=1.0, K=8)
        w = np.zeros((8, 2))
        w[:4, 0] = 1.0
        w[4:, 1] = 1.0
        mu = SlidingControl(grid=grid, timegrid=tg, weights=w)
        ens, _ = simulate_relaxed(model, mu, 5, tg, 0)
        u = extract_strict_if_convex(model, mu, ens)
        assert isinstance(u, StrictControl)
        assert u.assignment.tolist() == [0, 0, 0, 0, 1, 1, 1, 1]
