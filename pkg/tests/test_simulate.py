import numpy as np
import pytest

from relaxctl import (
    SimulationError,
    SlidingControl,
    StrictControl,
    TimeGrid,
    ValidationError,
    embed_strict,
    empirical_meanfield,
    lookup_model,
    make_action_grid,
    qv_estimate,
    qv_samples,
    rademacher_control,
    simulate_naive_relaxed,
    simulate_relaxed,
    simulate_strict,
)
from relaxctl.models import ModelSpec
from relaxctl.simulate import DriverIncrements


def _half_mixture(grid, timegrid):
    return SlidingControl(
        grid=grid, timegrid=timegrid, weights=np.full((timegrid.K, grid.p), 1.0 / grid.p)
    )


class TestDeterminism:
    def test_same_seed_same_bytes(self):
        model = lookup_model("diffusion_counterexample")
        grid = make_action_grid([-1, 1])
        tg = TimeGrid(T=1.0, K=32)
        mu = _half_mixture(grid, tg)
        e1, _ = simulate_relaxed(model, mu, 50, tg, 3)
        e2, _ = simulate_relaxed(model, mu, 50, tg, 3)
        assert np.array_equal(e1.states, e2.states)

    def test_different_seed_differs(self):
        model = lookup_model("diffusion_counterexample")
        grid = make_action_grid([-1, 1])
        tg = TimeGrid(T=1.0, K=32)
        mu = _half_mixture(grid, tg)
        e1, _ = simulate_relaxed(model, mu, 50, tg, 3)
        e2, _ = simulate_relaxed(model, mu, 50, tg, 4)
        assert not np.array_equal(e1.states, e2.states)

    def test_manifest_records_scheme(self):
        model = lookup_model("diffusion_counterexample")
        grid = make_action_grid([-1, 1])
        tg = TimeGrid(T=1.0, K=8)
        ens = simulate_strict(
            model,
            StrictControl(grid=grid, timegrid=tg, assignment=np.ones(8, dtype=int)),
            10,
            tg,
            0,
        )
        m = ens.rng_manifest
        assert m["seed"] == 0 and m["regime"] == "strict"
        assert "scheme" in m


class TestDiracCollapse:
    def test_relaxed_dirac_equals_strict_bitwise(self):
        # slot addressing: a Dirac row reads the same stream as the strict atom
        model = lookup_model("diffusion_counterexample")
        grid = make_action_grid([-1, 1])
        tg = TimeGrid(T=1.0, K=32)
        u = StrictControl(grid=grid, timegrid=tg, assignment=np.ones(32, dtype=int))
        e_strict = simulate_strict(model, u, 40, tg, 5)
        e_relaxed, _ = simulate_relaxed(model, embed_strict(u), 40, tg, 5)
        assert np.array_equal(e_strict.states, e_relaxed.states)

    def test_collapse_holds_for_alternating_assignment(self):
        model = lookup_model("diffusion_counterexample")
        grid = make_action_grid([-1, 1])
        tg = TimeGrid(T=1.0, K=16)
        u = rademacher_control(grid, 4, tg)
        e_strict = simulate_strict(model, u, 25, tg, 9)
        e_relaxed, _ = simulate_relaxed(model, embed_strict(u), 25, tg, 9)
        assert np.array_equal(e_strict.states, e_relaxed.states)

    def test_mean_variance_collapse(self):
        model = lookup_model("mean_variance")
        grid = make_action_grid([0.0, 0.5, 1.0])
        tg = TimeGrid(T=1.0, K=16)
        u = StrictControl(grid=grid, timegrid=tg, assignment=np.full(16, 2, dtype=int))
        e_strict = simulate_strict(model, u, 30, tg, 1)
        e_relaxed, _ = simulate_relaxed(model, embed_strict(u), 30, tg, 1)
        assert np.array_equal(e_strict.states, e_relaxed.states)


class TestNaiveRegime:
    def test_half_mixture_freezes_the_counterexample(self):
        # averaged sigma = (1/2)(-1) + (1/2)(1) = 0 exactly: no motion at all
        model = lookup_model("diffusion_counterexample")
        grid = make_action_grid([-1, 1])
        tg = TimeGrid(T=1.0, K=64)
        ens = simulate_naive_relaxed(model, _half_mixture(grid, tg), 100, tg, 2)
        assert np.abs(ens.states).max() == 0.0

    def test_relaxed_half_mixture_moves(self):
        model = lookup_model("diffusion_counterexample")
        grid = make_action_grid([-1, 1])
        tg = TimeGrid(T=1.0, K=64)
        ens, _ = simulate_relaxed(model, _half_mixture(grid, tg), 4000, tg, 2)
        m2 = float(np.mean(ens.states[:, -1, 0] ** 2))
        se = float(np.std(ens.states[:, -1, 0] ** 2, ddof=1) / np.sqrt(4000))
        assert abs(m2 - 1.0) <= 3 * se


class TestStrictPaths:
    def test_rademacher_triangle_wave(self):
        # sigma = 0, so the path is the exact time integral of the action
        model = lookup_model("rademacher_ode")
        grid = make_action_grid([-1, 1])
        tg = TimeGrid(T=1.0, K=64)
        for n in (1, 2, 4, 8):
            u = rademacher_control(grid, n, tg)
            ens = simulate_strict(model, u, 1, tg, 0)
            path = ens.states[0, :, 0]
            assert np.abs(path).max() == 1.0 / n
            assert path[-1] == 0.0 if n > 1 else path[-1] == 1.0

    def test_timegrid_mismatch_rejected(self):
        model = lookup_model("rademacher_ode")
        grid = make_action_grid([-1, 1])
        u = rademacher_control(grid, 2, TimeGrid(T=1.0, K=8))
        with pytest.raises(ValidationError):
            simulate_strict(model, u, 1, TimeGrid(T=1.0, K=16), 0)

    def test_particle_count_validated(self):
        model = lookup_model("rademacher_ode")
        grid = make_action_grid([-1, 1])
        tg = TimeGrid(T=1.0, K=8)
        with pytest.raises(ValidationError):
            simulate_strict(model, rademacher_control(grid, 2, tg), 0, tg, 0)


def _custom_model(b, sigma, d=1, x0=None, box=None):
    ident = lambda x: x
    zero_h = lambda t, x, y, a: np.zeros(x.shape[0])
    zero_g = lambda x, y: np.zeros(x.shape[0])
    return ModelSpec(
        name="custom",
        d=d,
        m=1,
        x0=[0.0] * d if x0 is None else x0,
        b=b,
        sigma=sigma,
        psi=ident,
        phi=ident,
        h=zero_h,
        g=zero_g,
        varphi=ident,
        lam=ident,
        bound=1e12,
        lipschitz=1e12,
        state_box=[[-10.0, 10.0]] * d if box is None else box,
        action_box=[[-1.0, 1.0]],
    )


class TestFailureModes:
    def test_non_finite_state_raises_with_location(self):
        model = _custom_model(
            b=lambda t, x, y, a: np.full_like(x, np.nan),
            sigma=lambda t, x, y, a: np.zeros((x.shape[0], 1, 1)),
        )
        grid = make_action_grid([0.0])
        tg = TimeGrid(T=1.0, K=4)
        u = StrictControl(grid=grid, timegrid=tg, assignment=np.zeros(4, dtype=int))
        with pytest.raises(SimulationError) as exc:
            simulate_strict(model, u, 3, tg, 0)
        assert exc.value.step == 1

    def test_explosion_raises(self):
        model = _custom_model(
            b=lambda t, x, y, a: (x + 1.0) * 4e7,
            sigma=lambda t, x, y, a: np.zeros((x.shape[0], 1, 1)),
        )
        grid = make_action_grid([0.0])
        tg = TimeGrid(T=1.0, K=2)
        u = StrictControl(grid=grid, timegrid=tg, assignment=np.zeros(2, dtype=int))
        with pytest.raises(SimulationError) as exc:
            simulate_strict(model, u, 3, tg, 0)
        assert "explosion" in str(exc.value)

    def test_box_exits_counted_not_fatal(self):
        model = _custom_model(
            b=lambda t, x, y, a: np.ones_like(x),
            sigma=lambda t, x, y, a: np.zeros((x.shape[0], 1, 1)),
            box=[[-0.25, 0.25]],
        )
        grid = make_action_grid([0.0])
        tg = TimeGrid(T=1.0, K=4)
        u = StrictControl(grid=grid, timegrid=tg, assignment=np.zeros(4, dtype=int))
        ens = simulate_strict(model, u, 2, tg, 0)
        # path 0.25, 0.5, 0.75, 1.0: three of four steps leave the box
        assert ens.box_exits == 2 * 3


class TestMultiDimensional:
    def test_planar_rotation_model(self):
        def b(t, x, y, a):
            return np.stack([-x[:, 1], x[:, 0]], axis=1)

        def sigma(t, x, y, a):
            out = np.zeros((x.shape[0], 2, 2))
            out[:, 0, 0] = 0.1
            out[:, 1, 1] = 0.1
            return out

        model = _custom_model(b, sigma, d=2, x0=[1.0, 0.0])
        grid = make_action_grid([0.0, 1.0])
        tg = TimeGrid(T=1.0, K=32)
        mu = _half_mixture(grid, tg)
        ens, driver = simulate_relaxed(model, mu, 200, tg, 0)
        assert ens.states.shape == (200, 33, 2)
        assert ens.mf_psi.shape == (33, 2)
        # weak noise: the ensemble mean stays near the deterministic rotation
        mean_T = ens.states[:, -1, :].mean(axis=0)
        assert np.linalg.norm(mean_T - [np.cos(1.0), np.sin(1.0)]) < 0.2
        assert driver.block(0).shape == (200, 2, 2)


class TestEmpiricalMeanfield:
    def test_matches_cached_trajectories(self):
        model = lookup_model("lipschitz_mf_test")
        grid = make_action_grid([-1, 1])
        tg = TimeGrid(T=1.0, K=16)
        ens, _ = simulate_relaxed(model, _half_mixture(grid, tg), 100, tg, 1)
        for k in (0, 7, 16):
            assert np.array_equal(empirical_meanfield(ens, "psi", k), ens.mf_psi[k])
            assert np.array_equal(empirical_meanfield(ens, "phi", k), ens.mf_phi[k])

    def test_invalid_queries_rejected(self):
        model = lookup_model("lipschitz_mf_test")
        grid = make_action_grid([-1, 1])
        tg = TimeGrid(T=1.0, K=8)
        ens, _ = simulate_relaxed(model, _half_mixture(grid, tg), 10, tg, 1)
        with pytest.raises(ValidationError):
            empirical_meanfield(ens, "nope", 0)
        with pytest.raises(ValidationError):
            empirical_meanfield(ens, "psi", 9)

    def test_monte_carlo_rate(self):
        # std of the mean-field estimate across replicates scales like 1/sqrt(N)
        model = lookup_model("lipschitz_mf_test")
        grid = make_action_grid([-1, 1])
        tg = TimeGrid(T=1.0, K=16)
        mu = _half_mixture(grid, tg)

        def replicate_std(N):
            vals = []
            for seed in range(32):
                ens, _ = simulate_relaxed(model, mu, N, tg, 1000 + seed)
                vals.append(ens.mf_psi[-1][0])
            return np.std(vals, ddof=1)

        ratio = replicate_std(200) / replicate_std(800)
        assert 1.4 <= ratio <= 2.8

    def test_time_step_stability(self):
        # halving the step moves the terminal second moment by a few stderr
        model = lookup_model("lipschitz_mf_test")
        grid = make_action_grid([-1, 1])

        def m2(K):
            tg = TimeGrid(T=1.0, K=K)
            ens, _ = simulate_relaxed(model, _half_mixture(grid, tg), 4000, tg, 0)
            v = ens.states[:, -1, 0] ** 2
            return float(np.mean(v)), float(np.std(v, ddof=1) / np.sqrt(4000))

        a, sa = m2(32)
        b, sb = m2(64)
        assert abs(a - b) <= 5 * np.hypot(sa, sb) + 0.05


class TestQuadraticVariation:
    def setup_method(self):
        self.model = lookup_model("diffusion_counterexample")
        self.grid = make_action_grid([-1, 1])
        self.tg = TimeGrid(T=1.0, K=64)
        self.mu = _half_mixture(self.grid, self.tg)
        _, self.driver = simulate_relaxed(self.model, self.mu, 4000, self.tg, 7)

    def test_single_atom_mass(self):
        samples = qv_samples(self.driver, self.mu, {0}, 1.0)
        se = float(np.std(samples, ddof=1) / np.sqrt(samples.shape[0]))
        assert abs(float(np.mean(samples)) - 0.5) <= 3 * se

    def test_additivity_over_disjoint_subsets(self):
        s0 = qv_samples(self.driver, self.mu, {0}, 1.0)
        s1 = qv_samples(self.driver, self.mu, {1}, 1.0)
        sboth = qv_samples(self.driver, self.mu, {0, 1}, 1.0)
        gap = s0 + s1 - sboth
        se = float(np.std(gap, ddof=1) / np.sqrt(gap.shape[0]))
        assert abs(float(np.mean(gap))) <= 3 * se + 1e-12

    def test_time_scaling(self):
        half = qv_estimate(self.driver, self.mu, {0, 1}, 0.5)
        full = qv_estimate(self.driver, self.mu, {0, 1}, 1.0)
        assert 0.3 <= half <= 0.7 and 0.8 <= full <= 1.2

    def test_empty_subset_is_zero(self):
        assert qv_estimate(self.driver, self.mu, set(), 1.0) == 0.0

    def test_invalid_subset_rejected(self):
        with pytest.raises(ValidationError):
            qv_samples(self.driver, self.mu, {5}, 1.0)


class TestDriverIncrements:
    def test_block_statistics(self):
        d = DriverIncrements(seed=0, N=20000, K=4, p=2, d=1, dt=0.01)
        blk = d.block(0)
        assert blk.shape == (20000, 2, 1)
        assert abs(blk.mean()) < 4 * np.sqrt(0.01 / 20000)
        assert abs(blk.var() - 0.01) < 0.001

    def test_blocks_reproducible(self):
        d = DriverIncrements(seed=0, N=10, K=4, p=2, d=1, dt=0.1)
        assert np.array_equal(d.block(2), d.block(2))

    def test_materialization_guard(self):
        d = DriverIncrements(seed=0, N=10**6, K=512, p=2, d=1, dt=0.001)
        with pytest.raises(ValidationError):
            _ = d.gaussians

    def test_small_materialization(self):
        d = DriverIncrements(seed=0, N=5, K=3, p=2, d=1, dt=0.1)
        g = d.gaussians
        assert g.shape == (5, 3, 2, 1)
        assert np.array_equal(g[:, 1], d.block(1))
