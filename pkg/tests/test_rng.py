import numpy as np
from scipy import stats

from relaxctl import rng


def test_blocks_reproducible():
    a = rng.uniform_block(0, 3, 1, 100, 2)
    b = rng.uniform_block(0, 3, 1, 100, 2)
    assert np.array_equal(a, b)


def test_addresses_decorrelated():
    base = rng.uniform_block(0, 0, 0, 1000, 1)
    for seed, step, slot in ((1, 0, 0), (0, 1, 0), (0, 0, 1)):
        other = rng.uniform_block(seed, step, slot, 1000, 1)
        assert not np.array_equal(base, other)
        # correlation of independent streams is O(1/sqrt(n))
        assert abs(np.corrcoef(base[:, 0], other[:, 0])[0, 1]) < 0.15


def test_prefix_stability():
    # the first n rows of a block do not depend on the block size requested
    big = rng.uniform_block(7, 2, 0, 500, 3)
    small = rng.uniform_block(7, 2, 0, 100, 3)
    assert np.array_equal(big[:100], small)


def test_uniform_range():
    u = rng.uniform_block(0, 0, 0, 10000, 1)
    assert (u > 0).all() and (u <= 1).all()


def test_gaussian_distribution():
    z = rng.gaussian_block(0, 0, 0, 20000, 1, dt=1.0)[:, 0]
    assert stats.kstest(z, "norm").pvalue > 0.01


def test_gaussian_variance_scales_with_dt():
    z = rng.gaussian_block(0, 0, 0, 20000, 1, dt=0.25)[:, 0]
    assert abs(z.var() - 0.25) < 0.01
    full = rng.gaussian_block(0, 0, 0, 20000, 1, dt=1.0)[:, 0]
    assert np.array_equal(z, 0.5 * full)


def test_seed_wraps_modulo_2_64():
    a = rng.uniform_block(5, 0, 0, 10, 1)
    b = rng.uniform_block(5 + 2**64, 0, 0, 10, 1)
    assert np.array_equal(a, b)


def test_manifest_fields():
    from relaxctl import TimeGrid

    m = rng.make_manifest(3, 100, TimeGrid(T=2.0, K=8), {"regime": "strict"})
    assert m["seed"] == 3 and m["N"] == 100 and m["K"] == 8 and m["T"] == 2.0
    assert m["scheme"] == rng.SCHEME_ID
    assert m["regime"] == "strict"
