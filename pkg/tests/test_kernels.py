import numpy as np
import pytest

from dualflow import kernels
from dualflow._accel import HAVE_NUMBA, numba_enabled

needs_numba = pytest.mark.skipif(not HAVE_NUMBA, reason="numba not installed")


def test_env_flag_selects_numpy(monkeypatch):
    monkeypatch.setenv("DUALFLOW_DISABLE_NUMBA", "1")
    assert not numba_enabled()


@needs_numba
@pytest.mark.parametrize("start,n", [(0, 1), (0, 1001), (37, 256)])
def test_counter_streams_agree(start, n):
    key = 0x9E3779B97F4A7C15
    assert np.array_equal(kernels.counter_uniforms_numba(key, start, n),
                          kernels.counter_uniforms_numpy(key, start, n))
    np.testing.assert_allclose(kernels.counter_normals_numba(key, start, n),
                               kernels.counter_normals_numpy(key, start, n),
                               rtol=0, atol=1e-15)


@needs_numba
def test_pairwise_distance_agrees(rng):
    a, b = rng.normal(size=(700, 3)), rng.normal(size=(300, 3))
    ref = np.mean(np.linalg.norm(a[:, None] - b[None], axis=2))
    for fn in (kernels.mean_pairwise_distance_numba, kernels.mean_pairwise_distance_numpy):
        assert fn(a, b) == pytest.approx(ref, rel=1e-12)


@needs_numba
@pytest.mark.parametrize("cell", [1, 2, 4, 8, 16])
def test_block_stats_agree(rng, cell):
    imgs = rng.uniform(size=(3, 16, 16))
    m1, s1 = kernels.block_stats_numba(imgs, cell)
    m2, s2 = kernels.block_stats_numpy(imgs, cell)
    np.testing.assert_allclose(m1, m2, atol=1e-15)
    np.testing.assert_allclose(s1, s2, atol=1e-12)
    blocks = imgs.reshape(3, 16 // cell, cell, 16 // cell, cell)
    np.testing.assert_allclose(m2, blocks.mean(axis=(2, 4)), atol=1e-15)


def test_block_stats_rejects_bad_cell(rng):
    with pytest.raises(ValueError):
        kernels.block_stats(rng.uniform(size=(1, 16, 16)), 3)


def test_dispatch_follows_flag(monkeypatch, rng):
    a = rng.normal(size=(50, 2))
    monkeypatch.setenv("DUALFLOW_DISABLE_NUMBA", "1")
    slow = kernels.mean_pairwise_distance(a, a)
    monkeypatch.delenv("DUALFLOW_DISABLE_NUMBA")
    assert kernels.mean_pairwise_distance(a, a) == pytest.approx(slow, rel=1e-13)
