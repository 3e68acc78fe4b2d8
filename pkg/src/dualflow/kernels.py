"""Hot numeric kernels, each with a numba and a pure-numpy implementation.

The public names dispatch on :func:`dualflow._accel.numba_enabled` at call
time. ``*_numba`` and ``*_numpy`` variants are exported for tests and the
benchmark.
"""
import math

import numpy as np

from ._accel import njit, numba_enabled

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_ONE = np.uint64(1)
_TWO = np.uint64(2)
_INV53 = 1.0 / 9007199254740992.0  # 2**-53
_TWO_PI = 2.0 * math.pi


# -- counter-based uniforms / normals -------------------------------------

@njit
def _uniforms_nb(key, start, n):
    out = np.empty(n, dtype=np.float64)
    for i in range(n):
        z = key + (np.uint64(start + i) + _ONE) * _GOLDEN
        z = (z ^ (z >> _S30)) * _M1
        z = (z ^ (z >> _S27)) * _M2
        z = z ^ (z >> _S31)
        out[i] = float(z >> _S11) * _INV53
    return out


@njit
def _normals_nb(key, start, n):
    out = np.empty(n, dtype=np.float64)
    for i in range(n):
        c = np.uint64(start + i) * _TWO
        z = key + (c + _ONE) * _GOLDEN
        z = (z ^ (z >> _S30)) * _M1
        z = (z ^ (z >> _S27)) * _M2
        z = z ^ (z >> _S31)
        u1 = float(z >> _S11) * _INV53
        z = key + (c + _TWO) * _GOLDEN
        z = (z ^ (z >> _S30)) * _M1
        z = (z ^ (z >> _S27)) * _M2
        z = z ^ (z >> _S31)
        u2 = float(z >> _S11) * _INV53
        out[i] = math.sqrt(-2.0 * math.log(1.0 - u1)) * math.cos(_TWO_PI * u2)
    return out


def _mix_np(counters, key):
    z = np.uint64(key) + (counters + _ONE) * _GOLDEN
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def _uniforms_np(key, start, n):
    counters = np.arange(start, start + n, dtype=np.uint64)
    return (_mix_np(counters, key) >> _S11).astype(np.float64) * _INV53


def _normals_np(key, start, n):
    c = np.arange(start, start + n, dtype=np.uint64) * _TWO
    u1 = (_mix_np(c, key) >> _S11).astype(np.float64) * _INV53
    u2 = (_mix_np(c + _ONE, key) >> _S11).astype(np.float64) * _INV53
    return np.sqrt(-2.0 * np.log(1.0 - u1)) * np.cos(_TWO_PI * u2)


def counter_uniforms_numba(key, start, n):
    return _uniforms_nb(np.uint64(key), start, n)


def counter_uniforms_numpy(key, start, n):
    return _uniforms_np(key, start, n)


def counter_normals_numba(key, start, n):
    return _normals_nb(np.uint64(key), start, n)


def counter_normals_numpy(key, start, n):
    return _normals_np(key, start, n)


def counter_uniforms(key, start, n):
    """``n`` uniforms in [0, 1) for counters ``start .. start+n-1`` under ``key``."""
    if numba_enabled():
        return counter_uniforms_numba(key, start, n)
    return counter_uniforms_numpy(key, start, n)


def counter_normals(key, start, n):
    """``n`` standard normals (Box-Muller, cosine branch) under ``key``."""
    if numba_enabled():
        return counter_normals_numba(key, start, n)
    return counter_normals_numpy(key, start, n)


# -- mean pairwise Euclidean distance -------------------------------------

@njit
def _mean_pdist_nb(a, b):
    n, d = a.shape
    m = b.shape[0]
    total = 0.0
    for i in range(n):
        row = 0.0
        for j in range(m):
            s = 0.0
            for k in range(d):
                diff = a[i, k] - b[j, k]
                s += diff * diff
            row += math.sqrt(s)
        total += row
    return total / (n * m)


def mean_pairwise_distance_numba(a, b):
    return _mean_pdist_nb(np.ascontiguousarray(a, dtype=np.float64),
                          np.ascontiguousarray(b, dtype=np.float64))


def mean_pairwise_distance_numpy(a, b, chunk=512):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    total = 0.0
    for lo in range(0, a.shape[0], chunk):
        diff = a[lo:lo + chunk, None, :] - b[None, :, :]
        total += np.sqrt(np.einsum("ijk,ijk->ij", diff, diff)).sum()
    return total / (a.shape[0] * b.shape[0])


def mean_pairwise_distance(a, b):
    """Mean of ``||a_i - b_j||`` over all ordered pairs (rows are samples)."""
    if numba_enabled():
        return mean_pairwise_distance_numba(a, b)
    return mean_pairwise_distance_numpy(a, b)


# -- block statistics for the patch feature extractor ---------------------

@njit
def _block_stats_nb(imgs, cell):
    n, h, w = imgs.shape
    bh = h // cell
    bw = w // cell
    means = np.empty((n, bh, bw))
    stds = np.empty((n, bh, bw))
    inv = 1.0 / (cell * cell)
    for s in range(n):
        for bi in range(bh):
            for bj in range(bw):
                acc = 0.0
                for i in range(bi * cell, (bi + 1) * cell):
                    for j in range(bj * cell, (bj + 1) * cell):
                        acc += imgs[s, i, j]
                mu = acc * inv
                acc = 0.0
                for i in range(bi * cell, (bi + 1) * cell):
                    for j in range(bj * cell, (bj + 1) * cell):
                        dev = imgs[s, i, j] - mu
                        acc += dev * dev
                means[s, bi, bj] = mu
                stds[s, bi, bj] = math.sqrt(acc * inv)
    return means, stds


def block_stats_numba(imgs, cell):
    return _block_stats_nb(np.ascontiguousarray(imgs, dtype=np.float64), cell)


def block_stats_numpy(imgs, cell):
    imgs = np.asarray(imgs, dtype=np.float64)
    n, h, w = imgs.shape
    blocks = imgs.reshape(n, h // cell, cell, w // cell, cell)
    means = blocks.mean(axis=(2, 4))
    dev = blocks - means[:, :, None, :, None]
    stds = np.sqrt((dev * dev).mean(axis=(2, 4)))
    return means, stds


def block_stats(imgs, cell):
    """Per-cell mean and population std of ``(n, h, w)`` images."""
    shape = np.shape(imgs)
    if cell < 1 or shape[1] % cell or shape[2] % cell:
        raise ValueError(f"image sides {shape[1:]} not divisible by cell {cell}")
    if numba_enabled():
        return block_stats_numba(imgs, cell)
    return block_stats_numpy(imgs, cell)
