"""Loop-heavy numeric kernels.

Each kernel exists twice: an explicit-loop version compiled with numba's
``@njit`` and a vectorized numpy version. ``AGELAB_NUMBA=0`` in the
environment (read at import time) selects the numpy path; so does a
missing numba install. Both paths must agree to floating-point round-off,
which the test suite checks.
"""
from __future__ import annotations

import os

import numpy as np

_flag = os.environ.get("AGELAB_NUMBA", "1").strip().lower()
USE_NUMBA = _flag not in ("0", "false", "no", "off")

if USE_NUMBA:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - numba is a hard dependency in CI
        USE_NUMBA = False


# ---------------------------------------------------------------- numpy path

def _knn_kth_distance_np(x: np.ndarray, k: int) -> np.ndarray:
    n, dim = x.shape
    out = np.empty(n)
    step = max(1, 4_000_000 // max(n * dim, 1))
    for lo in range(0, n, step):
        hi = min(n, lo + step)
        diff = x[lo:hi, None, :] - x[None, :, :]
        d2 = np.einsum("ijc,ijc->ij", diff, diff)
        d2[np.arange(hi - lo), np.arange(lo, hi)] = np.inf
        out[lo:hi] = np.partition(d2, k - 1, axis=1)[:, k - 1]
    return np.sqrt(out)


def _pushforward_many_np(probs: np.ndarray, maps: np.ndarray, k_dst: int) -> np.ndarray:
    n_maps = maps.shape[0]
    rows = np.repeat(np.arange(n_maps), maps.shape[1])
    out = np.zeros((n_maps, k_dst))
    np.add.at(out, (rows, maps.ravel()), np.tile(probs, n_maps))
    return out


def _pushforward_table_np(dists: np.ndarray, maps: np.ndarray, k_dst: int) -> np.ndarray:
    n_d, k_src = dists.shape
    n_m = maps.shape[0]
    out = np.zeros((n_d, n_m, k_dst))
    onehot = np.zeros((n_m, k_src, k_dst))
    onehot[np.arange(n_m)[:, None], np.arange(k_src)[None, :], maps] = 1.0
    out += np.einsum("ds,msk->dmk", dists, onehot)
    return out


# ---------------------------------------------------------------- numba path

if USE_NUMBA:

    @njit(cache=True, nogil=True)
    def _knn_kth_distance_nb(x, k):
        n, dim = x.shape
        out = np.empty(n)
        best = np.empty(k)
        for i in range(n):
            for t in range(k):
                best[t] = np.inf
            for j in range(n):
                if j == i:
                    continue
                d2 = 0.0
                for c in range(dim):
                    diff = x[i, c] - x[j, c]
                    d2 += diff * diff
                if d2 < best[k - 1]:
                    # insertion into the sorted buffer of the k smallest
                    t = k - 1
                    while t > 0 and best[t - 1] > d2:
                        best[t] = best[t - 1]
                        t -= 1
                    best[t] = d2
            out[i] = np.sqrt(best[k - 1])
        return out

    @njit(cache=True, nogil=True)
    def _pushforward_many_nb(probs, maps, k_dst):
        n_maps, k_src = maps.shape
        out = np.zeros((n_maps, k_dst))
        for m in range(n_maps):
            for i in range(k_src):
                out[m, maps[m, i]] += probs[i]
        return out

    @njit(cache=True, nogil=True)
    def _pushforward_table_nb(dists, maps, k_dst):
        n_d, k_src = dists.shape
        n_m = maps.shape[0]
        out = np.zeros((n_d, n_m, k_dst))
        for d in range(n_d):
            for m in range(n_m):
                for i in range(k_src):
                    out[d, m, maps[m, i]] += dists[d, i]
        return out


# ---------------------------------------------------------------- dispatch

def knn_kth_distance(x: np.ndarray, k: int) -> np.ndarray:
    """Euclidean distance from every row of ``x`` to its k-th nearest other row."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    if USE_NUMBA:
        return _knn_kth_distance_nb(x, int(k))
    return _knn_kth_distance_np(x, int(k))


def pushforward_many(probs: np.ndarray, maps: np.ndarray, k_dst: int) -> np.ndarray:
    """Push one distribution through each row of ``maps`` (n_maps x K_src ints)."""
    probs = np.ascontiguousarray(probs, dtype=np.float64)
    maps = np.ascontiguousarray(maps, dtype=np.int64)
    if USE_NUMBA:
        return _pushforward_many_nb(probs, maps, int(k_dst))
    return _pushforward_many_np(probs, maps, int(k_dst))


def pushforward_table(dists: np.ndarray, maps: np.ndarray, k_dst: int) -> np.ndarray:
    """out[d, m] = maps[m] pushforward of dists[d]; shape (n_dists, n_maps, k_dst)."""
    dists = np.ascontiguousarray(dists, dtype=np.float64)
    maps = np.ascontiguousarray(maps, dtype=np.int64)
    if USE_NUMBA:
        return _pushforward_table_nb(dists, maps, int(k_dst))
    return _pushforward_table_np(dists, maps, int(k_dst))


def numpy_path():
    """The numpy implementations, for cross-checking and benchmarking."""
    return {
        "knn_kth_distance": lambda x, k: _knn_kth_distance_np(np.asarray(x, float), int(k)),
        "pushforward_many": lambda p, m, k: _pushforward_many_np(np.asarray(p, float), np.asarray(m, np.int64), int(k)),
        "pushforward_table": lambda d, m, k: _pushforward_table_np(np.asarray(d, float), np.asarray(m, np.int64), int(k)),
    }


def numba_path():
    if not USE_NUMBA:
        return None
    return {
        "knn_kth_distance": lambda x, k: _knn_kth_distance_nb(np.ascontiguousarray(x, float), int(k)),
        "pushforward_many": lambda p, m, k: _pushforward_many_nb(np.ascontiguousarray(p, float), np.ascontiguousarray(m, np.int64), int(k)),
        "pushforward_table": lambda d, m, k: _pushforward_table_nb(np.ascontiguousarray(d, float), np.ascontiguousarray(m, np.int64), int(k)),
    }
