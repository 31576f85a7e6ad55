"""Interpolation kernels.

Every correction term and every Steklov average is a weighted sum of
multilinear interpolants of gridded data, so these loops dominate the
runtime of the approximation stage. Each kernel has a numba version
(``*_nb``) and a vectorised numpy version (``*_np``); the public functions
dispatch on :data:`rehomog._accel.NUMBA_ENABLED`.

Coordinates are given in *index units*: ``idx[p, a]`` is the fractional
grid index of point ``p`` along axis ``a``.
"""
import itertools

import numpy as np

from . import _accel
from ._accel import njit

__all__ = [
    "interp_periodic",
    "interp_periodic_grad",
    "interp_clamped",
]


# --------------------------------------------------------------------------
# numba kernels


@njit
def _wrap(i, n):
    r = i % n
    if r < 0:
        r += n
    return r


@njit
def _periodic1_nb(table, idx):
    n0 = table.shape[0]
    out = np.empty(idx.shape[0])
    for p in range(idx.shape[0]):
        t = idx[p, 0]
        f = np.floor(t)
        w = t - f
        i0 = _wrap(np.int64(f), n0)
        i1 = _wrap(i0 + 1, n0)
        out[p] = (1.0 - w) * table[i0] + w * table[i1]
    return out


@njit
def _periodic2_nb(table, idx):
    n0, n1 = table.shape
    out = np.empty(idx.shape[0])
    for p in range(idx.shape[0]):
        f0 = np.floor(idx[p, 0])
        f1 = np.floor(idx[p, 1])
        w0 = idx[p, 0] - f0
        w1 = idx[p, 1] - f1
        a0 = _wrap(np.int64(f0), n0)
        a1 = _wrap(a0 + 1, n0)
        b0 = _wrap(np.int64(f1), n1)
        b1 = _wrap(b0 + 1, n1)
        out[p] = ((1.0 - w0) * ((1.0 - w1) * table[a0, b0] + w1 * table[a0, b1])
                  + w0 * ((1.0 - w1) * table[a1, b0] + w1 * table[a1, b1]))
    return out


@njit
def _periodic4_nb(table, idx):
    shape = table.shape
    out = np.empty(idx.shape[0])
    lo = np.empty(4, dtype=np.int64)
    hi = np.empty(4, dtype=np.int64)
    w = np.empty(4)
    for p in range(idx.shape[0]):
        for a in range(4):
            f = np.floor(idx[p, a])
            w[a] = idx[p, a] - f
            lo[a] = _wrap(np.int64(f), shape[a])
            hi[a] = _wrap(lo[a] + 1, shape[a])
        acc = 0.0
        for c in range(16):
            wt = 1.0
            i0 = lo[0]
            i1 = lo[1]
            i2 = lo[2]
            i3 = lo[3]
            if c & 8:
                wt *= w[0]
                i0 = hi[0]
            else:
                wt *= 1.0 - w[0]
            if c & 4:
                wt *= w[1]
                i1 = hi[1]
            else:
                wt *= 1.0 - w[1]
            if c & 2:
                wt *= w[2]
                i2 = hi[2]
            else:
                wt *= 1.0 - w[2]
            if c & 1:
                wt *= w[3]
                i3 = hi[3]
            else:
                wt *= 1.0 - w[3]
            acc += wt * table[i0, i1, i2, i3]
        out[p] = acc
    return out


@njit
def _periodic1_grad_nb(table, idx):
    n0 = table.shape[0]
    out = np.empty((idx.shape[0], 1))
    for p in range(idx.shape[0]):
        i0 = _wrap(np.int64(np.floor(idx[p, 0])), n0)
        out[p, 0] = table[_wrap(i0 + 1, n0)] - table[i0]
    return out


@njit
def _periodic2_grad_nb(table, idx):
    n0, n1 = table.shape
    out = np.empty((idx.shape[0], 2))
    for p in range(idx.shape[0]):
        f0 = np.floor(idx[p, 0])
        f1 = np.floor(idx[p, 1])
        w0 = idx[p, 0] - f0
        w1 = idx[p, 1] - f1
        a0 = _wrap(np.int64(f0), n0)
        a1 = _wrap(a0 + 1, n0)
        b0 = _wrap(np.int64(f1), n1)
        b1 = _wrap(b0 + 1, n1)
        out[p, 0] = ((1.0 - w1) * (table[a1, b0] - table[a0, b0])
                     + w1 * (table[a1, b1] - table[a0, b1]))
        out[p, 1] = ((1.0 - w0) * (table[a0, b1] - table[a0, b0])
                     + w0 * (table[a1, b1] - table[a1, b0]))
    return out


@njit
def _clamped1_nb(table, idx):
    n0 = table.shape[0]
    out = np.empty(idx.shape[0])
    for p in range(idx.shape[0]):
        i0 = min(max(np.int64(np.floor(idx[p, 0])), 0), n0 - 2)
        w = idx[p, 0] - i0
        out[p] = (1.0 - w) * table[i0] + w * table[i0 + 1]
    return out


@njit
def _clamped2_nb(table, idx):
    n0, n1 = table.shape
    out = np.empty(idx.shape[0])
    for p in range(idx.shape[0]):
        a = min(max(np.int64(np.floor(idx[p, 0])), 0), n0 - 2)
        b = min(max(np.int64(np.floor(idx[p, 1])), 0), n1 - 2)
        w0 = idx[p, 0] - a
        w1 = idx[p, 1] - b
        out[p] = ((1.0 - w0) * ((1.0 - w1) * table[a, b] + w1 * table[a, b + 1])
                  + w0 * ((1.0 - w1) * table[a + 1, b] + w1 * table[a + 1, b + 1]))
    return out


_PERIODIC_NB = {1: _periodic1_nb, 2: _periodic2_nb, 4: _periodic4_nb}
_PERIODIC_GRAD_NB = {1: _periodic1_grad_nb, 2: _periodic2_grad_nb}
_CLAMPED_NB = {1: _clamped1_nb, 2: _clamped2_nb}


# --------------------------------------------------------------------------
# numpy fallbacks


def _split(idx):
    base = np.floor(idx)
    return base.astype(np.int64), idx - base


def interp_periodic_np(table, idx):
    base, w = _split(idx)
    out = np.zeros(idx.shape[0])
    for corner in itertools.product((0, 1), repeat=table.ndim):
        ind = tuple((base[:, a] + c) % table.shape[a] for a, c in enumerate(corner))
        wt = np.ones(idx.shape[0])
        for a, c in enumerate(corner):
            wt *= w[:, a] if c else 1.0 - w[:, a]
        out += wt * table[ind]
    return out


def interp_periodic_grad_np(table, idx):
    base, w = _split(idx)
    k = table.ndim
    out = np.zeros((idx.shape[0], k))
    for corner in itertools.product((0, 1), repeat=k):
        ind = tuple((base[:, a] + c) % table.shape[a] for a, c in enumerate(corner))
        vals = table[ind]
        for b in range(k):
            wt = np.ones(idx.shape[0])
            for a, c in enumerate(corner):
                if a == b:
                    wt *= 1.0 if c else -1.0
                else:
                    wt *= w[:, a] if c else 1.0 - w[:, a]
            out[:, b] += wt * vals
    return out


def interp_clamped_np(table, idx):
    k = table.ndim
    base = np.floor(idx).astype(np.int64)
    for a in range(k):
        base[:, a] = np.clip(base[:, a], 0, table.shape[a] - 2)
    w = idx - base
    out = np.zeros(idx.shape[0])
    for corner in itertools.product((0, 1), repeat=k):
        ind = tuple(base[:, a] + c for a, c in enumerate(corner))
        wt = np.ones(idx.shape[0])
        for a, c in enumerate(corner):
            wt *= w[:, a] if c else 1.0 - w[:, a]
        out += wt * table[ind]
    return out


# --------------------------------------------------------------------------
# dispatch


def _prep(table, idx):
    table = np.ascontiguousarray(table, dtype=np.float64)
    idx = np.ascontiguousarray(np.atleast_2d(idx), dtype=np.float64)
    if idx.shape[1] != table.ndim:
        raise ValueError(f"index dimension {idx.shape[1]} != table rank {table.ndim}")
    return table, idx


def interp_periodic(table, idx):
    """Periodic multilinear interpolation of ``table`` at index coords ``idx``."""
    table, idx = _prep(table, idx)
    if _accel.NUMBA_ENABLED and table.ndim in _PERIODIC_NB:
        return _PERIODIC_NB[table.ndim](table, idx)
    return interp_periodic_np(table, idx)


def interp_periodic_grad(table, idx):
    """Gradient (per unit index) of the periodic multilinear interpolant."""
    table, idx = _prep(table, idx)
    if _accel.NUMBA_ENABLED and table.ndim in _PERIODIC_GRAD_NB:
        return _PERIODIC_GRAD_NB[table.ndim](table, idx)
    return interp_periodic_grad_np(table, idx)


def interp_clamped(table, idx):
    """Multilinear interpolation on a bounded grid; out-of-range points extrapolate
    linearly from the edge cell."""
    table, idx = _prep(table, idx)
    if _accel.NUMBA_ENABLED and table.ndim in _CLAMPED_NB:
        return _CLAMPED_NB[table.ndim](table, idx)
    return interp_clamped_np(table, idx)
