"""Hot loops, compiled with numba when available.

Every kernel has two implementations: a loop version written in the numba
subset (``*_loop``) and a vectorized numpy version (``*_numpy``). The public
name is bound to the jitted loop version unless numba is missing or the
environment sets ``RELSTATE_DISABLE_NUMBA=1``.
"""

from __future__ import annotations

import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

NUMBA_AVAILABLE = numba is not None
NUMBA_ENABLED = NUMBA_AVAILABLE and os.environ.get("RELSTATE_DISABLE_NUMBA", "0") not in ("1", "true", "yes")
BACKEND = "numba" if NUMBA_ENABLED else "numpy"


def _jit(func):
    if NUMBA_AVAILABLE:
        return numba.njit(cache=True)(func)
    return func


def worker_count() -> int:
    """Number of workers allowed by ``RELSTATE_THREADS`` (at least 1)."""
    raw = os.environ.get("RELSTATE_THREADS")
    n = os.cpu_count() or 1
    if raw:
        try:
            n = min(n, max(1, int(raw)))
        except ValueError:
            pass
    return n


def apply_thread_cap() -> int:
    """Cap numba's thread pool to :func:`worker_count` and return the cap."""
    n = worker_count()
    if NUMBA_AVAILABLE:
        if "NUMBA_THREADING_LAYER_PRIORITY" not in os.environ:
            # try TBB last: old TBB builds only produce a warning before falling back
            numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]
        n = min(n, numba.config.NUMBA_NUM_THREADS)
        numba.set_num_threads(n)
    return n


# overlaps between consecutive states --------------------------------------

def overlap_increments_loop(states):
    m, d = states.shape
    out = np.empty(m - 1, dtype=np.complex128)
    for k in range(m - 1):
        acc = 0j
        for j in range(d):
            acc += states[k, j].conjugate() * states[k + 1, j]
        out[k] = acc
    return out


def overlap_increments_numpy(states):
    return np.einsum("kj,kj->k", states[:-1].conj(), states[1:])


# bilinear sampling of a complex grid field --------------------------------

def bilinear_loop(values, u0, v0, du, dv, pu, pv):
    nu, nv = values.shape
    out = np.empty(pu.shape[0], dtype=np.complex128)
    for k in range(pu.shape[0]):
        fu = (pu[k] - u0) / du
        fv = (pv[k] - v0) / dv
        i = min(max(int(np.floor(fu)), 0), nu - 2)
        j = min(max(int(np.floor(fv)), 0), nv - 2)
        a = fu - i
        b = fv - j
        out[k] = ((1 - a) * (1 - b) * values[i, j] + a * (1 - b) * values[i + 1, j]
                  + (1 - a) * b * values[i, j + 1] + a * b * values[i + 1, j + 1])
    return out


def bilinear_numpy(values, u0, v0, du, dv, pu, pv):
    nu, nv = values.shape
    fu = (pu - u0) / du
    fv = (pv - v0) / dv
    i = np.clip(np.floor(fu).astype(np.int64), 0, nu - 2)
    j = np.clip(np.floor(fv).astype(np.int64), 0, nv - 2)
    a = fu - i
    b = fv - j
    return ((1 - a) * (1 - b) * values[i, j] + a * (1 - b) * values[i + 1, j]
            + (1 - a) * b * values[i, j + 1] + a * b * values[i + 1, j + 1])


# periodic 3-point Laplacian along the last axis of a 2-D array -------------

def laplacian_periodic_loop(f, dx):
    rows, n = f.shape
    out = np.empty_like(f)
    inv = 1.0 / (dx * dx)
    for r in range(rows):
        for j in range(n):
            out[r, j] = (f[r, (j + 1) % n] - 2.0 * f[r, j] + f[r, (j - 1) % n]) * inv
    return out


def laplacian_periodic_numpy(f, dx):
    return (np.roll(f, -1, axis=-1) - 2.0 * f + np.roll(f, 1, axis=-1)) / (dx * dx)


# RK4 for decoupled damped oscillators x'' + K(t) x' + nu2 x = 0 -------------

def modal_rk4_loop(x0, v0, nu2, k_table, dt, n_steps, stride):
    """Integrate each mode independently.

    ``k_table`` holds K at the half-step grid ``t = j dt / 2`` for
    ``j = 0 .. 2 n_steps``. Samples are returned every ``stride`` steps.
    """
    m = x0.shape[0]
    n_out = n_steps // stride + 1
    xs = np.empty((n_out, m), dtype=np.complex128)
    vs = np.empty((n_out, m), dtype=np.complex128)
    for q in range(m):
        x = x0[q]
        v = v0[q]
        w = nu2[q]
        xs[0, q] = x
        vs[0, q] = v
        for n in range(n_steps):
            ka = k_table[2 * n]
            kb = k_table[2 * n + 1]
            kc = k_table[2 * n + 2]
            k1x = v
            k1v = -ka * v - w * x
            x2 = x + 0.5 * dt * k1x
            v2 = v + 0.5 * dt * k1v
            k2x = v2
            k2v = -kb * v2 - w * x2
            x3 = x + 0.5 * dt * k2x
            v3 = v + 0.5 * dt * k2v
            k3x = v3
            k3v = -kb * v3 - w * x3
            x4 = x + dt * k3x
            v4 = v + dt * k3v
            k4x = v4
            k4v = -kc * v4 - w * x4
            x = x + dt / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
            v = v + dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
            if (n + 1) % stride == 0:
                xs[(n + 1) // stride, q] = x
                vs[(n + 1) // stride, q] = v
    return xs, vs


def modal_rk4_numpy(x0, v0, nu2, k_table, dt, n_steps, stride):
    n_out = n_steps // stride + 1
    xs = np.empty((n_out, x0.shape[0]), dtype=np.complex128)
    vs = np.empty_like(xs)
    x = x0.astype(np.complex128)
    v = v0.astype(np.complex128)
    xs[0], vs[0] = x, v
    for n in range(n_steps):
        ka, kb, kc = k_table[2 * n], k_table[2 * n + 1], k_table[2 * n + 2]
        k1x, k1v = v, -ka * v - nu2 * x
        x2, v2 = x + 0.5 * dt * k1x, v + 0.5 * dt * k1v
        k2x, k2v = v2, -kb * v2 - nu2 * x2
        x3, v3 = x + 0.5 * dt * k2x, v + 0.5 * dt * k2v
        k3x, k3v = v3, -kb * v3 - nu2 * x3
        x4, v4 = x + dt * k3x, v + dt * k3v
        k4x, k4v = v4, -kc * v4 - nu2 * x4
        x = x + dt / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        v = v + dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
        if (n + 1) % stride == 0:
            xs[(n + 1) // stride], vs[(n + 1) // stride] = x, v
    return xs, vs


overlap_increments_jit = _jit(overlap_increments_loop)
bilinear_jit = _jit(bilinear_loop)
laplacian_periodic_jit = _jit(laplacian_periodic_loop)
modal_rk4_jit = _jit(modal_rk4_loop)

if NUMBA_ENABLED:
    overlap_increments = overlap_increments_jit
    bilinear = bilinear_jit
    laplacian_periodic = laplacian_periodic_jit
    modal_rk4 = modal_rk4_jit
else:
    overlap_increments = overlap_increments_numpy
    bilinear = bilinear_numpy
    laplacian_periodic = laplacian_periodic_numpy
    modal_rk4 = modal_rk4_numpy
