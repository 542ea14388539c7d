"""Relative evolution of subspace metrics and kets along one real parameter.

The full equation evolves a single metric matrix ``h(t)``:

    h'' = -2 [R + K Kx - 2 Kx h^-1 Kx],   Kx = h'/2,   K = tr(h^-1 Kx)

The linearized forms act on fields over a periodic x-grid with the flat
Laplacian standing in for the curvature.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from . import _kernels, linalg
from .errors import InvalidGrid, InvalidInput, StepRejected

RESIDUAL_TOL = 1e-5

Curvature = Union[np.ndarray, Callable[[float, np.ndarray], np.ndarray]]


class ResidualWarning(UserWarning):
    """The recorded second-order residual exceeded its tolerance."""


@dataclass(frozen=True)
class EvolutionState:
    """Metric ``h``, its parameter derivative ``hdot``, the parameter ``t`` and step."""

    h: np.ndarray
    hdot: np.ndarray
    t: float = 0.0
    step: float = 1e-2

    def __post_init__(self):
        h = linalg.as_matrix(self.h, "h", square=True)
        hdot = linalg.as_matrix(self.hdot, "hdot", square=True)
        if h.shape != hdot.shape:
            raise InvalidInput("h and hdot must have the same shape")
        if self.step <= 0:
            raise InvalidInput("step must be positive")
        scale = max(1.0, float(np.max(np.abs(h))))
        object.__setattr__(self, "h", linalg.hermitize(h, linalg.HERMITICITY_TOL * scale))
        object.__setattr__(self, "hdot", linalg.hermitize(hdot, linalg.HERMITICITY_TOL * max(1.0, float(np.max(np.abs(hdot))))))
        if linalg.min_eigenvalue(self.h) <= linalg.PD_FLOOR:
            raise InvalidInput("h must be positive-definite")


def gc_rhs(h: np.ndarray, hdot: np.ndarray, R: np.ndarray) -> np.ndarray:
    """Second parameter derivative of ``h`` from the Gauss-Codazzi balance.

    Parameters
    ----------
    h, hdot : ndarray, shape (N, N)
        Metric and its derivative.
    R : ndarray, shape (N, N)
        Intrinsic Ricci curvature at the node.

    Returns
    -------
    ndarray
        ``-2 [R + K Kx - 2 Kx h^-1 Kx]`` with ``Kx = hdot / 2`` and
        ``K = tr(h^-1 Kx)``, re-Hermitized.
    """
    hinv = linalg.inv_hermitian(h)
    kx = 0.5 * hdot
    k = np.trace(hinv @ kx)
    out = -2.0 * (R + k * kx - 2.0 * kx @ hinv @ kx)
    return 0.5 * (out + out.conj().T)


def _curvature_at(curvature: Curvature, t: float, h: np.ndarray) -> np.ndarray:
    r = curvature(t, h) if callable(curvature) else curvature
    return np.broadcast_to(np.asarray(r, dtype=np.complex128), h.shape)


def step_gc(state: EvolutionState, curvature: Curvature) -> tuple[EvolutionState, float]:
    """One classical RK4 step of the first-order reduction ``(h, hdot)``.

    Returns
    -------
    new_state : EvolutionState
    drift : float
        Hermiticity drift of ``(h, hdot)`` before re-symmetrization.

    Raises
    ------
    StepRejected
        If the stepped metric is no longer positive-definite.
    """
    dt, t = state.step, state.t

    def f(tt, h, hd):
        return hd, gc_rhs(h, hd, _curvature_at(curvature, tt, h))

    h0, v0 = state.h, state.hdot
    try:
        k1h, k1v = f(t, h0, v0)
        k2h, k2v = f(t + dt / 2, h0 + dt / 2 * k1h, v0 + dt / 2 * k1v)
        k3h, k3v = f(t + dt / 2, h0 + dt / 2 * k2h, v0 + dt / 2 * k2v)
        k4h, k4v = f(t + dt, h0 + dt * k3h, v0 + dt * k3v)
    except Exception as exc:  # singular stage metric
        raise StepRejected(f"stage evaluation failed at t={t}: {exc}", dt / 2) from exc
    h1 = h0 + dt / 6 * (k1h + 2 * k2h + 2 * k3h + k4h)
    v1 = v0 + dt / 6 * (k1v + 2 * k2v + 2 * k3v + k4v)
    drift = max(linalg.hermiticity_error(h1), linalg.hermiticity_error(v1))
    h1 = linalg.hermitize(h1, None)
    v1 = linalg.hermitize(v1, None)
    if not np.all(np.isfinite(h1)) or linalg.min_eigenvalue(h1) <= linalg.PD_FLOOR:
        raise StepRejected(f"metric lost positivity at t={t + dt}", dt / 2)
    if drift > linalg.HERMITICITY_TOL * max(1.0, float(np.max(np.abs(h1)))):
        raise InvalidInput(f"hermiticity drift {drift:.3e} in one step exceeds tolerance")
    return EvolutionState(h1, v1, t + dt, dt), drift


@dataclass
class Trajectory:
    """Accepted states with per-step diagnostics.

    ``residual[k]`` is the relative three-point residual of the second-order
    equation at step ``k`` (``nan`` for the first two states).
    """

    states: list = field(default_factory=list)
    residual: list = field(default_factory=list)
    drift: list = field(default_factory=list)
    min_eig: list = field(default_factory=list)

    @property
    def t(self) -> np.ndarray:
        return np.array([s.t for s in self.states])

    @property
    def h(self) -> np.ndarray:
        return np.array([s.h for s in self.states])

    def records(self) -> list[dict]:
        """One flat record per accepted state (for CSV/JSON dumps)."""
        out = []
        for s, r, d, m in zip(self.states, self.residual, self.drift, self.min_eig):
            rec = {"t": s.t, "residual": r, "drift": d, "min_eig": m}
            for (i, j), v in np.ndenumerate(s.h):
                rec[f"h{i}{j}_re"] = v.real
                rec[f"h{i}{j}_im"] = v.imag
            out.append(rec)
        return out


def evolve_gc(state: EvolutionState, curvature: Curvature, n_steps: int,
              residual_tol: float = RESIDUAL_TOL) -> Trajectory:
    """Integrate ``n_steps`` fixed steps and monitor the second-order residual.

    Residuals above ``residual_tol`` are reported through
    :class:`ResidualWarning`; they do not stop the run.
    """
    traj = Trajectory([state], [np.nan], [0.0], [linalg.min_eigenvalue(state.h)])
    cur = state
    for _ in range(n_steps):
        nxt, drift = step_gc(cur, curvature)
        traj.states.append(nxt)
        traj.drift.append(drift)
        traj.min_eig.append(linalg.min_eigenvalue(nxt.h))
        res = np.nan
        if len(traj.states) >= 3:
            h0, h1, h2 = (s.h for s in traj.states[-3:])
            mid = traj.states[-2]
            rhs = gc_rhs(mid.h, mid.hdot, _curvature_at(curvature, mid.t, mid.h))
            fd = (h2 - 2 * h1 + h0) / cur.step**2
            scale = max(np.linalg.norm(rhs), np.linalg.norm(mid.h))
            res = float(np.linalg.norm(fd - rhs) / scale)
            if res > residual_tol:
                warnings.warn(f"residual {res:.2e} above {residual_tol:.0e} at t={mid.t:.6g}", ResidualWarning, stacklevel=2)
        traj.residual.append(res)
        cur = nxt
    return traj


# closed-form N=1 fixture -----------------------------------------------------

@dataclass(frozen=True)
class LogSolution:
    """Exact solution of the N=1 equation with constant ``R = -1``.

    Writing ``h = u**2`` turns the equation into ``u'' = 1/u`` with the
    conserved energy ``E = u'^2 / 2 - ln u``. Along an outgoing branch
    ``t(s) = exp(-E) sqrt(pi/2) [erfi(s/sqrt 2) - erfi(s0/sqrt 2)]`` with
    ``s = u'``, which is inverted numerically.
    """

    u0: float = 1.0
    v0: float = 0.5

    def __post_init__(self):
        if self.u0 <= 0 or self.v0 <= 0:
            raise InvalidInput("the closed form needs u0 > 0 and an outgoing velocity v0 > 0")

    @property
    def energy(self) -> float:
        return 0.5 * self.v0**2 - np.log(self.u0)

    def _time_of(self, s: float) -> float:
        from scipy.special import erfi

        return float(np.exp(-self.energy) * np.sqrt(np.pi / 2) * (erfi(s / np.sqrt(2)) - erfi(self.v0 / np.sqrt(2))))

    def u(self, t: float) -> tuple[float, float]:
        """``(u(t), u'(t))`` for ``t >= 0``."""
        from scipy.optimize import brentq

        if t == 0:
            return self.u0, self.v0
        hi = self.v0 + 1.0
        while self._time_of(hi) < t:
            hi *= 2
        s = brentq(lambda x: self._time_of(x) - t, self.v0, hi, xtol=1e-15, rtol=1e-15, maxiter=500)
        return float(np.exp(0.5 * s**2 - self.energy)), s

    def h(self, t: float) -> tuple[float, float]:
        """``(h, h')`` at ``t``."""
        u, v = self.u(t)
        return u * u, 2 * u * v

    def initial_state(self, step: float) -> EvolutionState:
        h, hd = self.h(0.0)
        return EvolutionState(np.array([[h]]), np.array([[hd]]), 0.0, step)

    curvature = np.array([[-1.0]])


def convergence_order(solution: LogSolution, horizon: float, steps: tuple[float, ...]) -> tuple[list[float], list[float]]:
    """Global errors at ``horizon`` for each step size and the observed orders."""
    errs = []
    exact = solution.h(horizon)[0]
    for dt in steps:
        n = int(round(horizon / dt))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ResidualWarning)
            traj = evolve_gc(solution.initial_state(horizon / n), solution.curvature, n)
        errs.append(abs(traj.states[-1].h[0, 0].real - exact))
    orders = [float(np.log2(a / b)) for a, b in zip(errs, errs[1:])]
    return errs, orders


# linearized equations ---------------------------------------------------------

@dataclass(frozen=True)
class PeriodicGrid:
    """Periodic real grid carrying the flat Laplacian.

    A complex x-axis sampled as Re x Im contributes two real axes, so the
    Laplacian ``4 d^2/dx dx*`` is the sum of second differences over them.
    """

    shape: tuple
    spacing: tuple

    def __post_init__(self):
        shape = tuple(int(n) for n in self.shape)
        spacing = tuple(float(d) for d in self.spacing)
        if len(shape) != len(spacing) or not shape:
            raise InvalidGrid("one spacing per grid axis")
        if min(shape) < 3 or min(spacing) <= 0:
            raise InvalidGrid("periodic grid needs at least 3 points and positive spacing per axis")
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "spacing", spacing)

    @classmethod
    def line(cls, n: int, length: float) -> "PeriodicGrid":
        return cls((n,), (length / n,))

    @property
    def ndim(self) -> int:
        return len(self.shape)

    def points(self, axis: int = 0) -> np.ndarray:
        return np.arange(self.shape[axis]) * self.spacing[axis]

    def laplacian(self, f: np.ndarray) -> np.ndarray:
        """Sum of periodic three-point second differences over the grid axes."""
        f = np.asarray(f, dtype=np.complex128)
        if f.shape[: self.ndim] != self.shape:
            raise InvalidGrid(f"field shape {f.shape} does not start with grid {self.shape}")
        out = np.zeros_like(f)
        for ax, dx in enumerate(self.spacing):
            moved = np.moveaxis(f, ax, -1)
            flat = np.ascontiguousarray(moved.reshape(-1, moved.shape[-1]))
            lap = _kernels.laplacian_periodic(flat, dx).reshape(moved.shape)
            out += np.moveaxis(lap, -1, ax)
        return out

    def eigenvalues(self, axis: int = 0) -> np.ndarray:
        """Eigenvalues ``-(4/dx^2) sin^2(k dx/2)`` of the 1-D periodic stencil in FFT order."""
        n, dx = self.shape[axis], self.spacing[axis]
        k = 2 * np.pi * np.fft.fftfreq(n, d=dx)
        return -(4.0 / dx**2) * np.sin(k * dx / 2) ** 2


@dataclass(frozen=True)
class LinearizedState:
    """A metric field (mode ``metric``: ``grid + (N, N)``) or ket field
    (mode ``ket``: ``grid + (N, D)``) with its parameter derivative."""

    field: np.ndarray
    fdot: np.ndarray
    t: float = 0.0


def _metric_rhs(h, hdot, grid: PeriodicGrid):
    hinv = linalg.inv_hermitian(h)
    k = 0.5 * np.trace(hinv @ hdot, axis1=-2, axis2=-1)[..., None, None]
    return grid.laplacian(h) + hdot @ hinv @ hdot - k * hdot


def ket_gram(kets: np.ndarray) -> np.ndarray:
    return np.einsum("...id,...jd->...ij", kets.conj(), kets)


def ket_gram_rate(kets: np.ndarray, kdot: np.ndarray) -> np.ndarray:
    g = np.einsum("...id,...jd->...ij", kets.conj(), kdot)
    return g + np.swapaxes(g, -1, -2).conj()


def _ket_rhs(x, xdot, grid: PeriodicGrid):
    h = ket_gram(x)
    hdot = ket_gram_rate(x, xdot)
    hinv = linalg.inv_hermitian(h)
    k = 0.5 * np.trace(hinv @ hdot, axis1=-2, axis2=-1)[..., None, None]
    m = hdot @ hinv
    return grid.laplacian(x) + m @ xdot - k * xdot


def linearized_rhs(state: LinearizedState, grid: PeriodicGrid, mode: str) -> np.ndarray:
    """Second derivative of the field for either linearized form."""
    if mode == "metric":
        return _metric_rhs(state.field, state.fdot, grid)
    if mode == "ket":
        return _ket_rhs(state.field, state.fdot, grid)
    raise InvalidInput(f"mode must be 'metric' or 'ket', got {mode!r}")


def step_linearized(state: LinearizedState, grid: PeriodicGrid, dt: float, mode: str = "metric") -> LinearizedState:
    """One RK4 step of the linearized metric or ket equation.

    Metric fields are re-Hermitized node by node and must stay
    positive-definite.

    Raises
    ------
    StepRejected
        If a metric node loses positivity.
    """
    def f(s):
        return s.fdot, linearized_rhs(s, grid, mode)

    def shift(s, a, b, c):
        return LinearizedState(s.field + c * a, s.fdot + c * b, s.t)

    k1 = f(state)
    k2 = f(shift(state, *k1, dt / 2))
    k3 = f(shift(state, *k2, dt / 2))
    k4 = f(shift(state, *k3, dt))
    new_f = state.field + dt / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    new_d = state.fdot + dt / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    if mode == "metric":
        scale = max(1.0, float(np.max(np.abs(new_f))))
        new_f = linalg.hermitize(new_f, linalg.HERMITICITY_TOL * scale)
        new_d = linalg.hermitize(new_d, linalg.HERMITICITY_TOL * max(1.0, float(np.max(np.abs(new_d)))))
        if linalg.min_eigenvalue(new_f) <= linalg.PD_FLOOR:
            raise StepRejected(f"metric field lost positivity at t={state.t + dt}", dt / 2)
    return LinearizedState(new_f, new_d, state.t + dt)


def evolve_linearized(state: LinearizedState, grid: PeriodicGrid, dt: float, n_steps: int,
                      mode: str = "metric") -> list[LinearizedState]:
    """All states from ``state`` through ``n_steps`` fixed RK4 steps."""
    out = [state]
    for _ in range(n_steps):
        out.append(step_linearized(out[-1], grid, dt, mode))
    return out
