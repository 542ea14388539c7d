"""Fast/slow splitting of ket fields and the Schrodinger limit.

A ket field oscillating at a fast frequency ``omega`` is written as
``X = exp(-i omega t) e`` with a slowly varying ``e``. In the free case the
ket equation ``X'' + K X' = lap X - omega^2 X`` then reduces to

    i De/Dt = -(1/(2 omega)) lap e,     D/Dt = d/dt + K/2

which is compared here with an independent implicit-midpoint solver.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _kernels
from .errors import InvalidGrid, InvalidInput
from .evolution import PeriodicGrid

SLOWNESS_RATIO = 0.1


def _k_values(K, times: np.ndarray) -> np.ndarray:
    if K is None:
        return np.zeros_like(times, dtype=np.complex128)
    if callable(K):
        return np.asarray(K(times), dtype=np.complex128) * np.ones_like(times)
    return np.full(times.shape, complex(K))


def _l2(f: np.ndarray, grid: PeriodicGrid) -> np.ndarray:
    """Grid L2 norm over the trailing grid axes."""
    axes = tuple(range(f.ndim - grid.ndim, f.ndim))
    return np.sqrt(np.sum(np.abs(f) ** 2, axis=axes) * np.prod(grid.spacing))


def _time_derivative(f: np.ndarray, dt: float, order: int = 1) -> np.ndarray:
    if f.shape[0] < 5:
        raise InvalidGrid("time derivatives need at least 5 samples")
    out = np.gradient(f, dt, axis=0, edge_order=2)
    return out if order == 1 else np.gradient(out, dt, axis=0, edge_order=2)


@dataclass(frozen=True)
class SlowFastSplit:
    """Slow part ``e`` sampled at uniform ``times`` over a periodic grid.

    Parameters
    ----------
    omega : float
        Fast frequency; ``X = exp(-i omega t) e``.
    e : ndarray, shape ``(nt,) + grid.shape``
    times : ndarray, shape (nt,)
    grid : PeriodicGrid
    """

    omega: float
    e: np.ndarray
    times: np.ndarray
    grid: PeriodicGrid
    slowness_ratio: float = SLOWNESS_RATIO

    def __post_init__(self):
        if self.omega <= 0:
            raise InvalidInput("omega must be positive")
        times = np.asarray(self.times, dtype=float)
        e = np.asarray(self.e, dtype=np.complex128)
        if e.shape != times.shape + self.grid.shape:
            raise InvalidInput(f"slow part shape {e.shape} does not match times {times.shape} and grid {self.grid.shape}")
        if times.size > 2 and np.ptp(np.diff(times)) > 1e-9 * abs(times[1] - times[0]):
            raise InvalidInput("times must be uniformly spaced")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "e", e)

    @classmethod
    def from_fast(cls, X: np.ndarray, times: np.ndarray, omega: float, grid: PeriodicGrid) -> "SlowFastSplit":
        """Divide out the known carrier ``exp(-i omega t)``."""
        times = np.asarray(times, dtype=float)
        shape = (-1,) + (1,) * grid.ndim
        return cls(omega, np.asarray(X) * np.exp(1j * omega * times).reshape(shape), times, grid)

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    def reconstruct(self) -> np.ndarray:
        shape = (-1,) + (1,) * self.grid.ndim
        return self.e * np.exp(-1j * self.omega * self.times).reshape(shape)

    def slowness(self) -> float:
        """``max_t |de/dt| / (omega |e|)`` over the run (0 for a vanishing field)."""
        num = _l2(_time_derivative(self.e, self.dt), self.grid)
        den = self.omega * _l2(self.e, self.grid)
        ratio = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
        return float(np.max(ratio))

    def is_slow(self) -> bool:
        return self.slowness() <= self.slowness_ratio


def covariant_derivative(e: np.ndarray, K, dt: float, node: int | None = None) -> np.ndarray:
    """``De/Dt = de/dt + (K/2) e`` along the leading time axis.

    Parameters
    ----------
    e : ndarray
        Samples with time on axis 0 (at least 5 samples).
    K : complex, ndarray of shape (nt,), or None
        Scalar extrinsic curvature along the run.
    dt : float
        Sample spacing.
    node : int, optional
        Return only this time index.
    """
    e = np.asarray(e, dtype=np.complex128)
    k = np.broadcast_to(np.asarray(0 if K is None else K, dtype=np.complex128), e.shape[:1])
    k = k.reshape((-1,) + (1,) * (e.ndim - 1))
    out = _time_derivative(e, dt) + 0.5 * k * e
    return out if node is None else out[node]


def schrodinger_residual(split: SlowFastSplit, K=None) -> tuple[np.ndarray, float]:
    """Pointwise ``|i De/Dt + lap e / (2 omega)|`` and its RMS over the run."""
    k = _k_values(K, split.times) if (K is None or callable(K) or np.ndim(K) == 0) else np.asarray(K)
    de = covariant_derivative(split.e, k, split.dt)
    lap = np.stack([split.grid.laplacian(frame) for frame in split.e])
    field_ = np.abs(1j * de + lap / (2 * split.omega))
    return field_, float(np.sqrt(np.mean(field_**2)))


def neglected_terms(split: SlowFastSplit) -> float:
    """RMS of the term dropped in the limit, ``e'' / (2 omega)``."""
    return float(np.sqrt(np.mean(np.abs(_time_derivative(split.e, split.dt, 2) / (2 * split.omega)) ** 2)))


# reference solver ------------------------------------------------------------

def _sparse_laplacian(grid: PeriodicGrid) -> sp.csc_matrix:
    lap = None
    eyes = [sp.identity(n, format="csc") for n in grid.shape]
    for ax, (n, dx) in enumerate(zip(grid.shape, grid.spacing)):
        d1 = sp.diags([np.ones(n - 1), -2 * np.ones(n), np.ones(n - 1)], [-1, 0, 1], format="lil")
        d1[0, n - 1] = 1
        d1[n - 1, 0] = 1
        term = None
        for k in range(grid.ndim):
            factor = d1.tocsc() / dx**2 if k == ax else eyes[k]
            term = factor if term is None else sp.kron(term, factor, format="csc")
        lap = term if lap is None else lap + term
    return lap.tocsc()


@dataclass(frozen=True)
class ReferenceSolution:
    """Wavefunction samples of ``i psi' = -(1/(2 omega)) lap psi + V psi``."""

    times: np.ndarray
    psi: np.ndarray
    grid: PeriodicGrid
    omega: float
    scheme: str = "implicit-midpoint"
    norm_drift: float = 0.0


def reference_solve(psi0: np.ndarray, grid: PeriodicGrid, omega: float, dt: float, n_steps: int,
                    stride: int = 1, potential: np.ndarray | None = None) -> ReferenceSolution:
    """Unconditionally stable implicit-midpoint (Crank-Nicolson) propagation.

    Each step solves ``(1 + i dt H/2) psi_new = (1 - i dt H/2) psi`` with a
    sparse LU factorization reused across steps.
    """
    psi = np.asarray(psi0, dtype=np.complex128).reshape(-1)
    if psi.size != int(np.prod(grid.shape)):
        raise InvalidInput("initial wavefunction does not match the grid")
    ham = -_sparse_laplacian(grid) / (2 * omega)
    if potential is not None:
        ham = ham + sp.diags(np.asarray(potential, dtype=float).reshape(-1))
    eye = sp.identity(psi.size, format="csc", dtype=np.complex128)
    lhs = spla.splu((eye + 0.5j * dt * ham).tocsc())
    rhs = (eye - 0.5j * dt * ham).tocsr()
    frames, times = [psi.copy()], [0.0]
    n0 = np.linalg.norm(psi)
    drift = 0.0
    for n in range(1, n_steps + 1):
        new = lhs.solve(rhs @ psi)
        if n0 > 0:
            drift = max(drift, abs(np.linalg.norm(new) - np.linalg.norm(psi)) / n0)
        psi = new
        if n % stride == 0:
            frames.append(psi.copy())
            times.append(n * dt)
    return ReferenceSolution(np.array(times), np.array(frames).reshape((-1,) + grid.shape), grid, omega, norm_drift=drift)


# ket evolution in the fast/slow regime ------------------------------------------

@dataclass(frozen=True)
class KetRun:
    """Samples of a single-component ket field ``X(t, x)``."""

    times: np.ndarray
    X: np.ndarray
    omega: float
    grid: PeriodicGrid
    K: np.ndarray = field(default=None)

    def split(self) -> SlowFastSplit:
        return SlowFastSplit.from_fast(self.X, self.times, self.omega, self.grid)


def slow_velocity(e0: np.ndarray, grid: PeriodicGrid, omega: float, k0: complex = 0.0) -> np.ndarray:
    """``de/dt`` at the start implied by the limit equation."""
    return 0.5j / omega * grid.laplacian(e0) - 0.5 * k0 * e0


def ket_run(e0: np.ndarray, grid: PeriodicGrid, omega: float, horizon: float, n_out: int,
            K=None, init: str = "slow", substeps: int | None = None) -> KetRun:
    """Evolve ``X'' + K(t) X' = lap X - omega^2 X`` from slow initial data.

    Parameters
    ----------
    e0 : ndarray
        Initial slow profile on the grid; ``X(0) = e0``.
    omega : float
        Fast frequency.
    horizon : float
        Final time; samples are taken at ``n_out + 1`` uniform times.
    K : callable, complex or None
        Scalar extrinsic curvature as a function of time (uniform in x).
    init : {"slow", "carrier"}
        ``slow`` sets ``X'(0) = -i omega e0 + de/dt`` from the limit equation;
        ``carrier`` drops the slow velocity.
    substeps : int, optional
        RK4 steps per output sample when ``K`` is present.

    Notes
    -----
    Without ``K`` each Fourier mode is an undamped oscillator and is
    propagated exactly; with ``K`` the modes are integrated by RK4.
    """
    e0 = np.asarray(e0, dtype=np.complex128)
    if e0.shape != grid.shape:
        raise InvalidInput("initial profile does not match the grid")
    times = np.linspace(0.0, horizon, n_out + 1)
    k_of_t = None if K is None else (K if callable(K) else (lambda t, c=complex(K): np.full_like(t, c, dtype=complex)))
    k0 = 0.0 if k_of_t is None else complex(np.asarray(k_of_t(np.array([0.0])))[0])
    edot = slow_velocity(e0, grid, omega, k0) if init == "slow" else np.zeros_like(e0)
    if init not in ("slow", "carrier"):
        raise InvalidInput(f"unknown init {init!r}")
    v0 = -1j * omega * e0 + edot
    axes = tuple(range(grid.ndim))
    lam = sum(np.meshgrid(*[grid.eigenvalues(a) for a in axes], indexing="ij"))
    nu2 = (omega**2 - lam).reshape(-1)
    xh = np.fft.fftn(e0, axes=axes).reshape(-1)
    vh = np.fft.fftn(v0, axes=axes).reshape(-1)
    if k_of_t is None:
        nu = np.sqrt(nu2)
        c, s = np.cos(np.outer(times, nu)), np.sin(np.outer(times, nu))
        modes = xh * c + vh * s / nu
        k_samples = np.zeros_like(times, dtype=complex)
    else:
        if substeps is None:
            substeps = max(1, int(np.ceil((times[1] - times[0]) * np.sqrt(nu2.max()) / 0.05)))
        n_steps = n_out * substeps
        dt = horizon / n_steps
        k_table = np.asarray(k_of_t(np.arange(2 * n_steps + 1) * dt / 2), dtype=np.complex128)
        modes, _ = _kernels.modal_rk4(xh, vh, nu2.astype(np.complex128), k_table, dt, n_steps, substeps)
        k_samples = k_table[:: 2 * substeps]
    X = np.fft.ifftn(modes.reshape((-1,) + grid.shape), axes=tuple(a + 1 for a in axes))
    return KetRun(times, X, omega, grid, k_samples)


@dataclass(frozen=True)
class LimitReport:
    """Distance between the extracted slow part and the reference solution."""

    omega: float
    horizon: float
    max_L2: float
    distances: np.ndarray
    slowness: float
    slow: bool
    slope_vs_omega: float | None = None

    def to_dict(self) -> dict:
        return {"omega": self.omega, "horizon": self.horizon, "max_L2": self.max_L2,
                "slope_vs_omega": self.slope_vs_omega, "slowness": self.slowness, "slow": self.slow}


def limit_comparison(run: KetRun, ref: ReferenceSolution) -> LimitReport:
    """L2 gap between ``run.split().e`` and ``ref.psi`` at shared times.

    Raises
    ------
    InvalidInput
        If the runs use different grids, frequencies or sample times.
    """
    if run.grid != ref.grid:
        raise InvalidInput("ket run and reference use different x-charts")
    if not np.isclose(run.omega, ref.omega):
        raise InvalidInput("ket run and reference use different omega")
    if run.times.shape != ref.times.shape or not np.allclose(run.times, ref.times, rtol=0, atol=1e-9 * max(1.0, run.times[-1])):
        raise InvalidInput("ket run and reference are sampled at different times")
    split = run.split()
    dist = _l2(split.e - ref.psi, run.grid)
    slow = split.slowness()
    return LimitReport(run.omega, float(run.times[-1]), float(np.max(dist)), dist, slow, slow <= split.slowness_ratio)


def gaussian_packet(grid: PeriodicGrid, sigma: float = 1.0, k0: float = 0.5, center: float | None = None) -> np.ndarray:
    """Unit-norm Gaussian packet on a 1-D periodic grid."""
    if grid.ndim != 1:
        raise InvalidInput("gaussian_packet builds 1-D profiles")
    x = grid.points()
    c = x[-1] / 2 if center is None else center
    e = np.exp(-((x - c) ** 2) / (4 * sigma**2) + 1j * k0 * x)
    return e / _l2(e, grid)


@dataclass(frozen=True)
class ScalingStudy:
    reports: list
    ratios: list
    slope: float


def limit_scaling(omegas: Sequence[float], n: int = 512, length: float = 40.0, sigma: float = 1.0,
                  k0: float = 0.5, tau: float = 0.5, n_out: int = 400, ref_steps: int = 4000,
                  init: str = "slow") -> ScalingStudy:
    """Gap between the ket evolution and the reference across frequencies.

    The horizon is ``tau * omega`` so every run covers the same amount of
    slow evolution.
    """
    grid = PeriodicGrid.line(n, length)
    e0 = gaussian_packet(grid, sigma, k0)
    reports = []
    for om in omegas:
        horizon = tau * om
        run = ket_run(e0, grid, om, horizon, n_out, init=init)
        stride = ref_steps // n_out
        ref = reference_solve(e0, grid, om, horizon / ref_steps, ref_steps, stride)
        reports.append(limit_comparison(run, ref))
    gaps = np.array([r.max_L2 for r in reports])
    ratios = list(gaps[1:] / gaps[:-1])
    slope = float(np.polyfit(np.log(omegas), np.log(gaps), 1)[0]) if len(omegas) > 1 else float("nan")
    reports = [LimitReport(r.omega, r.horizon, r.max_L2, r.distances, r.slowness, r.slow, slope) for r in reports]
    return ScalingStudy(reports, ratios, slope)
