"""Complex phase accumulated along paths in a clock chart.

A state transported along a path ``c`` picks up the factor ``exp(Theta)``
with ``Theta = (1/2) int_c K_a dt^a``. The real part stretches the norm and
the imaginary part is the geometric phase. ``Theta`` can be accumulated from

* a scalar extrinsic curvature sampled on a chart (bilinear interpolation),
* a callable ``K(coords)``,
* state samples along the path, through the overlaps
  ``dTheta_k = ln(<psi_k|psi_k+1> / <psi_k|psi_k>)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _kernels, linalg
from .errors import InvalidInput, InvalidPath
from .geometry import CoordinateChart, wirtinger

CLOSE_TOL = 1e-12


@dataclass(frozen=True)
class Path:
    """Polyline through complex coordinates.

    Parameters
    ----------
    samples : array_like, shape (n,) or (n, axes)
        Ordered complex coordinates; a 1-D input is a single-axis path.
    closed : bool
        If true, the first and last samples must coincide.
    """

    samples: np.ndarray
    closed: bool = False

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.complex128)
        if s.ndim == 1:
            s = s[:, None]
        if s.ndim != 2 or s.shape[0] < 2:
            raise InvalidPath(f"a path needs at least 2 samples, got shape {s.shape}")
        if not np.all(np.isfinite(s)):
            raise InvalidPath("path samples must be finite")
        if self.closed and np.max(np.abs(s[0] - s[-1])) > CLOSE_TOL * max(1.0, float(np.max(np.abs(s)))):
            raise InvalidPath("closed path must end where it starts")
        s = s.copy()
        s.flags.writeable = False
        object.__setattr__(self, "samples", s)

    @property
    def n_axes(self) -> int:
        return self.samples.shape[1]

    @property
    def steps(self) -> np.ndarray:
        """Complex displacements ``dt^a`` of each segment, shape ``(n-1, axes)``."""
        return np.diff(self.samples, axis=0)

    def reversed(self) -> "Path":
        return Path(self.samples[::-1], self.closed)

    def concat(self, other: "Path") -> "Path":
        """Join at a shared endpoint."""
        if other.n_axes != self.n_axes or np.max(np.abs(self.samples[-1] - other.samples[0])) > CLOSE_TOL:
            raise InvalidPath("paths do not share an endpoint")
        joined = np.concatenate([self.samples, other.samples[1:]])
        closed = bool(np.max(np.abs(joined[0] - joined[-1])) <= CLOSE_TOL)
        return Path(joined, closed)

    @classmethod
    def segment(cls, start: complex, stop: complex, n: int) -> "Path":
        return cls(np.linspace(complex(start), complex(stop), n))

    @classmethod
    def circle(cls, center: complex, radius: float, n: int) -> "Path":
        """Counter-clockwise circle with ``n`` segments."""
        phi = np.linspace(0.0, 2 * np.pi, n + 1)
        z = complex(center) + radius * np.exp(1j * phi)
        z[-1] = z[0]
        return cls(z, closed=True)

    @classmethod
    def rectangle(cls, corner0: complex, corner1: complex, n_side: int = 1) -> "Path":
        """Counter-clockwise axis-aligned rectangle with ``n_side`` segments per side."""
        a, b = complex(corner0), complex(corner1)
        u0, u1 = sorted((a.real, b.real))
        v0, v1 = sorted((a.imag, b.imag))
        corners = [complex(u0, v0), complex(u1, v0), complex(u1, v1), complex(u0, v1), complex(u0, v0)]
        pts = [np.linspace(p, q, n_side + 1)[:-1] for p, q in zip(corners[:-1], corners[1:])]
        return cls(np.concatenate(pts + [[corners[0]]]), closed=True)


@dataclass(frozen=True)
class PhaseRecord:
    """Accumulated ``Theta`` with its per-segment increments."""

    theta: complex
    increments: np.ndarray
    samples: np.ndarray = field(repr=False)

    @property
    def re_part(self) -> float:
        """Log of the norm stretch factor."""
        return float(self.theta.real)

    @property
    def im_part(self) -> float:
        """Geometric phase (unwrapped)."""
        return float(self.theta.imag)

    @property
    def stretch(self) -> float:
        return float(np.exp(self.re_part))

    @property
    def wrapped_phase(self) -> float:
        """``im_part`` reduced to ``(-pi, pi]``."""
        w = float(np.angle(np.exp(1j * self.im_part)))
        return np.pi if w == -np.pi else w

    def records(self) -> list[dict]:
        """Rows for the phase report: segment, start coordinate, increment, cumulative value."""
        cum = np.cumsum(self.increments)
        return [{"segment": k, "t_re": float(self.samples[k, 0].real), "t_im": float(self.samples[k, 0].imag),
                 "dtheta_re": float(d.real), "dtheta_im": float(d.imag),
                 "theta_re": float(c.real), "theta_im": float(c.imag)}
                for k, (d, c) in enumerate(zip(self.increments, cum))]


@dataclass(frozen=True)
class GridK:
    """Scalar extrinsic curvature ``K`` sampled on a single-axis chart."""

    chart: CoordinateChart
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.complex128)
        if self.chart.n_axes != 1:
            raise InvalidInput("grid sources are interpolated on single-axis charts only")
        if v.shape == self.chart.shape + (1,):
            v = v[..., 0]
        if v.shape != self.chart.shape:
            raise InvalidInput(f"K values shape {v.shape} does not fit chart {self.chart.shape}")
        object.__setattr__(self, "values", v)

    def __call__(self, coords: np.ndarray) -> np.ndarray:
        z = np.asarray(coords, dtype=np.complex128).reshape(-1)
        re, im = self.chart.re[0], self.chart.im[0]
        slack = 1e-12 * max(1.0, float(np.max(np.abs(re))), float(np.max(np.abs(im))))
        if (np.any(z.real < re[0] - slack) or np.any(z.real > re[-1] + slack)
                or np.any(z.imag < im[0] - slack) or np.any(z.imag > im[-1] + slack)):
            raise InvalidPath("path leaves the chart")
        du, dv = self.chart.spacing(0)
        return _kernels.bilinear(self.values, re[0], im[0], du, dv,
                                 np.ascontiguousarray(z.real), np.ascontiguousarray(z.imag))


@dataclass(frozen=True)
class StateSamples:
    """States ``psi_k`` sampled at the path nodes, shape ``(n, D)``."""

    states: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.states, dtype=np.complex128)
        if s.ndim != 2 or s.shape[0] < 2:
            raise InvalidInput("need at least two state samples as rows")
        object.__setattr__(self, "states", s)


def _k_increments(k_of: Callable, path: Path) -> np.ndarray:
    k = np.asarray(k_of(path.samples if path.n_axes > 1 else path.samples[:, 0]), dtype=np.complex128)
    k = k.reshape(path.samples.shape[0], path.n_axes)
    # trapezoid on each segment
    return 0.5 * np.sum(0.5 * (k[:-1] + k[1:]) * path.steps, axis=1)


def accumulate_phase(source, path: Path) -> PhaseRecord:
    """``Theta = (1/2) int_c K_a dt^a`` along a path.

    Parameters
    ----------
    source : GridK, callable, StateSamples or None
        ``GridK`` is interpolated bilinearly; a callable receives the path
        samples (shape ``(n,)`` for one axis, ``(n, axes)`` otherwise) and
        returns ``K`` there; ``StateSamples`` uses overlap increments. ``None``
        means ``K = 0``.
    path : Path

    Raises
    ------
    InvalidPath
        If the path leaves the chart of a grid source.
    InvalidInput
        If the state samples do not match the path length.

    Examples
    --------
    >>> accumulate_phase(lambda t: 2j + 0 * t, Path.segment(0, 1, 3)).theta
    1j
    """
    if source is None:
        inc = np.zeros(path.samples.shape[0] - 1, dtype=np.complex128)
    elif isinstance(source, StateSamples):
        if source.states.shape[0] != path.samples.shape[0]:
            raise InvalidInput("one state per path sample is required")
        s = np.ascontiguousarray(source.states)
        ov = _kernels.overlap_increments(s)
        norms = np.einsum("kj,kj->k", s[:-1].conj(), s[:-1]).real
        inc = np.log(ov / norms)
    elif callable(source):
        inc = _k_increments(source, path)
    else:
        raise InvalidInput(f"unsupported phase source {type(source).__name__}")
    return PhaseRecord(complex(np.sum(inc)), inc, path.samples)


# Stokes consistency ---------------------------------------------------------

@dataclass(frozen=True)
class StokesReport:
    """``line = (1/2) oint K dt``; ``surface = i iint dK/dt* du dv``.

    The two agree for any smooth ``K`` (Stokes); ``gap`` compares their
    imaginary parts, i.e. the geometric phase. ``berry_flux`` is
    ``(1/4) iint B dt* ^ dt`` with ``B = F - conj(F)``, which equals the real
    part of ``surface`` under these conventions.
    """

    line: complex
    surface: complex
    gap: float
    berry_flux: float


def _rectangle_nodes(chart: CoordinateChart, loop: Path) -> tuple[slice, slice, int]:
    if loop.n_axes != 1 or not loop.closed:
        raise InvalidPath("Stokes check needs a closed single-axis loop")
    z = loop.samples[:, 0]
    u0, u1, v0, v1 = z.real.min(), z.real.max(), z.imag.min(), z.imag.max()
    du, dv = chart.spacing(0)
    tol_u, tol_v = 1e-9 * du, 1e-9 * dv
    on_edge = ((np.abs(z.real - u0) < tol_u) | (np.abs(z.real - u1) < tol_u)
               | (np.abs(z.imag - v0) < tol_v) | (np.abs(z.imag - v1) < tol_v))
    if not np.all(on_edge) or u1 - u0 < du / 2 or v1 - v0 < dv / 2:
        raise InvalidPath("loop is not an axis-aligned rectangle")
    idx = []
    for val, axis, d, tol in ((u0, chart.re[0], du, tol_u), (u1, chart.re[0], du, tol_u),
                              (v0, chart.im[0], dv, tol_v), (v1, chart.im[0], dv, tol_v)):
        k = int(round((val - axis[0]) / d))
        if not 0 <= k < axis.size or abs(axis[k] - val) > tol:
            raise InvalidPath("rectangle corners must sit on chart nodes")
        idx.append(k)
    # signed area of the polygon fixes the orientation
    area = 0.5 * np.sum(z[:-1].real * z[1:].imag - z[1:].real * z[:-1].imag)
    return slice(idx[0], idx[1] + 1), slice(idx[2], idx[3] + 1), 1 if area > 0 else -1


def stokes_check(k_grid: GridK, loop: Path, curvature: np.ndarray | None = None) -> StokesReport:
    """Compare the loop integral of ``K`` with the flux of ``dK/dt*`` it encloses.

    The line integral runs along chart nodes on the rectangle; the surface
    integral applies the trapezoid rule to ``curvature`` (values of
    ``F = dK/dt*`` on the chart) or, by default, to its finite-difference
    estimate from ``k_grid``. Finite differences of nodal data obey a discrete
    Stokes identity, so a singular ``K`` is only exposed by its pointwise
    curvature.

    Raises
    ------
    InvalidPath
        If ``loop`` is not an axis-aligned rectangle with corners on nodes.
    """
    chart = k_grid.chart
    su, sv, orient = _rectangle_nodes(chart, loop)
    re, im = chart.re[0][su], chart.im[0][sv]
    u0, u1, v0, v1 = re[0], re[-1], im[0], im[-1]
    nodes = np.concatenate([re[:-1] + 1j * v0, u1 + 1j * im[:-1], re[::-1][:-1] + 1j * v1, u0 + 1j * im[::-1]])
    line = orient * accumulate_phase(k_grid, Path(nodes, closed=True)).theta
    if curvature is None:
        f = wirtinger(k_grid.values, chart, 0, "anti")[su, sv]
    else:
        f = np.asarray(curvature, dtype=np.complex128).reshape(chart.shape)[su, sv]
    du, dv = chart.spacing(0)
    wu = np.full(re.size, du)
    wu[[0, -1]] *= 0.5
    wv = np.full(im.size, dv)
    wv[[0, -1]] *= 0.5
    flux = complex(wu @ f @ wv)
    surface = orient * 1j * flux
    b = f - f.conj()
    berry = float(np.real(orient * 0.25 * (wu @ b @ wv) * 2j))
    return StokesReport(complex(line), surface, float(abs(line.imag - surface.imag)), berry)


# Anandan-Aharonov -----------------------------------------------------------

@dataclass(frozen=True)
class SpeedVariance:
    """Per-step Fubini-Study speed squared and energy variance."""

    fs_speed2: np.ndarray
    energy_variance: np.ndarray

    @property
    def max_gap(self) -> float:
        return float(np.max(np.abs(self.fs_speed2 - self.energy_variance)))


def unitary_trajectory(H, psi0, dt: float, n_steps: int) -> np.ndarray:
    """Exact samples ``exp(-i H k dt) psi0`` from the eigendecomposition of ``H``."""
    h = linalg.as_matrix(H, "H", square=True)
    if not linalg.is_hermitian(h):
        raise InvalidInput("generator is not Hermitian")
    w, v = np.linalg.eigh(linalg.hermitize(h))
    c0 = v.conj().T @ linalg.as_vector(psi0, "psi0")
    phases = np.exp(-1j * np.outer(np.arange(n_steps + 1) * dt, w))
    return (phases * c0) @ v.T


def anandan_aharonov(states, H, dt: float) -> SpeedVariance:
    """Speed ``2(1 - |<psi_k|psi_k+1>|)/dt**2`` against ``<H^2> - <H>^2``.

    With unit-norm states generated by ``H`` the two agree to ``O(dt**2)``;
    the proportionality constant is exactly one.

    Raises
    ------
    InvalidInput
        If ``H`` is not Hermitian or the trajectory is too short.
    """
    h = linalg.as_matrix(H, "H", square=True)
    if not linalg.is_hermitian(h):
        raise InvalidInput("generator is not Hermitian")
    s = np.asarray(states, dtype=np.complex128)
    if s.ndim != 2 or s.shape[0] < 2 or s.shape[1] != h.shape[0]:
        raise InvalidInput("states must be an (n>=2, D) trajectory matching H")
    s = s / np.linalg.norm(s, axis=1, keepdims=True)
    ov = np.abs(_kernels.overlap_increments(np.ascontiguousarray(s)))
    speed = 2.0 * (1.0 - ov) / dt**2
    hs = s[:-1] @ h.T
    mean = np.einsum("kj,kj->k", s[:-1].conj(), hs).real
    mean2 = np.einsum("kj,kj->k", hs.conj(), hs).real
    return SpeedVariance(speed, mean2 - mean**2)
