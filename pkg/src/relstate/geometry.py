"""Complex differential geometry of metric fields sampled on coordinate grids.

A chart with ``n`` complex axes is sampled on a product grid whose real axes
are ordered ``(re_0, im_0, re_1, im_1, ...)``. Fields carry the grid axes
first and any matrix or vector axes last. All complex derivatives are
Wirtinger derivatives built from second-order finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import linalg
from .errors import DegenerateMetric, InvalidGrid, InvalidInput

FD_TOL = 1e-6
MIN_SAMPLES = 5


@dataclass(frozen=True)
class CoordinateChart:
    """Uniform Re x Im sampling of each complex coordinate axis.

    Parameters
    ----------
    re, im : sequence of 1-D arrays
        Sample positions of the real and imaginary parts, one array per axis.
    labels : sequence of str, optional
        Axis names such as ``"x1"`` or ``"t"``.
    """

    re: tuple
    im: tuple
    labels: tuple = ()

    def __post_init__(self):
        re = tuple(np.asarray(r, dtype=float) for r in self.re)
        im = tuple(np.asarray(i, dtype=float) for i in self.im)
        if len(re) != len(im) or not re:
            raise InvalidGrid("need matching re/im sample arrays for at least one axis")
        for arr in re + im:
            if arr.ndim != 1 or arr.size < MIN_SAMPLES:
                raise InvalidGrid(f"each real axis needs at least {MIN_SAMPLES} samples")
            d = np.diff(arr)
            if np.any(d <= 0) or np.ptp(d) > 1e-9 * abs(d[0]):
                raise InvalidGrid("grid samples must be uniform and increasing")
        labels = tuple(self.labels) or tuple(f"z{k}" for k in range(len(re)))
        if len(labels) != len(re):
            raise InvalidGrid("one label per complex axis")
        object.__setattr__(self, "re", re)
        object.__setattr__(self, "im", im)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def square(cls, n: int, half_width: float, axes: int = 1, center: complex = 0.0, labels=()) -> "CoordinateChart":
        """``n x n`` samples of ``[-w, w]^2`` around ``center`` on every axis."""
        c = complex(center)
        re = [np.linspace(c.real - half_width, c.real + half_width, n)] * axes
        im = [np.linspace(c.imag - half_width, c.imag + half_width, n)] * axes
        return cls(tuple(re), tuple(im), tuple(labels))

    @property
    def n_axes(self) -> int:
        return len(self.re)

    @property
    def shape(self) -> tuple:
        out = []
        for r, i in zip(self.re, self.im):
            out += [r.size, i.size]
        return tuple(out)

    def spacing(self, axis: int) -> tuple[float, float]:
        return float(self.re[axis][1] - self.re[axis][0]), float(self.im[axis][1] - self.im[axis][0])

    def coordinates(self) -> list[np.ndarray]:
        """Complex coordinate of every axis broadcast over the full grid."""
        reals = []
        for r, i in zip(self.re, self.im):
            reals += [r, i]
        mesh = np.meshgrid(*reals, indexing="ij")
        return [mesh[2 * k] + 1j * mesh[2 * k + 1] for k in range(self.n_axes)]

    def node_coordinates(self, node) -> np.ndarray:
        node = tuple(node)
        return np.array([self.re[k][node[2 * k]] + 1j * self.im[k][node[2 * k + 1]] for k in range(self.n_axes)])

    def refined(self) -> "CoordinateChart":
        """Same extent with the spacing halved."""
        re = tuple(np.linspace(r[0], r[-1], 2 * r.size - 1) for r in self.re)
        im = tuple(np.linspace(i[0], i[-1], 2 * i.size - 1) for i in self.im)
        return CoordinateChart(re, im, self.labels)

    def same_as(self, other: "CoordinateChart") -> bool:
        return (self.shape == other.shape
                and all(np.allclose(a, b) for a, b in zip(self.re + self.im, other.re + other.im)))


@dataclass(frozen=True)
class MetricField:
    """Hermitian ``N x N`` metric sampled at every node of a chart.

    Parameters
    ----------
    chart : CoordinateChart
    values : ndarray, shape ``chart.shape + (N, N)``
    which : {"h", "s", "q"}
        Which metric the field represents.
    """

    chart: CoordinateChart
    values: np.ndarray
    which: str = "h"
    spacelike: bool = True

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.complex128)
        if v.ndim == len(self.chart.shape):
            v = v[..., None, None]
        if v.shape[:-2] != self.chart.shape or v.shape[-1] != v.shape[-2]:
            raise InvalidInput(f"metric values shape {v.shape} does not fit chart {self.chart.shape}")
        if self.which not in ("h", "s", "q"):
            raise InvalidInput(f"unknown metric kind {self.which!r}")
        v = linalg.hermitize(v, tol=linalg.HERMITICITY_TOL * max(1.0, float(np.max(np.abs(v)))))
        if self.spacelike and np.min(np.linalg.eigvalsh(v)) <= linalg.PD_FLOOR:
            raise DegenerateMetric("metric field is not positive-definite on the whole chart")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, chart: CoordinateChart, func: Callable, which: str = "h") -> "MetricField":
        """Sample ``func(z0, z1, ...)`` returning ``grid + (N, N)`` (or scalar) values."""
        return cls(chart, np.asarray(func(*chart.coordinates()), dtype=np.complex128), which)

    @property
    def n(self) -> int:
        return self.values.shape[-1]

    def logdet(self) -> np.ndarray:
        return linalg.logdet(self.values)

    def inverse(self) -> np.ndarray:
        return linalg.inv_hermitian(self.values)


def _check_grid(chart: CoordinateChart, field: np.ndarray):
    if field.shape[: len(chart.shape)] != chart.shape:
        raise InvalidGrid(f"field shape {field.shape} does not start with chart shape {chart.shape}")
    if min(chart.shape) < MIN_SAMPLES:
        raise InvalidGrid(f"each real axis needs at least {MIN_SAMPLES} samples")


def _check_node(chart: CoordinateChart, node, margin: int) -> tuple:
    node = tuple(int(k) for k in node)
    if len(node) != len(chart.shape):
        raise InvalidGrid(f"node {node} needs {len(chart.shape)} indices")
    for k, n in zip(node, chart.shape):
        if not margin <= k < n - margin:
            raise InvalidGrid(f"node {node} is inside the {margin}-node margin of grid {chart.shape}")
    return node


def _real_axes(chart: CoordinateChart, axis: int) -> tuple[int, int, float, float]:
    if not 0 <= axis < chart.n_axes:
        raise InvalidGrid(f"axis {axis} out of range for {chart.n_axes} complex axes")
    dre, dim = chart.spacing(axis)
    return 2 * axis, 2 * axis + 1, dre, dim


def wirtinger(field: np.ndarray, chart: CoordinateChart, axis: int = 0, kind: str = "holo") -> np.ndarray:
    """Wirtinger derivative along one complex axis.

    ``kind="holo"`` gives ``d/dz = (d/dRe - i d/dIm) / 2``; ``kind="anti"``
    gives ``d/dz* = (d/dRe + i d/dIm) / 2``. Central second-order stencils in
    the interior and one-sided second-order stencils at the boundary.

    Examples
    --------
    >>> chart = CoordinateChart.square(9, 1.0)
    >>> z = chart.coordinates()[0]
    >>> bool(np.allclose(wirtinger(z, chart), 1) and np.allclose(wirtinger(z, chart, kind="anti"), 0))
    True
    """
    field = np.asarray(field)
    _check_grid(chart, field)
    a, b, dre, dim = _real_axes(chart, axis)
    d_re = np.gradient(field, dre, axis=a, edge_order=2)
    d_im = np.gradient(field, dim, axis=b, edge_order=2)
    if kind == "holo":
        return 0.5 * (d_re - 1j * d_im)
    if kind == "anti":
        return 0.5 * (d_re + 1j * d_im)
    raise InvalidInput(f"kind must be 'holo' or 'anti', got {kind!r}")


def _second_difference(f: np.ndarray, axis: int, d: float) -> np.ndarray:
    """Three-point second derivative with second-order one-sided ends."""
    f = np.moveaxis(f, axis, 0)
    out = np.empty_like(f)
    out[1:-1] = (f[2:] - 2 * f[1:-1] + f[:-2]) / d**2
    out[0] = (2 * f[0] - 5 * f[1] + 4 * f[2] - f[3]) / d**2
    out[-1] = (2 * f[-1] - 5 * f[-2] + 4 * f[-3] - f[-4]) / d**2
    return np.moveaxis(out, 0, axis)


def ddbar(field: np.ndarray, chart: CoordinateChart, i: int, j: int) -> np.ndarray:
    """Compact-stencil ``d/dz_j d/dz_i*`` of a scalar field.

    On a single axis this is ``(f_xx + f_yy) / 4`` with three-point second
    differences; mixed axes use products of central first differences.
    """
    ai, bi, dai, dbi = _real_axes(chart, i)
    aj, bj, daj, dbj = _real_axes(chart, j)
    if i == j:
        return 0.25 * (_second_difference(field, ai, dai) + _second_difference(field, bi, dbi))

    def d(f, ax, h):
        return np.gradient(f, h, axis=ax, edge_order=2)

    # d_j dbar_i = 1/4 (d_aj + ... ) expanded over the four real pairs
    return 0.25 * (d(d(field, ai, dai), aj, daj) + 1j * d(d(field, bi, dbi), aj, daj)
                   - 1j * d(d(field, ai, dai), bj, dbj) + d(d(field, bi, dbi), bj, dbj))


# connection and curvature ---------------------------------------------------

@dataclass(frozen=True)
class Connection:
    """Connection coefficients at one node.

    ``holomorphic[i, k, j]`` is ``Gamma^k_ij``; the barred block is its
    complex conjugate and mixed-index components vanish for a Hermitian metric.
    """

    holomorphic: np.ndarray

    @property
    def antiholomorphic(self) -> np.ndarray:
        return self.holomorphic.conj()

    @property
    def mixed(self) -> np.ndarray:
        return np.zeros_like(self.holomorphic)


def connection_field(h: MetricField) -> np.ndarray:
    """``Gamma_i = H^-1 dH/dz_i`` on the whole grid, shape ``grid + (axes, N, N)``."""
    hinv = h.inverse()
    parts = [hinv @ wirtinger(h.values, h.chart, ax, "holo") for ax in range(h.chart.n_axes)]
    return np.stack(parts, axis=-3)


def connection(h: MetricField, node) -> Connection:
    """Connection coefficients ``Gamma^k_ij = h^{k l*} dh_{j l*}/dz_i`` at ``node``."""
    node = _check_node(h.chart, node, 0)
    return Connection(connection_field(h)[node])


def _require_square_chart(h: MetricField):
    if h.n != h.chart.n_axes:
        raise InvalidInput(f"Ricci needs one complex axis per metric index, got N={h.n}, axes={h.chart.n_axes}")


def ricci_field(h: MetricField, route: str = "logdet") -> np.ndarray:
    """Ricci tensor ``R_{i*j}`` on the whole grid.

    Parameters
    ----------
    route : {"nested", "logdet", "compact"}
        ``nested`` differentiates the traced connection ``tr(H^-1 dbar_i H)``
        again; ``logdet`` (default) nests first-difference stencils on
        ``ln det h``, which keeps the result Hermitian to rounding;
        ``compact`` applies second-difference stencils to ``ln det h``.
    """
    _require_square_chart(h)
    n, chart = h.n, h.chart
    out = np.empty(chart.shape + (n, n), dtype=np.complex128)
    if route == "nested":
        hinv = h.inverse()
        for i in range(n):
            a_i = np.trace(hinv @ wirtinger(h.values, chart, i, "anti"), axis1=-2, axis2=-1)
            for j in range(n):
                out[..., i, j] = -wirtinger(a_i, chart, j, "holo")
    elif route == "logdet":
        ld = h.logdet()
        for i in range(n):
            a_i = wirtinger(ld, chart, i, "anti")
            for j in range(n):
                out[..., i, j] = -wirtinger(a_i, chart, j, "holo")
    elif route == "compact":
        ld = h.logdet()
        for i in range(n):
            for j in range(n):
                out[..., i, j] = -ddbar(ld, chart, i, j)
    else:
        raise InvalidInput(f"unknown route {route!r}")
    return out


def ricci(h: MetricField, node, route: str = "logdet", fd_tol: float = FD_TOL) -> np.ndarray:
    """Hermitian Ricci matrix at ``node`` (two-node margin required)."""
    node = _check_node(h.chart, node, 2)
    r = ricci_field(h, route)[node]
    scale = max(1.0, float(np.max(np.abs(h.values[node]))))
    return linalg.hermitize(r, tol=10 * fd_tol * scale)


# extrinsic curvature --------------------------------------------------------

@dataclass(frozen=True)
class Extrinsic:
    """Extrinsic curvature at one node of a t-chart.

    ``K_ext[a]`` is ``dh/dt_a / 2``; ``K[a]`` its trace against ``h^-1``;
    ``K_a[a]`` is ``d ln det h / dt_a / 2`` from the log-determinant.
    """

    K_ext: np.ndarray
    K: np.ndarray
    K_a: np.ndarray


def scalar_extrinsic_field(h: MetricField) -> np.ndarray:
    """``K_a = (1/2) d ln det h / dt_a`` on the grid, shape ``grid + (axes,)``."""
    ld = h.logdet()
    return np.stack([0.5 * wirtinger(ld, h.chart, a, "holo") for a in range(h.chart.n_axes)], axis=-1)


def extrinsic(h: MetricField, node) -> Extrinsic:
    """Extrinsic curvature objects of a metric varying over t-axes."""
    node = _check_node(h.chart, node, 0)
    hinv = h.inverse()[node]
    kext = np.stack([0.5 * wirtinger(h.values, h.chart, a, "holo")[node] for a in range(h.chart.n_axes)])
    k = np.trace(hinv @ kext, axis1=-2, axis2=-1)
    return Extrinsic(kext, k, scalar_extrinsic_field(h)[node])


# relative metric, inertial force and Berry curvature ----------------------

@dataclass(frozen=True)
class RelativeMetric:
    """Relative metric ``g = G + (i/2) Omega`` with inertial force and Berry curvature."""

    g: np.ndarray
    G: np.ndarray
    Omega: np.ndarray
    F: np.ndarray
    B: np.ndarray

    @property
    def force_gap(self) -> float:
        """``max |F - g|``: how far the inertial force is from the relative metric."""
        return float(np.max(np.abs(self.F - self.g)))


def split_metric(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split a Hermitian ``g`` into real-symmetric ``G`` and real-antisymmetric ``Omega``."""
    return g.real.copy(), 2.0 * g.imag


def gram_field(kets: np.ndarray) -> np.ndarray:
    """Pointwise Gram ``<X_i|X_j>`` of kets shaped ``grid + (N, D)``."""
    return np.einsum("...id,...jd->...ij", kets.conj(), kets)


def inertial_force_field(k_field: np.ndarray, chart: CoordinateChart) -> np.ndarray:
    """``F[a, b] = dK_b / dt_a*`` for ``K`` shaped ``grid + (axes,)``."""
    n = chart.n_axes
    return np.stack([np.stack([wirtinger(k_field[..., b], chart, a, "anti") for b in range(n)], axis=-1)
                     for a in range(n)], axis=-2)


def berry_curvature(f: np.ndarray) -> np.ndarray:
    """``B = F - F^dagger``; anti-Hermitian by construction."""
    return f - np.swapaxes(f, -1, -2).conj()


def relative_metric(kets: np.ndarray, chart: CoordinateChart, node) -> RelativeMetric:
    """Relative metric and inertial force of a ket family varying over a t-chart.

    Parameters
    ----------
    kets : ndarray, shape ``chart.shape + (N, D)``
        The family ``|X_i(t)>`` sampled on the chart.
    chart : CoordinateChart
    node : tuple of int
        Grid node; needs a two-node margin for the nested force stencil.
    """
    kets = np.asarray(kets, dtype=np.complex128)
    _check_grid(chart, kets)
    node = _check_node(chart, node, 2)
    h = gram_field(kets)
    hinv = linalg.inv_hermitian(h)
    duals = np.einsum("...ik,...kd->...id", hinv.conj(), kets)
    n = chart.n_axes
    d_kets = [wirtinger(kets, chart, a, "holo") for a in range(n)]
    d_duals = [wirtinger(duals, chart, a, "holo") for a in range(n)]
    g = np.empty((n, n), dtype=np.complex128)
    for a in range(n):
        for b in range(n):
            # average both placements of the raised index so g is Hermitian
            g[a, b] = 0.5 * np.sum(d_duals[a][node].conj() * d_kets[b][node]
                                   + d_kets[a][node].conj() * d_duals[b][node])
    G, Om = split_metric(g)
    k_field = scalar_extrinsic_field(MetricField(chart, h))
    f = inertial_force_field(k_field, chart)[node]
    return RelativeMetric(g, G, Om, f, berry_curvature(f))


# Kahler potential and closure -----------------------------------------------

@dataclass(frozen=True)
class KahlerDiagnostics:
    """``potential_gap`` compares a force/metric with ``ddbar ln sqrt(det h)``;
    ``closure_defect`` is the worst plaquette mismatch between circulation and
    curvature flux (per unit area)."""

    potential_gap: float
    closure_defect: float
    potential: np.ndarray


def potential_metric(h: MetricField) -> np.ndarray:
    """``dbar_a d_b ln sqrt(det h)`` on the grid from compact stencils."""
    half = 0.5 * h.logdet()
    n = h.chart.n_axes
    return np.stack([np.stack([ddbar(half, h.chart, a, b) for b in range(n)], axis=-1) for a in range(n)], axis=-2)


def closure_defect(k_field: np.ndarray, chart: CoordinateChart) -> float:
    """Max over elementary plaquettes of ``|circulation - flux| / area``.

    The circulation is ``(1/2) oint K dt`` around the plaquette by the
    trapezoid rule; the flux is ``i * F * area`` with ``F = dK/dt*`` averaged
    over the corners. Smooth fields give an ``O(h^2)`` defect; a singular
    (non-closed) field gives an ``O(1/h^2)`` one.
    """
    worst = 0.0
    for a in range(chart.n_axes):
        k = np.moveaxis(k_field[..., a], (2 * a, 2 * a + 1), (0, 1))
        f = np.moveaxis(wirtinger(k_field[..., a], chart, a, "anti"), (2 * a, 2 * a + 1), (0, 1))
        du, dv = chart.spacing(a)
        k00, k10, k01, k11 = k[:-1, :-1], k[1:, :-1], k[:-1, 1:], k[1:, 1:]
        circ = 0.5 * (0.5 * (k00 + k10) * du + 0.5 * (k10 + k11) * 1j * dv
                      - 0.5 * (k11 + k01) * du - 0.5 * (k01 + k00) * 1j * dv)
        fbar = 0.25 * (f[:-1, :-1] + f[1:, :-1] + f[:-1, 1:] + f[1:, 1:])
        flux = 1j * fbar * du * dv
        worst = max(worst, float(np.max(np.abs(circ - flux)) / (du * dv)))
    return worst


def kahler_check(h: MetricField, node, k_field: np.ndarray | None = None, g: np.ndarray | None = None) -> KahlerDiagnostics:
    """Compare the inertial force (or a supplied ``g``) with the Kahler potential form.

    Parameters
    ----------
    h : MetricField
        Metric over the t-chart.
    node : tuple of int
    k_field : ndarray, optional
        Scalar extrinsic curvature ``grid + (axes,)``; defaults to the one of ``h``.
    g : ndarray, optional
        A relative metric at ``node`` to compare instead of the force.
    """
    node = _check_node(h.chart, node, 2)
    pot = potential_metric(h)
    k = scalar_extrinsic_field(h) if k_field is None else np.asarray(k_field, dtype=np.complex128)
    if k.ndim == len(h.chart.shape):
        k = k[..., None]
    lhs = inertial_force_field(k, h.chart)[node] if g is None else np.asarray(g)
    return KahlerDiagnostics(float(np.max(np.abs(lhs - pot[node]))), closure_defect(k, h.chart), pot[node])


# analytic fixtures ----------------------------------------------------------

def analytic_metric(name: str, chart: CoordinateChart, **params) -> MetricField:
    """Closed-form metric fields used by tests and scenarios.

    ``fubini_study``: ``(1 + |z|^2)^-2``; ``flat``: identity;
    ``exp_abs2``: ``exp(|z|^2)``; ``exp_sum``: ``exp(z + z*)``;
    ``exp_linear``: ``exp(lam (t + t*)) I_N``; ``linear``: ``1 + eps Re t``.
    """
    zs = chart.coordinates()
    z = zs[0]
    n = int(params.get("n", chart.n_axes))
    eye = np.eye(n)
    if name == "fubini_study":
        r2 = sum(np.abs(w) ** 2 for w in zs)
        if chart.n_axes == 1:
            vals = (1 + r2) ** -2
        else:
            # standard Fubini-Study on CP^n in affine coordinates
            zz = np.stack(zs, axis=-1)
            vals = ((1 + r2)[..., None, None] * eye - zz[..., :, None] * zz.conj()[..., None, :]) / (1 + r2)[..., None, None] ** 2
    elif name == "flat":
        vals = np.broadcast_to(eye, chart.shape + (n, n)).copy()
    elif name == "exp_abs2":
        vals = np.exp(np.abs(z) ** 2)
    elif name == "exp_sum":
        vals = np.exp(z + z.conj())
    elif name == "exp_linear":
        lam = float(params.get("lam", 0.3))
        vals = np.exp(lam * (z + z.conj()))[..., None, None] * eye
    elif name == "linear":
        vals = 1 + float(params.get("eps", 1e-3)) * z.real
    else:
        raise InvalidInput(f"unknown analytic metric {name!r}")
    return MetricField(chart, np.asarray(vals, dtype=np.complex128))


@dataclass(frozen=True)
class GeometryReport:
    """Geometry collected at a single node; entries are ``None`` when not requested."""

    node: tuple
    gamma: Connection | None = None
    R: np.ndarray | None = None
    extrinsic: Extrinsic | None = None
    relative: RelativeMetric | None = None


def geometry_report(node, x_metric: MetricField | None = None, t_metric: MetricField | None = None,
                    kets: np.ndarray | None = None, t_chart: CoordinateChart | None = None) -> GeometryReport:
    """Bundle connection, Ricci, extrinsic and relative-metric data at ``node``."""
    gamma = connection(x_metric, node) if x_metric is not None else None
    r = ricci(x_metric, node) if x_metric is not None else None
    ext = extrinsic(t_metric, node) if t_metric is not None else None
    rel = None
    if kets is not None:
        chart = t_chart if t_chart is not None else (t_metric.chart if t_metric is not None else None)
        if chart is None:
            raise InvalidInput("kets need a t-chart")
        rel = relative_metric(kets, chart, node)
    return GeometryReport(tuple(node), gamma, r, ext, rel)


# dumps ------------------------------------------------------------------------

def field_records(chart: CoordinateChart, fields: dict[str, np.ndarray]) -> list[dict]:
    """One record per node: complex coordinates and every flattened matrix entry.

    ``fields`` maps a name to an array of shape ``chart.shape`` or
    ``chart.shape + (N, N)``; entry ``(i, j)`` is stored under ``name_ij``.
    """
    coords = chart.coordinates()
    flat = {}
    for name, values in fields.items():
        v = np.asarray(values)
        if v.shape[:len(chart.shape)] != chart.shape:
            raise InvalidInput(f"field {name!r} shape {v.shape} does not fit chart {chart.shape}")
        if v.ndim == len(chart.shape):
            flat[name] = v.reshape(-1, 1)
        else:
            n = v.shape[-1]
            cols = v.reshape(-1, n * n)
            for i in range(n):
                for j in range(n):
                    flat[f"{name}_{i}{j}"] = cols[:, i * n + j]
    rows = []
    for k, node in enumerate(np.ndindex(*chart.shape)):
        row = {"node": "-".join(map(str, node))}
        for label, z in zip(chart.labels, coords):
            row[label] = complex(z[node])
        for key, col in flat.items():
            val = col[k] if col.ndim == 1 else col[k, 0]
            row[key] = complex(val) if np.iscomplexobj(col) else float(val)
        rows.append(row)
    return rows
