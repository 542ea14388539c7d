"""Object-plus-clock model under the zero total energy constraint.

The object lives on a Dirichlet box ``x_grid``; the clock pointer on a
periodic ``t_grid``. Three clock kinds are built:

``ideal``
    Momentum-like clock whose momenta are matched to ``-E_n`` of the object,
    in its momentum basis. Readings are the (non-orthogonal) time states
    ``|T> = D_t**-0.5 sum_n exp(-i p_n T) |p_n>``, which ``H_T`` translates.
    The history state is then an exact zero mode and conditioning on ``|T>``
    gives ``exp(-i H_X T) psi0``.
``periodic``
    ``H_T = -i d/dT`` realized spectrally on the periodic grid.
``massive``
    ``H_T = p**2 / (2 m_T)`` with a periodic 3-point Laplacian.

Constraint solutions store ``Psi`` as a ``(D_x, D_t)`` array in the clock's
own basis together with the bras of the clock readings.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .errors import InvalidInput, NoZeroMode, UndefinedConditional

WD_TOL = 1e-8
CLOCK_MODES = ("ideal", "periodic", "massive")


def _uniform(grid, name: str) -> np.ndarray:
    g = np.asarray(grid, dtype=float)
    if g.ndim != 1 or g.size < 3:
        raise InvalidInput(f"{name} needs at least 3 samples")
    d = np.diff(g)
    if np.any(d <= 0) or np.ptp(d) > 1e-9 * d[0]:
        raise InvalidInput(f"{name} must be uniform and increasing")
    return g


@dataclass(frozen=True)
class ClockSystemModel:
    """Grids, masses and potential of the object/clock pair.

    Parameters
    ----------
    x_grid, t_grid : array_like
        Uniform position and clock-pointer samples.
    m_x : float
        Object mass.
    m_t : float or None
        Clock mass, used by the ``massive`` clock.
    V : array_like or None
        Potential on ``x_grid``.
    clock_mode : {"ideal", "periodic", "massive"}
    """

    x_grid: np.ndarray
    t_grid: np.ndarray
    m_x: float = 1.0
    m_t: float | None = None
    V: np.ndarray | None = None
    clock_mode: str = "ideal"

    def __post_init__(self):
        object.__setattr__(self, "x_grid", _uniform(self.x_grid, "x_grid"))
        object.__setattr__(self, "t_grid", _uniform(self.t_grid, "t_grid"))
        if self.m_x <= 0:
            raise InvalidInput("m_x must be positive")
        if self.clock_mode not in CLOCK_MODES:
            raise InvalidInput(f"clock_mode must be one of {CLOCK_MODES}, got {self.clock_mode!r}")
        if self.clock_mode == "massive" and (self.m_t is None or self.m_t <= 0):
            raise InvalidInput("massive clock needs m_t > 0")
        if self.V is not None:
            v = np.asarray(self.V, dtype=float)
            if v.shape != self.x_grid.shape or not np.all(np.isfinite(v)):
                raise InvalidInput("V must be finite samples on x_grid")
            object.__setattr__(self, "V", v)

    @classmethod
    def box(cls, d_x: int, length_x: float, d_t: int, length_t: float, **kw) -> "ClockSystemModel":
        """Interior nodes of ``[0, length_x]`` and ``d_t`` periodic nodes on ``[0, length_t)``."""
        x = np.linspace(0.0, length_x, d_x + 2)[1:-1]
        t = np.arange(d_t) * (length_t / d_t)
        return cls(x, t, **kw)

    @property
    def dx(self) -> float:
        return float(self.x_grid[1] - self.x_grid[0])

    @property
    def dt(self) -> float:
        return float(self.t_grid[1] - self.t_grid[0])


def object_hamiltonian(model: ClockSystemModel, mass: float | None = None, potential_scale: float = 1.0) -> np.ndarray:
    """Dirichlet 3-point kinetic term ``1/(2 m dx**2) tridiag(-1, 2, -1)`` plus ``diag(V)``."""
    m = model.m_x if mass is None else mass
    n = model.x_grid.size
    c = 1.0 / (2.0 * m * model.dx**2)
    h = np.diag(np.full(n, 2.0 * c)) - c * (np.eye(n, k=1) + np.eye(n, k=-1))
    if model.V is not None:
        h = h + np.diag(potential_scale * model.V)
    return h.astype(np.complex128)


def spectral_momentum(t_grid: np.ndarray) -> np.ndarray:
    """``-i d/dT`` on a periodic grid; the Nyquist mode is dropped so the matrix is Hermitian."""
    n = t_grid.size
    dt = float(t_grid[1] - t_grid[0])
    k = 2 * np.pi * np.fft.fftfreq(n, dt)
    if n % 2 == 0:
        k[n // 2] = 0.0
    f = np.fft.fft(np.eye(n), axis=0)
    deriv = np.real(np.fft.ifft(1j * k[:, None] * f, axis=0))
    return -1j * deriv


def _ideal_momenta(model: ClockSystemModel, e_x: np.ndarray) -> np.ndarray:
    d_t = model.t_grid.size
    p = np.empty(d_t)
    m = min(d_t, e_x.size)
    p[:m] = -e_x[:m]
    if d_t > m:
        # unmatched clock levels continue below the matched band and are never populated
        step = (e_x[-1] - e_x[0]) / max(e_x.size - 1, 1)
        p[m:] = p[m - 1] - step * np.arange(1, d_t - m + 1)
    return p


def build_hamiltonians(model: ClockSystemModel) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(H_X, H_T)`` as dense Hermitian matrices.

    ``H_T`` is expressed in the clock's own basis: grid nodes for the
    ``periodic`` and ``massive`` clocks, momentum eigenstates for ``ideal``.
    """
    hx = object_hamiltonian(model)
    if model.clock_mode == "ideal":
        ht = np.diag(_ideal_momenta(model, np.linalg.eigvalsh(hx))).astype(np.complex128)
    elif model.clock_mode == "periodic":
        ht = spectral_momentum(model.t_grid)
    else:
        n = model.t_grid.size
        c = 1.0 / (2.0 * model.m_t * model.dt**2)
        lap = -2.0 * np.eye(n) + np.eye(n, k=1) + np.eye(n, k=-1)
        lap[0, -1] = lap[-1, 0] = 1.0
        ht = (-c * lap).astype(np.complex128)
    for name, m in (("H_X", hx), ("H_T", ht)):
        if not linalg.is_hermitian(m, linalg.HERMITICITY_TOL * max(1.0, float(np.max(np.abs(m))))):
            raise InvalidInput(f"{name} is not Hermitian")
    return hx, ht


@dataclass(frozen=True)
class ConstraintSolution:
    """Zero mode ``Psi`` of ``H_X + H_T``.

    Attributes
    ----------
    psi : ndarray, shape (D_x, D_t)
        Unit-norm state; columns refer to the clock basis.
    residual : float
        ``||(H_X + H_T) Psi|| / ||Psi||``.
    energy : float
        ``<Psi|H_X + H_T|Psi>``.
    clock_states : ndarray, shape (D_t, D_t)
        Row ``k`` is the bra of the clock reading ``t_grid[k]`` in the clock basis.
    accepted : bool
        Whether ``residual <= wd_tol``.
    """

    psi: np.ndarray
    residual: float
    energy: float
    clock_states: np.ndarray
    t_grid: np.ndarray
    x_grid: np.ndarray
    accepted: bool
    mode: str
    diagnostics: dict = field(default_factory=dict)

    @property
    def vector(self) -> np.ndarray:
        """``Psi`` flattened on the product grid (object index slowest)."""
        return self.psi.reshape(-1)


def _residual(hx, ht, psi) -> tuple[float, float]:
    hpsi = hx @ psi + psi @ ht.T
    norm = np.linalg.norm(psi)
    return float(np.linalg.norm(hpsi) / norm), float(np.real(np.vdot(psi, hpsi)) / norm**2)


def time_state_bras(model: ClockSystemModel, momenta: np.ndarray, times=None) -> np.ndarray:
    """Rows ``<T|`` of the ideal clock in its momentum basis."""
    t = model.t_grid if times is None else np.atleast_1d(np.asarray(times, dtype=float))
    return np.exp(1j * np.outer(t, momenta)) / np.sqrt(momenta.size)


def solve_constraint(model: ClockSystemModel, psi0=None, wd_tol: float = WD_TOL,
                     zero_window: float | None = None) -> ConstraintSolution:
    """Solve ``(H_X + H_T) Psi = 0``.

    Parameters
    ----------
    model : ClockSystemModel
    psi0 : array_like, optional
        Initial object state for the ideal clock's history state; defaults to
        the object's ground state.
    wd_tol : float
        Residual bound for ``accepted``.
    zero_window : float, optional
        Largest ``|E_X + E_T|`` accepted as a zero mode for generic clocks;
        defaults to three mean level spacings of ``H_X``.

    Raises
    ------
    NoZeroMode
        If no pair of levels sums to within ``zero_window`` of zero.
    """
    hx, ht = build_hamiltonians(model)
    e_x, phi = np.linalg.eigh(hx)
    if model.clock_mode == "ideal":
        if psi0 is None:
            psi0 = phi[:, 0]
        psi0 = linalg.as_vector(psi0, "psi0")
        if psi0.size != e_x.size:
            raise InvalidInput("psi0 does not match x_grid")
        coeff = phi.conj().T @ psi0
        m = min(model.t_grid.size, e_x.size)
        psi = np.zeros((e_x.size, model.t_grid.size), dtype=np.complex128)
        psi[:, :m] = phi[:, :m] * coeff[:m]
        dropped = float(np.sum(np.abs(coeff[m:]) ** 2) / np.sum(np.abs(coeff) ** 2))
        psi /= np.linalg.norm(psi)
        bras = time_state_bras(model, np.real(np.diag(ht)))
        res, en = _residual(hx, ht, psi)
        return ConstraintSolution(psi, res, en, bras, model.t_grid, model.x_grid, res <= wd_tol, "ideal",
                                  {"truncated_weight": dropped})
    e_t, chi = np.linalg.eigh(ht)
    if zero_window is None:
        zero_window = 3.0 * (e_x[-1] - e_x[0]) / max(e_x.size - 1, 1)
    sums = e_x[:, None] + e_t[None, :]
    n, k = np.unravel_index(np.argmin(np.abs(sums)), sums.shape)
    gap = float(abs(sums[n, k]))
    if gap > zero_window:
        raise NoZeroMode(f"closest level pair sums to {gap:.3e}, outside the zero window {zero_window:.3e}")
    psi = np.outer(phi[:, n], chi[:, k])
    res, en = _residual(hx, ht, psi)
    return ConstraintSolution(psi, res, en, np.eye(model.t_grid.size, dtype=np.complex128), model.t_grid,
                              model.x_grid, res <= wd_tol, model.clock_mode,
                              {"levels": (int(n), int(k)), "pair_sum": float(sums[n, k])})


def _clock_index(sol: ConstraintSolution, T_value: float) -> int:
    k = int(np.argmin(np.abs(sol.t_grid - T_value)))
    dt = sol.t_grid[1] - sol.t_grid[0]
    if abs(sol.t_grid[k] - T_value) > 1e-9 * abs(dt):
        raise InvalidInput(f"clock reading {T_value} is not on t_grid")
    return k


def condition_on_clock(sol: ConstraintSolution, T_value: float, width: float | None = None) -> np.ndarray:
    """Relative state of the object given the clock reads ``T_value``.

    Parameters
    ----------
    sol : ConstraintSolution
    T_value : float
        A node of ``t_grid``.
    width : float, optional
        Gaussian window ``sigma_T``; the condition becomes the weighted
        superposition of neighbouring readings instead of a single one.

    Returns
    -------
    ndarray
        Unit-norm object state.

    Raises
    ------
    UndefinedConditional
        If the conditioned state vanishes.
    """
    k = _clock_index(sol, T_value)
    if width is None:
        bra = sol.clock_states[k]
    else:
        if width <= 0:
            raise InvalidInput("window width must be positive")
        w = np.exp(-((sol.t_grid - sol.t_grid[k]) ** 2) / (2.0 * width**2))
        bra = w @ sol.clock_states
    out = sol.psi @ bra
    norm = np.linalg.norm(out)
    if norm <= 1e-300:
        raise UndefinedConditional(f"the solution has no weight at clock reading {T_value}")
    return out / norm


def fidelity(a, b) -> float:
    """Phase-insensitive overlap ``|<a|b>|**2 / (|a|**2 |b|**2)``."""
    a, b = np.asarray(a), np.asarray(b)
    return float(abs(np.vdot(a, b)) ** 2 / (np.vdot(a, a).real * np.vdot(b, b).real))


def gaussian_state(x: np.ndarray, center: float, sigma: float, k0: float = 0.0) -> np.ndarray:
    """Unit-norm sampled packet ``exp(-(x-c)**2/(4 sigma**2) + i k0 x)``."""
    psi = np.exp(-((x - center) ** 2) / (4 * sigma**2) + 1j * k0 * x)
    return psi / np.linalg.norm(psi)


def packet_width(x: np.ndarray, psi: np.ndarray) -> float:
    """Standard deviation of ``|psi|**2`` over ``x``."""
    p = np.abs(psi) ** 2
    p = p / p.sum()
    mean = np.sum(p * x)
    return float(np.sqrt(np.sum(p * (x - mean) ** 2)))


@dataclass(frozen=True)
class Reduction:
    """Effective mass, lapse and object Hamiltonian in clock time."""

    M_x: float
    lapse: float
    H: np.ndarray


def semiclassical_reduction(model: ClockSystemModel, clock_rate: float) -> Reduction:
    """Object Hamiltonian in clock time for a clock advancing at ``d<T>/dtau``.

    The kinetic term takes the mass ``M_x = m_x * rate`` and the potential is
    scaled by the lapse ``1/rate``, so the reduced Hamiltonian is ``H_X/rate``
    and evolving for clock span ``rate * tau`` reproduces evolution for ``tau``.

    Raises
    ------
    InvalidInput
        If ``clock_rate`` is not positive.
    """
    if not clock_rate > 0:
        raise InvalidInput("clock rate must be positive")
    lapse = 1.0 / clock_rate
    h = object_hamiltonian(model, mass=model.m_x * clock_rate, potential_scale=lapse)
    return Reduction(model.m_x * clock_rate, lapse, h)


def propagate(h: np.ndarray, psi: np.ndarray, duration: float) -> np.ndarray:
    """``exp(-i H duration) psi`` through the eigendecomposition of ``H``."""
    w, v = np.linalg.eigh(h)
    return v @ (np.exp(-1j * w * duration) * (v.conj().T @ psi))
