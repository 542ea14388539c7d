"""Entangled relative states over paired non-orthonormal basis families.

An entangled state ``|X,T> = sum_i C_i |X_i>|T_i>`` is described by its
calibration coefficients ``C`` and the two basis families. Conditioning on a
reference state of one subsystem gives relative amplitudes ``C_i / conj(a_i)``
and relative probabilities ``|C_i / a_i|**2``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from . import linalg
from .errors import DegenerateBasis, DegenerateMetric, InvalidInput, UndefinedConditional

NORM_TOL = 1e-12
Mode = Literal["raw", "renormalized"]


@dataclass(frozen=True)
class BasisFamily:
    """A family of ``N`` vectors in an ambient space of dimension ``D``.

    Parameters
    ----------
    vectors : array_like, shape (N, D)
        Basis vectors as rows.
    signature : {+1, -1}
        Sign of the dual pairing; ``-1`` marks a timelike family.
    label : str
        Free-form name, e.g. ``"x"`` or ``"t"``.
    """

    vectors: np.ndarray
    signature: int = 1
    label: str = ""
    cond_max: float = linalg.COND_MAX

    def __post_init__(self):
        vec = linalg.as_basis(self.vectors).copy()
        vec.flags.writeable = False
        object.__setattr__(self, "vectors", vec)
        if self.signature not in (1, -1):
            raise InvalidInput(f"signature must be +1 or -1, got {self.signature}")
        linalg.check_conditioning(linalg.gram(vec), self.cond_max)

    @property
    def count(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def gram(self) -> np.ndarray:
        return linalg.gram(self.vectors)

    def inverse_gram(self) -> np.ndarray:
        return linalg.inv_hermitian(self.gram())

    def duals(self) -> np.ndarray:
        return linalg.dual_basis(self.vectors, self.signature, self.cond_max)

    def flipped(self) -> "BasisFamily":
        return BasisFamily(self.vectors, -self.signature, self.label, self.cond_max)

    def expand(self, vector) -> np.ndarray:
        """Coefficients of ``vector`` projected onto the span of the family."""
        v = linalg.as_vector(vector)
        # positive pairing regardless of signature
        return linalg.dual_basis(self.vectors, 1, self.cond_max).conj() @ v

    def combine(self, coefficients) -> np.ndarray:
        """Ambient vector ``sum_i c_i |v_i>``."""
        return linalg.as_vector(coefficients) @ self.vectors


@dataclass(frozen=True)
class SubsystemState:
    """A state of one subsystem expanded in a basis family.

    Parameters
    ----------
    amplitudes : array_like, shape (N,)
        Coefficients ``a_i`` in ``sum_i a_i |v_i>``.
    family : BasisFamily
        The family the amplitudes refer to.
    """

    amplitudes: np.ndarray
    family: BasisFamily

    def __post_init__(self):
        a = linalg.as_vector(self.amplitudes, "amplitudes").copy()
        if a.size != self.family.count:
            raise InvalidInput(f"{a.size} amplitudes for a family of {self.family.count} vectors")
        a.flags.writeable = False
        object.__setattr__(self, "amplitudes", a)

    def ket(self) -> np.ndarray:
        return self.family.combine(self.amplitudes)

    def norm2(self) -> float:
        """Metric norm ``sum a_i* G_ij a_j``."""
        a = self.amplitudes
        return float(np.real(a.conj() @ self.family.gram() @ a))


@dataclass(frozen=True)
class EntangledState:
    """Calibrated entangled state ``sum_i C_i |X_i>|T_i>``.

    The coefficients are frozen after construction; dynamics lives in the
    basis families.

    Raises
    ------
    InvalidInput
        If the families differ in count or ``sum |C_i|**2`` is not 1.
    """

    coefficients: np.ndarray
    x_basis: BasisFamily
    t_basis: BasisFamily

    def __post_init__(self):
        c = linalg.as_vector(self.coefficients, "coefficients").copy()
        n = self.x_basis.count
        if self.t_basis.count != n or c.size != n:
            raise InvalidInput(
                f"calibration needs equal counts, got C:{c.size} x:{n} t:{self.t_basis.count}"
            )
        norm = float(np.sum(np.abs(c) ** 2))
        if abs(norm - 1.0) > NORM_TOL:
            raise InvalidInput(f"sum |C_i|^2 = {norm!r} is not 1 within {NORM_TOL}")
        c.flags.writeable = False
        object.__setattr__(self, "coefficients", c)

    @classmethod
    def normalized(cls, coefficients, x_basis: BasisFamily, t_basis: BasisFamily) -> "EntangledState":
        c = linalg.as_vector(coefficients, "coefficients")
        return cls(c / np.linalg.norm(c), x_basis, t_basis)

    @property
    def n(self) -> int:
        return self.coefficients.size

    def ambient(self) -> np.ndarray:
        """The state as an ``(D_x, D_t)`` array ``sum_i C_i x_i t_i^T``."""
        return np.einsum("i,ia,ib->ab", self.coefficients, self.x_basis.vectors, self.t_basis.vectors)

    def reference_condition(self) -> SubsystemState:
        """The condition state matching the state's own t-expansion.

        Its amplitudes satisfy ``1/|a_i|**2 = (s^-1)_ii`` with ``s`` the t-family
        Gram, so conditioning on it reproduces the partial-trace diagonal.
        """
        sinv = self.t_basis.inverse_gram()
        return SubsystemState(1.0 / np.sqrt(np.real(np.diag(sinv))), self.t_basis)


@dataclass(frozen=True)
class RelativeDistribution:
    """Relative amplitudes and probabilities of one subsystem given the other.

    ``indices`` lists the entangled indices kept; pairs with ``C_i = a_i = 0``
    are omitted and reported in ``diagnostics``.
    """

    amplitudes: np.ndarray
    probabilities: np.ndarray
    normalization_mode: Mode
    indices: np.ndarray
    diagnostics: tuple[str, ...] = field(default=())

    def full(self, n: int) -> np.ndarray:
        """Probabilities scattered back to length ``n`` (omitted entries are 0)."""
        out = np.zeros(n)
        out[self.indices] = self.probabilities
        return out


def _relative(c: np.ndarray, a: np.ndarray, mode: Mode, zero_tol: float) -> RelativeDistribution:
    if mode not in ("raw", "renormalized"):
        raise InvalidInput(f"unknown normalization mode {mode!r}")
    keep, notes = [], []
    for i, (ci, ai) in enumerate(zip(c, a)):
        if abs(ai) <= zero_tol:
            if abs(ci) <= zero_tol:
                notes.append(f"index {i}: C and a both zero, omitted")
                continue
            raise UndefinedConditional(f"condition amplitude a_{i} = 0 while C_{i} = {ci}")
        keep.append(i)
    idx = np.asarray(keep, dtype=np.int64)
    amps = c[idx] / np.conj(a[idx])
    probs = np.abs(amps) ** 2
    if mode == "renormalized":
        total = probs.sum()
        if total <= 0:
            raise UndefinedConditional("all relative probabilities vanish")
        probs = probs / total
    for note in notes:
        warnings.warn(note, RuntimeWarning, stacklevel=3)
    return RelativeDistribution(amps, probs, mode, idx, tuple(notes))


def conditional_project(
    state: EntangledState,
    condition: SubsystemState,
    mode: Mode = "raw",
    zero_tol: float = 0.0,
) -> RelativeDistribution:
    """Relative distribution of the x-subsystem given a t-condition.

    Parameters
    ----------
    state : EntangledState
    condition : SubsystemState
        Condition expanded in ``state.t_basis`` with amplitudes ``a_i``.
    mode : {"raw", "renormalized"}
        ``raw`` keeps ``|C_i/a_i|**2`` as is; ``renormalized`` divides by the sum.
    zero_tol : float
        Amplitudes with modulus at or below this count as zero.

    Returns
    -------
    RelativeDistribution
        Amplitudes ``C_i / conj(a_i)`` and their squared moduli.

    Raises
    ------
    UndefinedConditional
        If some ``a_i`` vanishes while ``C_i`` does not.

    Examples
    --------
    >>> x = BasisFamily(np.eye(2)); t = BasisFamily(np.eye(2))
    >>> s = EntangledState([0.8, 0.6], x, t)
    >>> conditional_project(s, SubsystemState([0.6, 0.8], t)).probabilities.round(6)
    array([1.777778, 0.5625  ])
    """
    if condition.family.count != state.n:
        raise InvalidInput("condition family does not match the entangled index set")
    return _relative(state.coefficients, condition.amplitudes, mode, zero_tol)


def partial_trace_metric(state: EntangledState, over: str = "t") -> np.ndarray:
    """Metric-contracted partial trace in the index space of the kept family.

    Tracing over ``t`` gives ``M[i, j] = (s^-1)[j, i] C_i C_j*`` as the
    coefficient of ``|X_i><X_j|``, i.e. the ordinary trace taken in the dual
    t-basis. With an orthonormal t-family it is the textbook partial trace.

    Raises
    ------
    DegenerateMetric
        If the traced family's Gram matrix is singular.
    """
    families = {state.x_basis.label: state.x_basis, state.t_basis.label: state.t_basis}
    families.update(x=state.x_basis, t=state.t_basis)
    if over not in families:
        raise InvalidInput(f"unknown subsystem {over!r}")
    try:
        ginv = families[over].inverse_gram()
    except (DegenerateBasis, np.linalg.LinAlgError) as exc:
        raise DegenerateMetric(str(exc)) from exc
    c = state.coefficients
    return ginv.T * np.outer(c, c.conj())


def relative_expectation(
    state: EntangledState,
    observable,
    condition: SubsystemState,
    mode: Mode = "renormalized",
) -> float:
    """Conditional expectation ``sum_i P(X_i|T) O_ii``.

    ``observable`` is an ``N x N`` Hermitian matrix in the x-index space, so
    ``O_ii`` plays the role of ``<X_i|O|X_i>``.
    """
    o = linalg.as_matrix(observable, "observable", square=True)
    if o.shape[0] != state.n:
        raise InvalidInput(f"observable is {o.shape[0]}x{o.shape[0]}, expected {state.n}")
    if not linalg.is_hermitian(o):
        raise InvalidInput("observable is not Hermitian")
    dist = conditional_project(state, condition, mode)
    return float(np.real(np.sum(dist.probabilities * np.diag(o)[dist.indices])))


def swap_roles(state: EntangledState) -> EntangledState:
    """Exchange the x and t families and flip both signatures."""
    return EntangledState(state.coefficients, state.t_basis.flipped(), state.x_basis.flipped())


def separable(a, b, x_basis: BasisFamily, t_basis: BasisFamily) -> EntangledState:
    """Entangled state with ``C_i = a_i b_i`` normalized to unit sum."""
    c = linalg.as_vector(a) * linalg.as_vector(b)
    return EntangledState.normalized(c, x_basis, t_basis)


def product_approximation(state: EntangledState) -> tuple[np.ndarray, np.ndarray, float]:
    """Best product approximation ``|u>|v>`` of the ambient state.

    Returns
    -------
    b : ndarray
        Coefficients of ``u`` in the x-family.
    a : ndarray
        Coefficients of ``v`` in the t-family.
    weight : float
        Leading singular value squared over the total.
    """
    amb = state.ambient()
    u, s, vh = np.linalg.svd(amb)
    lead_x = u[:, 0] * s[0]
    lead_t = vh[0]
    b = state.x_basis.expand(lead_x)
    a = state.t_basis.expand(lead_t)
    return b, a, float(s[0] ** 2 / np.sum(s ** 2))


def random_state(
    rng: np.random.Generator,
    n: int,
    d: int | None = None,
    cond_bound: float = 50.0,
    t_signature: int = -1,
) -> EntangledState:
    """Seeded random entangled state with well-conditioned families."""
    d = n if d is None else d
    x = BasisFamily(linalg.random_basis(rng, n, d, cond_bound), 1, "x")
    t = BasisFamily(linalg.random_basis(rng, n, d, cond_bound), t_signature, "t")
    c = rng.normal(size=n) + 1j * rng.normal(size=n)
    return EntangledState.normalized(c, x, t)


# serialization ----------------------------------------------------------------

def _pairs(values: np.ndarray) -> list:
    return [[float(v.real), float(v.imag)] for v in np.asarray(values, dtype=np.complex128).ravel()]


def _from_pairs(values, name: str) -> np.ndarray:
    out = []
    for v in values:
        if isinstance(v, (list, tuple)):
            if len(v) != 2:
                raise InvalidInput(f"{name}: complex numbers are [re, im] pairs, got {v!r}")
            out.append(complex(float(v[0]), float(v[1])))
        else:
            out.append(complex(float(v)))
    return np.array(out, dtype=np.complex128)


def state_to_dict(state: EntangledState) -> dict:
    """Plain-data form: complex numbers as ``[re, im]``, basis vectors as rows."""
    return {
        "coefficients": _pairs(state.coefficients),
        "x_basis": [_pairs(v) for v in state.x_basis.vectors],
        "t_basis": [_pairs(v) for v in state.t_basis.vectors],
        "x_signature": state.x_basis.signature,
        "t_signature": state.t_basis.signature,
    }


def state_from_dict(data: dict, normalize: bool = False) -> EntangledState:
    """Inverse of :func:`state_to_dict`; plain reals are accepted for complex entries.

    Raises
    ------
    InvalidInput
        On a missing key or a malformed complex entry.
    """
    try:
        c = _from_pairs(data["coefficients"], "coefficients")
        x = BasisFamily(np.array([_from_pairs(v, "x_basis") for v in data["x_basis"]]),
                        int(data.get("x_signature", 1)), "x")
        t = BasisFamily(np.array([_from_pairs(v, "t_basis") for v in data["t_basis"]]),
                        int(data.get("t_signature", -1)), "t")
    except KeyError as exc:
        raise InvalidInput(f"state is missing {exc.args[0]!r}") from None
    return EntangledState.normalized(c, x, t) if normalize else EntangledState(c, x, t)
