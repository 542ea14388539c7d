"""Dense complex linear algebra with an explicit tolerance policy.

Inner products conjugate the first argument, so ``gram(B)[i, j] = <B_i|B_j>``.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import DegenerateBasis, DegenerateMetric, InvalidInput

HERMITICITY_TOL = 1e-10
COND_MAX = 1e12
DUAL_TOL = 1e-10
PD_FLOOR = 1e-10


def as_vector(entries, name: str = "vector") -> np.ndarray:
    """Return ``entries`` as a finite 1-D complex array.

    Raises
    ------
    InvalidInput
        If the array is empty, not 1-D, or holds NaN/Inf.
    """
    v = np.asarray(entries, dtype=np.complex128)
    if v.ndim != 1 or v.size == 0:
        raise InvalidInput(f"{name} must be a non-empty 1-D array, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise InvalidInput(f"{name} has non-finite entries")
    return v


def as_matrix(entries, name: str = "matrix", square: bool = False) -> np.ndarray:
    """Return ``entries`` as a finite 2-D complex array."""
    m = np.asarray(entries, dtype=np.complex128)
    if m.ndim != 2 or m.size == 0:
        raise InvalidInput(f"{name} must be a non-empty 2-D array, got shape {m.shape}")
    if square and m.shape[0] != m.shape[1]:
        raise InvalidInput(f"{name} must be square, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise InvalidInput(f"{name} has non-finite entries")
    return m


def as_basis(basis) -> np.ndarray:
    """Stack a list of vectors into an ``(N, D)`` array of rows.

    Raises
    ------
    InvalidInput
        On ragged input, non-finite entries, or more vectors than dimensions.
    """
    if isinstance(basis, np.ndarray):
        arr = np.asarray(basis, dtype=np.complex128)
        if arr.ndim == 1:
            arr = arr[None, :]
    else:
        rows = [np.asarray(b, dtype=np.complex128) for b in basis]
        if not rows:
            raise InvalidInput("basis is empty")
        dims = {r.shape for r in rows}
        if len(dims) != 1 or rows[0].ndim != 1:
            raise InvalidInput(f"basis vectors have mismatched shapes {sorted(dims)}")
        arr = np.stack(rows)
    if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
        raise InvalidInput(f"basis must be a non-empty list of vectors, got shape {arr.shape}")
    if arr.shape[0] > arr.shape[1]:
        raise InvalidInput(f"{arr.shape[0]} vectors cannot be independent in dimension {arr.shape[1]}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInput("basis has non-finite entries")
    return arr


def hermiticity_error(m: np.ndarray) -> float:
    """Max-norm of ``M - M^dagger`` (works on stacks of matrices)."""
    return float(np.max(np.abs(m - np.swapaxes(m, -1, -2).conj()), initial=0.0))


def hermitize(m: np.ndarray, tol: float | None = HERMITICITY_TOL) -> np.ndarray:
    """Symmetrize ``(M + M^dagger) / 2``.

    Parameters
    ----------
    m : ndarray
        Square matrix or stack of square matrices.
    tol : float or None
        Maximum allowed drift before symmetrization. ``None`` skips the check.

    Raises
    ------
    InvalidInput
        If the drift exceeds ``tol``.
    """
    if tol is not None:
        drift = hermiticity_error(m)
        if drift > tol:
            raise InvalidInput(f"hermiticity drift {drift:.3e} exceeds tolerance {tol:.1e}")
    return 0.5 * (m + np.swapaxes(m, -1, -2).conj())


def is_hermitian(m: np.ndarray, tol: float = HERMITICITY_TOL) -> bool:
    return m.shape[-1] == m.shape[-2] and hermiticity_error(m) <= tol


def gram(basis) -> np.ndarray:
    """Gram matrix ``G[i, j] = <basis_i|basis_j>``.

    Examples
    --------
    >>> gram([[1, 0], [0.5, np.sqrt(3) / 2]]).real.round(12)
    array([[1. , 0.5],
           [0.5, 1. ]])
    """
    b = as_basis(basis)
    return hermitize(b.conj() @ b.T, tol=None)


def check_conditioning(g: np.ndarray, cond_max: float = COND_MAX) -> float:
    """Return the 2-norm condition number of ``g``; raise if above ``cond_max``."""
    w = np.linalg.eigvalsh(g)
    if w[0] <= 0:
        raise DegenerateBasis(f"Gram matrix is singular (min eigenvalue {w[0]:.3e})")
    cond = float(w[-1] / w[0])
    if cond >= cond_max:
        raise DegenerateBasis(f"Gram condition number {cond:.3e} exceeds {cond_max:.1e}")
    return cond


def dual_basis(basis, signature: int = 1, cond_max: float = COND_MAX) -> np.ndarray:
    """Dual family with ``<dual_j|basis_i> = signature * delta_ij``.

    The duals span the same subspace as ``basis`` and are returned as rows.

    Raises
    ------
    DegenerateBasis
        If the Gram matrix is singular or too ill-conditioned.
    """
    if signature not in (1, -1):
        raise InvalidInput(f"signature must be +1 or -1, got {signature}")
    b = as_basis(basis)
    g = gram(b)
    check_conditioning(g, cond_max)
    ginv = np.linalg.inv(g)
    # <dual_j|b_i> = sum_k Ginv_jk G_ki needs conj(Ginv_jk) as coefficients
    return signature * (ginv.conj() @ b)


def logdet(m) -> complex:
    """Stable ``ln det M`` with the imaginary part in ``(-pi, pi]``.

    Raises
    ------
    DegenerateMetric
        If ``M`` is singular.
    """
    sign, ld = np.linalg.slogdet(np.asarray(m, dtype=np.complex128))
    sign = np.asarray(sign)
    if np.any(sign == 0) or not np.all(np.isfinite(ld)):
        raise DegenerateMetric("matrix is singular; log-determinant undefined")
    phase = np.angle(sign)
    phase = np.where(phase <= -np.pi, phase + 2 * np.pi, phase)
    out = ld + 1j * phase
    return complex(out) if np.ndim(out) == 0 else out


def inv_hermitian(m: np.ndarray) -> np.ndarray:
    """Inverse of a (stack of) invertible matrices, re-Hermitized."""
    try:
        inv = np.linalg.inv(m)
    except np.linalg.LinAlgError as exc:
        raise DegenerateMetric(str(exc)) from exc
    if not np.all(np.isfinite(inv)):
        raise DegenerateMetric("matrix inverse is not finite")
    return 0.5 * (inv + np.swapaxes(inv, -1, -2).conj())


def min_eigenvalue(m: np.ndarray) -> float:
    """Smallest eigenvalue over a (stack of) Hermitian matrices."""
    return float(np.min(np.linalg.eigvalsh(m)))


def random_basis(rng: np.random.Generator, n: int, d: int, cond_bound: float = 50.0) -> np.ndarray:
    """Random complex basis of ``n`` vectors in dimension ``d`` with bounded Gram condition.

    Draws until the Gram condition number is below ``cond_bound``.
    """
    for _ in range(1000):
        b = rng.normal(size=(n, d)) + 1j * rng.normal(size=(n, d))
        b /= np.linalg.norm(b, axis=1, keepdims=True)
        w = np.linalg.eigvalsh(gram(b))
        if w[0] > 0 and w[-1] / w[0] < cond_bound:
            return b
    raise DegenerateBasis(f"could not draw a basis with condition below {cond_bound}")


def random_hermitian(rng: np.random.Generator, n: int) -> np.ndarray:
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return 0.5 * (a + a.conj().T)
