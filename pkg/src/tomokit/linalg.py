"""Small dense complex linear algebra: eigen-systems, perturbations, minors.

Everything here works on plain ``numpy`` arrays of shape ``(d, d)`` with
``d <= 8``. Hermitian spectra are returned in descending order; general
spectra are sorted by descending real part so that the concurrence
convention ``r1 >= r2 >= r3 >= r4`` holds by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DegenerateSpectrum, InvalidDimension, InvalidIndex, NotHermitian

HERMITIAN_TOL = 1e-8
BIORTHOGONAL_TOL = 1e-6
GAP_TOL = 1e-8
MAX_DIM = 8


def as_square(m, dim: int | None = None) -> np.ndarray:
    a = np.asarray(m, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidDimension(f"expected a square matrix, got shape {a.shape}")
    if a.shape[0] == 0 or a.shape[0] > MAX_DIM:
        raise InvalidDimension(f"dimension {a.shape[0]} outside 1..{MAX_DIM}")
    if dim is not None and a.shape[0] != dim:
        raise InvalidDimension(f"expected a {dim}x{dim} matrix, got {a.shape}")
    return a


def is_hermitian(m, tol: float = 1e-10) -> bool:
    a = np.asarray(m)
    return a.ndim == 2 and a.shape[0] == a.shape[1] and bool(np.max(np.abs(a - a.conj().T), initial=0.0) <= tol)


def is_unit_trace(m, tol: float = 1e-10) -> bool:
    return bool(abs(np.trace(np.asarray(m)) - 1.0) <= tol)


@dataclass(frozen=True)
class HermitianEig:
    values: np.ndarray  # real, descending
    vectors: np.ndarray  # columns are orthonormal eigenvectors

    def reconstruct(self) -> np.ndarray:
        return (self.vectors * self.values) @ self.vectors.conj().T


@dataclass(frozen=True)
class BiorthogonalEig:
    values: np.ndarray  # complex, descending real part
    right_vectors: np.ndarray  # column a is |zeta_a>
    left_vectors: np.ndarray  # row a is <xi_a|
    residual: float = 0.0

    def reconstruct(self) -> np.ndarray:
        return (self.right_vectors * self.values) @ self.left_vectors


def hermitian_eig(m) -> HermitianEig:
    a = as_square(m)
    asym = np.max(np.abs(a - a.conj().T))
    if asym > HERMITIAN_TOL:
        raise NotHermitian(f"matrix deviates from Hermitian by {asym:.3e}")
    a = 0.5 * (a + a.conj().T)
    w, v = np.linalg.eigh(a)
    # stable sort keeps the solver's order among exact ties
    order = np.argsort(-w, kind="stable")
    return HermitianEig(values=w[order].real.copy(), vectors=v[:, order].copy())


def biorthogonal_eig(m) -> BiorthogonalEig:
    """Right/left eigen-system of a general square matrix with <xi_a|zeta_b> = delta_ab.

    Raises :class:`DegenerateSpectrum` when the matrix is (numerically)
    defective, i.e. the eigenvector matrix cannot be inverted reliably.
    """
    a = as_square(m)
    w, z = np.linalg.eig(a)
    order = np.lexsort((-w.imag, -w.real))
    w = w[order]
    z = z[:, order]
    z = z / np.linalg.norm(z, axis=0)
    cond = np.linalg.cond(z)
    if not np.isfinite(cond):
        raise DegenerateSpectrum("eigenvector matrix is singular (defective matrix)", residual=np.inf)
    x = np.linalg.inv(z)
    dim = a.shape[0]
    scale = max(1.0, float(np.max(np.abs(a))))
    residual = max(
        float(np.max(np.abs(x @ z - np.eye(dim)))),
        float(np.max(np.abs((z * w) @ x - a))) / scale,
        np.finfo(float).eps * cond,
    )
    if residual > BIORTHOGONAL_TOL:
        raise DegenerateSpectrum(
            f"bi-orthogonal expansion unreliable (residual {residual:.3e})", residual=residual
        )
    return BiorthogonalEig(values=w, right_vectors=z, left_vectors=x, residual=residual)


def _check_index(eig: BiorthogonalEig, a: int) -> None:
    if not 0 <= a < len(eig.values):
        raise InvalidIndex(f"eigen-index {a} out of range 0..{len(eig.values) - 1}")


def eigenvalue_derivative(eig: BiorthogonalEig, a: int, dm) -> complex:
    """First-order change of eigenvalue ``a`` along direction ``dm``: <xi_a| dm |zeta_a>."""
    _check_index(eig, a)
    dm = np.asarray(dm, dtype=complex)
    return complex(eig.left_vectors[a] @ dm @ eig.right_vectors[:, a])


def eigenvector_perturbation(eig: BiorthogonalEig, a: int, dm) -> tuple[np.ndarray, np.ndarray]:
    """First-order corrections (right column, left row) of eigenvector pair ``a``.

    The corrections carry no component along the unperturbed pair itself,
    i.e. the perturbed right vector is normalised so that <xi_a|zeta'_a> = 1.
    """
    _check_index(eig, a)
    r = eig.values
    gaps = np.abs(r[:, None] - r[None, :])[~np.eye(len(r), dtype=bool)]
    if gaps.size and gaps.min() <= GAP_TOL:
        raise DegenerateSpectrum(f"eigenvalue gap {gaps.min():.3e} below {GAP_TOL}", residual=gaps.min())
    dm = np.asarray(dm, dtype=complex)
    z, x = eig.right_vectors, eig.left_vectors
    right = np.zeros(len(r), dtype=complex)
    left = np.zeros(len(r), dtype=complex)
    for b in range(len(r)):
        if b == a:
            continue
        right -= (x[b] @ dm @ z[:, a]) / (r[b] - r[a]) * z[:, b]
        left -= (x[a] @ dm @ z[:, b]) / (r[b] - r[a]) * x[b]
    return right, left


def _minor(m: np.ndarray, rows, cols) -> complex:
    keep_r = [i for i in range(m.shape[0]) if i not in rows]
    keep_c = [j for j in range(m.shape[1]) if j not in cols]
    return complex(np.linalg.det(m[np.ix_(keep_r, keep_c)]))


def det_and_minors(m) -> tuple[complex, np.ndarray, np.ndarray]:
    """Determinant, first minors and second minors of a 4x4 matrix.

    ``first[i, j]`` deletes row ``i`` and column ``j``. ``second[i, j, k, l]``
    deletes rows ``i, k`` and columns ``j, l`` (zero where ``i == k`` or
    ``j == l``). Indices are 0-based.
    """
    a = as_square(m, dim=4)
    det = complex(np.linalg.det(a))
    first = np.empty((4, 4), dtype=complex)
    for i in range(4):
        for j in range(4):
            first[i, j] = _minor(a, (i,), (j,))
    second = np.zeros((4, 4, 4, 4), dtype=complex)
    for i in range(4):
        for k in range(4):
            if i == k:
                continue
            for j in range(4):
                for l in range(4):
                    if j != l:
                        second[i, j, k, l] = _minor(a, (i, k), (j, l))
    return det, first, second
