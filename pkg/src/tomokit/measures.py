"""Scalar functionals of a two-qubit density matrix.

Entropies use base-2 logarithms. The entanglement measures follow the
spin-flip construction: ``R = rho S rho^T S`` with ``S`` the anti-diagonal
(-1, 1, 1, -1) matrix, and ``C = max(0, sqrt(r1) - sqrt(r2) - sqrt(r3) - sqrt(r4))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .exceptions import InvalidDimension, NotPhysical
from .linalg import BiorthogonalEig, biorthogonal_eig
from .linear import DensityMatrix

# shared with the error propagation code
CLIP_TOL = 1e-9

SPIN_FLIP = np.array([[0, 0, 0, -1], [0, 0, 1, 0], [0, 1, 0, 0], [-1, 0, 0, 0]], dtype=complex)
SPIN_FLIP.setflags(write=False)

MEASURE_NAMES = ("entropy", "linear_entropy", "concurrence", "tangle", "eof")


@dataclass(frozen=True)
class MeasureResult:
    value: float
    name: str

    def __post_init__(self):
        if self.name not in MEASURE_NAMES:
            raise ValueError(f"unknown measure {self.name!r}")

    def __float__(self):
        return float(self.value)


def _as_density(rho) -> DensityMatrix:
    return rho if isinstance(rho, DensityMatrix) else DensityMatrix(rho)


def clipped_spectrum(rho: DensityMatrix) -> np.ndarray:
    """Descending eigenvalues with tiny negatives set to zero and renormalised."""
    w = rho.eig.values
    if w[-1] < -CLIP_TOL:
        raise NotPhysical(f"eigenvalue {w[-1]:.3e} below -{CLIP_TOL}", min_eigenvalue=float(w[-1]))
    w = np.clip(w, 0.0, None)
    return w / w.sum()


def von_neumann_entropy(rho) -> MeasureResult:
    p = clipped_spectrum(_as_density(rho))
    p = p[p > 0]
    return MeasureResult(float(max(0.0, -np.sum(p * np.log2(p)))), "entropy")


def linear_entropy(rho) -> MeasureResult:
    rho = _as_density(rho)
    d = rho.dim
    return MeasureResult(d / (d - 1) * (1.0 - rho.purity()), "linear_entropy")


def spin_flip_matrix(rho) -> np.ndarray:
    m = np.asarray(rho.matrix if isinstance(rho, DensityMatrix) else rho, dtype=complex)
    return m @ SPIN_FLIP @ m.T @ SPIN_FLIP


@dataclass(frozen=True)
class ConcurrenceWork:
    """Intermediate quantities kept for error propagation."""

    rho: DensityMatrix
    r_matrix: np.ndarray
    r_values: np.ndarray  # real parts, descending, tiny negatives clipped
    spin_flip: np.ndarray = SPIN_FLIP

    @cached_property
    def eig(self) -> BiorthogonalEig:
        # may raise DegenerateSpectrum; only needed for derivatives
        return biorthogonal_eig(self.r_matrix)

    @property
    def value(self) -> float:
        return _concurrence_from(self.r_values)


def _concurrence_from(r: np.ndarray) -> float:
    q = np.sqrt(r)
    return float(max(0.0, q[0] - q[1:].sum()))


def _spin_flip_roots(rho: DensityMatrix) -> np.ndarray:
    """sqrt(r_a), descending, as singular values of sqrt(rho) S sqrt(rho)*.

    Same numbers as the square roots of the eigenvalues of R, but zeros come
    out at 1e-16 instead of 1e-8 after the square root.
    """
    half = rho.eig.vectors * np.sqrt(clipped_spectrum(rho)) @ rho.eig.vectors.conj().T
    return np.linalg.svd(half @ SPIN_FLIP @ half.conj(), compute_uv=False)


def concurrence(rho) -> tuple[MeasureResult, ConcurrenceWork]:
    rho = _as_density(rho)
    if rho.dim != 4:
        raise InvalidDimension(f"concurrence needs a 4x4 density matrix, got {rho.dim}x{rho.dim}")
    clipped_spectrum(rho)  # physicality check
    r_mat = spin_flip_matrix(rho)
    raw = np.linalg.eigvals(r_mat).real
    if raw.min() < -CLIP_TOL:
        raise NotPhysical(f"spin-flip eigenvalue {raw.min():.3e} is negative", min_eigenvalue=float(raw.min()))
    r = _spin_flip_roots(rho) ** 2
    r.setflags(write=False)
    work = ConcurrenceWork(rho=rho, r_matrix=r_mat, r_values=r)
    return MeasureResult(min(1.0, work.value), "concurrence"), work


def tangle(c: MeasureResult | float) -> MeasureResult:
    return MeasureResult(float(c) ** 2, "tangle")


def binary_entropy(x: float) -> float:
    if x <= 0.0 or x >= 1.0:
        return 0.0
    return -x * math.log2(x) - (1 - x) * math.log2(1 - x)


def eof_argument(c: float) -> float:
    return 0.5 * (1.0 + math.sqrt(max(0.0, 1.0 - c * c)))


def entanglement_of_formation(c: MeasureResult | float) -> MeasureResult:
    c = float(c)
    if not 0.0 <= c <= 1.0:
        raise ValueError(f"concurrence {c} outside [0, 1]")
    return MeasureResult(binary_entropy(eof_argument(c)), "eof")
