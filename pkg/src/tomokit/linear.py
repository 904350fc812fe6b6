"""Linear tomographic reconstruction.

Two schemes live here:

* the general 16-state two-qubit scheme: a Gamma basis turns density
  matrices into 16-vectors, the design matrix ``B`` maps them to expected
  counts, and its inverse yields the dual matrices ``M_nu`` with
  ``rho = sum_nu M_nu s_nu``;
* the Stokes scheme for one or more qubits built from the four single-qubit
  operators ``mu_0..mu_3`` and the ``Upsilon`` matrix.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property, reduce

import numpy as np

from .counts import CountRecord
from .exceptions import (
    InvalidDimension,
    NotTomographicallyComplete,
    TomographyError,
    UnsupportedSize,
    ZeroFlux,
)
from .linalg import HermitianEig, hermitian_eig
from .projection import KET_D, KET_DBAR, KET_H, KET_L, KET_R, KET_V, ProjectionState, state_angle_derivatives

PHYSICAL_TOL = 1e-9
CONDITION_LIMIT = 1e8

_I2 = np.eye(2, dtype=complex)
_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
_Z = np.array([[1, 0], [0, -1]], dtype=complex)


class InvalidDesign(TomographyError):
    """Design is complete but its first four states do not resolve the identity."""


def _proj(ket: np.ndarray) -> np.ndarray:
    return np.outer(ket, ket.conj())


def gamma_basis() -> np.ndarray:
    """The 16 normalised two-qubit Pauli products, shape (16, 4, 4).

    Ordered I.X, I.Y, I.Z, X.I, X.X, X.Y, X.Z, Y.I, Y.X, Y.Y, Y.Z, Z.I,
    Z.X, Z.Y, Z.Z, I.I so that the last element is the identity / 2.
    """
    pairs = [(_I2, _X), (_I2, _Y), (_I2, _Z)]
    for first in (_X, _Y, _Z):
        pairs += [(first, _I2), (first, _X), (first, _Y), (first, _Z)]
    pairs.append((_I2, _I2))
    return np.array([0.5 * np.kron(a, b) for a, b in pairs])


@dataclass(frozen=True)
class DensityMatrix:
    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise InvalidDimension(f"density matrix must be square, got {m.shape}")
        herm = np.max(np.abs(m - m.conj().T))
        if herm > PHYSICAL_TOL:
            raise ValueError(f"density matrix not Hermitian (deviation {herm:.2e})")
        if abs(np.trace(m) - 1) > PHYSICAL_TOL:
            raise ValueError(f"density matrix trace {np.trace(m).real:.12f} != 1")
        m = 0.5 * (m + m.conj().T)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @cached_property
    def eig(self) -> HermitianEig:
        return hermitian_eig(self.matrix)

    @property
    def physical(self) -> bool:
        return bool(self.eig.values[-1] >= -PHYSICAL_TOL)

    def purity(self) -> float:
        return float(np.real(np.trace(self.matrix @ self.matrix)))


@dataclass(frozen=True)
class TomographySet:
    states: tuple[ProjectionState, ...]
    b_matrix: np.ndarray
    m_matrices: np.ndarray  # (16, 4, 4)
    d_flags: np.ndarray  # (16,) bool
    f_coeffs: np.ndarray = field(repr=False)  # (16, 16, 4): [nu, mu, angle]

    @cached_property
    def kets(self) -> np.ndarray:
        return np.array([s.ket for s in self.states])

    def project(self, rho) -> np.ndarray:
        """<psi_nu| rho |psi_nu> for every design state."""
        k = self.kets
        return np.real(np.einsum("vi,ij,vj->v", k.conj(), np.asarray(rho), k))

    def combine(self, s) -> np.ndarray:
        """sum_nu M_nu s_nu (no normalisation applied)."""
        return np.einsum("v,vij->ij", np.asarray(s, dtype=float), self.m_matrices)


def build_tomography_set(states, basis: np.ndarray | None = None) -> TomographySet:
    states = tuple(states)
    if len(states) != 16:
        raise InvalidDimension(f"a two-qubit design needs 16 states, got {len(states)}")
    gam = gamma_basis() if basis is None else np.asarray(basis, dtype=complex)
    kets = np.array([s.ket for s in states])
    b = np.einsum("vi,mij,vj->vm", kets.conj(), gam, kets)
    cond = np.linalg.cond(b)
    if not np.isfinite(cond) or cond > CONDITION_LIMIT:
        raise NotTomographicallyComplete(f"design matrix B is singular (condition {cond:.3e})", cond)
    b_inv = np.linalg.inv(b)
    # <psi_mu|M_nu|psi_mu> = delta requires contracting the first index of B^-1
    m = np.einsum("mv,mij->vij", b_inv, gam)

    basis_sum = sum(_proj(k) for k in kets[:4])
    if np.max(np.abs(basis_sum - np.eye(4))) > 1e-8:
        raise InvalidDesign("the first four design states must form an orthonormal basis")
    d_flags = np.zeros(16, dtype=bool)
    d_flags[:4] = True

    f = np.empty((16, 16, 4))
    for nu, st in enumerate(states):
        grads = state_angle_derivatives(st.setting)
        # 2 Re <d psi| M_mu |psi>
        f[nu] = 2.0 * np.real(np.einsum("ai,mij,j->ma", grads.conj(), m, st.ket))
    for arr in (b, m, d_flags, f):
        arr.setflags(write=False)
    return TomographySet(states=states, b_matrix=b, m_matrices=m, d_flags=d_flags, f_coeffs=f)


def linear_reconstruct(counts: CountRecord | np.ndarray, tset: TomographySet) -> tuple[DensityMatrix, float]:
    """rho = (sum_nu M_nu n_nu) / (n_1 + n_2 + n_3 + n_4)."""
    n = counts.n if isinstance(counts, CountRecord) else np.asarray(counts, dtype=float).reshape(-1)
    if n.shape != (16,):
        raise InvalidDimension(f"expected 16 counts, got {n.size}")
    norm = float(n[:4].sum())
    if norm <= 0:
        raise ZeroFlux("sum of the first four counts is zero")
    return DensityMatrix(tset.combine(n) / norm), norm


@dataclass(frozen=True)
class PhysicalityReport:
    eigenvalues: np.ndarray
    trace_rho_squared: float
    physical: bool


def physicality_report(rho: DensityMatrix) -> PhysicalityReport:
    return PhysicalityReport(rho.eig.values.copy(), rho.purity(), rho.physical)


# --- Stokes scheme -------------------------------------------------------

# Pauli operators written with circular kets, expressed in the H/V basis
SIGMA = np.array(
    [
        _proj(KET_R) + _proj(KET_L),
        np.outer(KET_R, KET_L.conj()) + np.outer(KET_L, KET_R.conj()),
        1j * (np.outer(KET_L, KET_R.conj()) - np.outer(KET_R, KET_L.conj())),
        _proj(KET_R) - _proj(KET_L),
    ]
)

MU_DESIGN = np.array([_proj(KET_H) + _proj(KET_V), _proj(KET_H), _proj(KET_DBAR), _proj(KET_R)])
MU_PRIME_DESIGN = np.array([_proj(KET_H), _proj(KET_V), _proj(KET_D), _proj(KET_R)])

UPSILON = np.array([[1, 0, 0, 0], [0.5, 0.5, 0, 0], [0.5, 0, 0.5, 0], [0.5, 0, 0, 0.5]])
UPSILON_INV = np.array([[1, 0, 0, 0], [-1, 2, 0, 0], [-1, 0, 2, 0], [-1, 0, 0, 2]], dtype=float)


def upsilon(design: np.ndarray = MU_DESIGN) -> np.ndarray:
    """Coefficients of mu_i = sum_j Upsilon_ij sigma_j."""
    return np.real(np.einsum("iab,jba->ij", design, SIGMA)) / 2.0


@dataclass(frozen=True)
class StokesVector:
    s: np.ndarray
    counts: np.ndarray


def stokes_single_qubit(n0: float, n1: float, n2: float, n3: float) -> tuple[StokesVector, DensityMatrix]:
    """Classic four-intensity Stokes measurement (50% filter, H, anti-diagonal, R)."""
    n = np.array([n0, n1, n2, n3], dtype=float)
    if n0 <= 0:
        raise ZeroFlux("n0 must be positive")
    s = np.concatenate(([2 * n[0]], 2 * (n[1:] - n[0])))
    rho = 0.5 * np.einsum("i,iab->ab", s / s[0], SIGMA)
    return StokesVector(s=s, counts=n), DensityMatrix(rho)


def nqubit_linear_reconstruct(
    n_qubits: int, counts, design: np.ndarray = MU_DESIGN
) -> DensityMatrix:
    """Reconstruct a 2^n density matrix from 4^n counts of mu_{i1} x ... x mu_{in}.

    ``counts`` is indexed by (i1, ..., in) in row-major order, i1 slowest.
    """
    if not 1 <= n_qubits <= 3:
        raise UnsupportedSize(f"n-qubit reconstruction supports 1..3 qubits, got {n_qubits}")
    n = np.asarray(counts, dtype=float).reshape(-1)
    if n.size != 4**n_qubits:
        raise InvalidDimension(f"expected {4 ** n_qubits} counts, got {n.size}")
    ups_inv = UPSILON_INV if design is MU_DESIGN else np.linalg.inv(upsilon(design))
    # n-photon Stokes parameters: S = (Ups^-1 x ... x Ups^-1) n
    stokes = reduce(np.kron, [ups_inv] * n_qubits) @ n
    if stokes[0] <= 0:
        raise ZeroFlux("zeroth Stokes parameter is not positive")
    dim = 2**n_qubits
    rho = np.zeros((dim, dim), dtype=complex)
    for idx, value in zip(itertools.product(range(4), repeat=n_qubits), stokes):
        rho += value * reduce(np.kron, [SIGMA[i] for i in idx])
    return DensityMatrix(rho / (dim * stokes[0]))


def nqubit_expected_counts(rho, flux: float = 1.0, design: np.ndarray = MU_DESIGN) -> np.ndarray:
    """Forward model n_I = flux * Tr{rho (mu_i1 x ... x mu_in)}."""
    rho = np.asarray(rho, dtype=complex)
    n_qubits = int(round(np.log2(rho.shape[0])))
    out = []
    for idx in itertools.product(range(4), repeat=n_qubits):
        op = reduce(np.kron, [design[i] for i in idx])
        out.append(flux * np.real(np.trace(rho @ op)))
    return np.array(out)
