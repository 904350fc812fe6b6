"""Error propagation from counts and waveplate angles to every reported quantity.

Uncertainties are first expressed on the normalised counts ``s_nu`` as
variances ``Lambda_nu`` (Poisson term plus waveplate-angle term). Any scalar
``X(s)`` then gets ``(dX)^2 = sum_nu (dX/ds_nu)^2 Lambda_nu``, or the full
quadratic form when the exact count covariance is kept.

Derivatives are evaluated at the supplied density matrix. The ``s`` vector
only enters through ``Lambda``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .counts import CountRecord
from .exceptions import (
    DegenerateConcurrence,
    DegenerateSpectrum,
    EofDerivativeSingular,
    ZeroFlux,
)
from .linear import DensityMatrix, TomographySet
from .measures import (
    CLIP_TOL,
    SPIN_FLIP,
    ConcurrenceWork,
    clipped_spectrum,
    concurrence,
    entanglement_of_formation,
)

R_FLOOR = 1e-8
C_CEILING = 1.0 - 1e-8
FD_STEP = 1e-5


@dataclass(frozen=True)
class ErrorBudget:
    lam: np.ndarray  # Lambda_nu
    count_term: np.ndarray
    angle_term: np.ndarray
    s: np.ndarray
    flux: float
    delta_theta: float
    covariance: np.ndarray | None = None  # only with the exact count covariance
    rho_sigma: np.ndarray | None = None
    measure_sigmas: dict = field(default_factory=dict)
    notes: tuple[str, ...] = ()

    @property
    def source_split(self) -> np.ndarray:
        """(16, 2) array of (count_term, angle_term)."""
        return np.stack([self.count_term, self.angle_term], axis=1)

    def propagate(self, grad) -> float:
        g = np.asarray(grad, dtype=float)
        if self.covariance is not None:
            v = float(g @ self.covariance @ g)
        else:
            v = float(np.sum(g * g * self.lam))
        return math.sqrt(max(v, 0.0))


def s_parameters(counts: CountRecord, rho: DensityMatrix | None = None, tset: TomographySet | None = None) -> np.ndarray:
    """Normalised counts n/N, or the projections <psi|rho|psi> when ``rho`` is given."""
    if counts.normalization <= 0:
        raise ZeroFlux("sum of the first four counts is zero")
    if rho is None:
        return counts.s()
    if tset is None:
        raise ValueError("the model path needs the tomography set")
    m = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho)
    return tset.project(m)


def lambda_variances(
    counts: CountRecord,
    s,
    tset: TomographySet,
    exact_covariance: bool = False,
    delta_theta: float | None = None,
) -> ErrorBudget:
    dtheta = counts.delta_theta if delta_theta is None else float(delta_theta)
    if dtheta < 0:
        raise ValueError("delta_theta must be nonnegative")
    flux = counts.normalization
    if flux <= 0:
        raise ZeroFlux("sum of the first four counts is zero")
    s = np.asarray(s, dtype=float)
    # one dot product per (nu, angle), then squared
    dots = np.einsum("vmi,m->vi", tset.f_coeffs, s)
    angle = dtheta**2 * np.sum(dots**2, axis=1)
    count = s / flux
    cov = None
    if exact_covariance:
        d = tset.d_flags.astype(float)
        cov = np.diag(s / flux) + np.outer(s, s) * (1.0 - d[:, None] - d[None, :]) / flux
        count = np.diag(cov).copy()
        cov = cov + np.diag(angle)
    return ErrorBudget(
        lam=count + angle,
        count_term=count,
        angle_term=angle,
        s=s,
        flux=flux,
        delta_theta=dtheta,
        covariance=cov,
    )


def rho_element_errors(budget: ErrorBudget, tset: TomographySet) -> np.ndarray:
    m = tset.m_matrices
    if budget.covariance is not None:
        var = np.real(np.einsum("vij,vw,wij->ij", m, budget.covariance, m.conj()))
    else:
        var = np.einsum("vij,v->ij", np.abs(m) ** 2, budget.lam)
    return np.sqrt(np.clip(var, 0.0, None))


# --- gradients with respect to s_nu ---------------------------------------


def entropy_gradient(rho: DensityMatrix, tset: TomographySet) -> np.ndarray:
    """dS/ds_nu; eigenvalues at or below the clip tolerance are left out (0 log 0 = 0)."""
    p = clipped_spectrum(rho)
    vecs = rho.eig.vectors
    keep = p > CLIP_TOL
    # <phi_a| M_nu |phi_a> for every nu, a
    proj = np.real(np.einsum("ia,vij,ja->va", vecs.conj(), tset.m_matrices, vecs))
    return -(proj[:, keep] * (1.0 + np.log(p[keep]))).sum(axis=1) / math.log(2.0)


def linear_entropy_gradient(rho: DensityMatrix, tset: TomographySet) -> np.ndarray:
    d = rho.dim
    return -2.0 * d / (d - 1) * np.real(np.einsum("ij,vji->v", rho.matrix, tset.m_matrices))


def _spin_flip_derivatives(rho: np.ndarray, m: np.ndarray) -> np.ndarray:
    sf = SPIN_FLIP
    left = np.einsum("vij,jk->vik", m, sf @ rho.T @ sf)
    right = np.einsum("ij,vjk->vik", rho @ sf, np.transpose(m, (0, 2, 1)) @ sf)
    return left + right


def _concurrence_value(rho: np.ndarray) -> float:
    r = np.sort(np.linalg.eigvals(rho @ SPIN_FLIP @ rho.T @ SPIN_FLIP).real)[::-1]
    q = np.sqrt(np.clip(r, 0.0, None))
    return float(max(0.0, q[0] - q[1:].sum()))


def concurrence_gradient_fd(rho, tset: TomographySet, step: float = FD_STEP) -> np.ndarray:
    """Symmetric finite difference of C along each M_nu."""
    m0 = np.asarray(rho.matrix if isinstance(rho, DensityMatrix) else rho, dtype=complex)
    out = np.empty(len(tset.m_matrices))
    for nu, m in enumerate(tset.m_matrices):
        out[nu] = (_concurrence_value(m0 + step * m) - _concurrence_value(m0 - step * m)) / (2 * step)
    return out


def concurrence_gradient(work: ConcurrenceWork, tset: TomographySet) -> np.ndarray:
    """Analytic dC/ds_nu from the bi-orthogonal eigen-system of R.

    Raises DegenerateConcurrence when some r_a is below the floor or the
    eigen-system is too close to defective for first-order perturbation.
    """
    if work.value <= 0.0:
        return np.zeros(len(tset.m_matrices))
    if work.r_values.min() <= R_FLOOR:
        raise DegenerateConcurrence(
            f"spin-flip eigenvalue {work.r_values.min():.3e} at or below floor {R_FLOOR}"
        )
    try:
        eig = work.eig
    except DegenerateSpectrum as exc:
        raise DegenerateConcurrence(str(exc)) from exc
    r = eig.values.real
    sign = np.array([1.0, -1.0, -1.0, -1.0])
    dr = _spin_flip_derivatives(work.rho.matrix, tset.m_matrices)
    # <xi_a| dR_nu |zeta_a>
    dlam = np.real(np.einsum("ai,vij,ja->va", eig.left_vectors, dr, eig.right_vectors))
    return dlam @ (sign / (2.0 * np.sqrt(r)))


def eof_derivative(c: float) -> float:
    """dE/dC through x = (1 + sqrt(1 - C^2)) / 2."""
    if c >= C_CEILING:
        raise EofDerivativeSingular(f"C = {c} too close to 1 for the analytic derivative")
    if c <= 0.0:
        return 0.0
    root = math.sqrt(1.0 - c * c)
    x = 0.5 * (1.0 + root)
    one_minus_x = c * c / (2.0 * (1.0 + root))  # cancellation-free 1 - x
    if one_minus_x == 0.0:
        return 0.0
    h_prime = math.log2(one_minus_x / x)
    dx_dc = -c / (2.0 * root)
    return h_prime * dx_dc


def _eof_derivative_fd(c: float, step: float = FD_STEP) -> float:
    e = lambda v: entanglement_of_formation(min(max(v, 0.0), 1.0)).value  # noqa: E731
    if c + step > 1.0:
        return (e(c) - e(c - step)) / step
    return (e(c + step) - e(c - step)) / (2 * step)


def entropy_error(rho: DensityMatrix, budget: ErrorBudget, tset: TomographySet) -> float:
    return budget.propagate(entropy_gradient(rho, tset))


def linear_entropy_error(rho: DensityMatrix, budget: ErrorBudget, tset: TomographySet) -> float:
    return budget.propagate(linear_entropy_gradient(rho, tset))


@dataclass(frozen=True)
class ConcurrenceErrors:
    d_concurrence: float
    d_tangle: float
    d_eof: float
    concurrence_method: str  # "analytic" or "finite-difference"
    eof_method: str


def concurrence_error(
    work: ConcurrenceWork, budget: ErrorBudget, tset: TomographySet, fallback: bool = True
) -> ConcurrenceErrors:
    """(dC, dT, dE). With ``fallback=False`` the degenerate cases raise instead."""
    c = min(1.0, work.value)
    try:
        grad = concurrence_gradient(work, tset)
        c_method = "analytic"
    except DegenerateConcurrence:
        if not fallback:
            raise
        grad = concurrence_gradient_fd(work.rho, tset)
        c_method = "finite-difference"
    dc = budget.propagate(grad)
    try:
        de_dc = eof_derivative(c)
        e_method = "analytic"
    except EofDerivativeSingular:
        if not fallback:
            raise
        de_dc = _eof_derivative_fd(c)
        e_method = "finite-difference"
    return ConcurrenceErrors(
        d_concurrence=dc,
        d_tangle=2.0 * c * dc,
        d_eof=abs(de_dc) * dc,
        concurrence_method=c_method,
        eof_method=e_method,
    )


def full_error_budget(
    rho: DensityMatrix,
    counts: CountRecord,
    tset: TomographySet,
    s_path: str = "model",
    exact_covariance: bool = False,
    delta_theta: float | None = None,
) -> ErrorBudget:
    """Lambda, element errors and all five measure errors in one budget.

    ``s_path`` is "model" (s from projections of ``rho``) or "counts" (n / N).
    """
    if s_path not in ("model", "counts"):
        raise ValueError(f"s_path must be 'model' or 'counts', got {s_path!r}")
    s = s_parameters(counts, rho if s_path == "model" else None, tset)
    budget = lambda_variances(counts, s, tset, exact_covariance=exact_covariance, delta_theta=delta_theta)
    _, work = concurrence(rho)
    ce = concurrence_error(work, budget, tset)
    sigmas = {
        "entropy": entropy_error(rho, budget, tset),
        "linear_entropy": linear_entropy_error(rho, budget, tset),
        "concurrence": ce.d_concurrence,
        "tangle": ce.d_tangle,
        "eof": ce.d_eof,
    }
    notes = []
    if ce.concurrence_method != "analytic":
        notes.append("concurrence derivative from symmetric finite differences (degenerate spin-flip spectrum)")
    if ce.eof_method != "analytic":
        notes.append("entanglement-of-formation derivative from finite differences (C near 1)")
    return replace(
        budget,
        rho_sigma=rho_element_errors(budget, tset),
        measure_sigmas=sigmas,
        notes=tuple(notes),
    )
