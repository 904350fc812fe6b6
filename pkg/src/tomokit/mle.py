"""Maximum-likelihood estimation with an explicitly physical parametrisation.

``rho_p(t) = T(t)^dagger T(t) / Tr{T^dagger T}`` with ``T`` lower-triangular
(real diagonal ``t1..t4``, complex sub-diagonals built from ``t5..t16``) is
Hermitian, unit-trace and positive semi-definite for every real ``t``. The
fit minimises a Gaussian-approximation negative log-likelihood over ``t``
with a derivative-free local optimiser, starting from the linear estimate.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .counts import CountRecord
from .exceptions import NotConverged, SingularInverse, ZeroFlux, ZeroParametrization
from .linalg import det_and_minors
from .linear import DensityMatrix, TomographySet, linear_reconstruct

log = logging.getLogger(__name__)

# positions of (t_re, t_im) for each strictly-lower entry of T
_OFFDIAG = (((1, 0), 4), ((2, 1), 6), ((3, 2), 8), ((2, 0), 10), ((3, 1), 12), ((3, 0), 14))
DENOMINATOR_FLOOR = 0.5
SINGULAR_TOL = 1e-12
REGULARIZE_EPS = 1e-6


@dataclass(frozen=True)
class TParams:
    t: np.ndarray

    def __post_init__(self):
        t = np.array(self.t, dtype=float).reshape(-1)
        if t.shape != (16,):
            raise ValueError(f"expected 16 parameters, got {t.size}")
        if not np.all(np.isfinite(t)):
            raise ValueError("parameters must be finite")
        t.setflags(write=False)
        object.__setattr__(self, "t", t)


def t_matrix(t) -> np.ndarray:
    t = np.asarray(t.t if isinstance(t, TParams) else t, dtype=float)
    T = np.diag(t[:4]).astype(complex)
    for (i, j), k in _OFFDIAG:
        T[i, j] = complex(t[k], t[k + 1])
    return T


def _t_from_matrix(T: np.ndarray) -> np.ndarray:
    t = np.empty(16)
    t[:4] = np.real(np.diag(T))
    for (i, j), k in _OFFDIAG:
        t[k], t[k + 1] = T[i, j].real, T[i, j].imag
    return t


def _rho_array(t) -> np.ndarray:
    T = t_matrix(t)
    g = T.conj().T @ T
    tr = np.real(np.trace(g))
    if not tr > 1e-300:
        raise ZeroParametrization("Tr{T^dagger T} vanishes; all parameters are zero")
    return g / tr


def t_to_rho(t) -> DensityMatrix:
    return DensityMatrix(_rho_array(t))


def rho_to_t(rho, regularize: bool = False) -> TParams:
    """Invert ``t_to_rho`` through determinants and minors of ``rho``.

    Non-physical input gives complex diagonal entries of T; only their real
    parts are kept. With ``regularize=True`` a singular input is first mixed
    with a tiny amount of the maximally mixed state.
    """
    r = np.asarray(rho.matrix if isinstance(rho, DensityMatrix) else rho, dtype=complex)
    if regularize:
        r = (1 - REGULARIZE_EPS) * r + REGULARIZE_EPS * np.eye(4) / 4
    det, m1, m2 = det_and_minors(r)
    m11, m12 = m1[0, 0], m1[0, 1]
    m1122, m1223, m1123 = m2[0, 0, 1, 1], m2[0, 1, 1, 2], m2[0, 0, 1, 2]
    r44 = r[3, 3]
    for name, v in (("rho_44", r44), ("M1_11", m11), ("M2_11,22", m1122)):
        if abs(v) < SINGULAR_TOL:
            raise SingularInverse(f"{name} = {abs(v):.2e} is too small to invert the parametrisation")
    sq = np.emath.sqrt
    T = np.zeros((4, 4), dtype=complex)
    T[0, 0] = sq(det / m11)
    T[1, 0] = m12 / sq(m11 * m1122)
    T[1, 1] = sq(m11 / m1122)
    T[2, 0] = m1223 / (sq(r44) * sq(m1122))
    T[2, 1] = m1123 / (sq(r44) * sq(m1122))
    T[2, 2] = sq(m1122 / r44)
    T[3, :3] = r[3, :3] / sq(r44)
    T[3, 3] = sq(r44)
    t = _t_from_matrix(T)
    if not np.any(t):
        raise SingularInverse("inverse parametrisation produced all-zero parameters")
    return TParams(t)


def _expected_counts(t, flux: float, tset: TomographySet) -> np.ndarray:
    return flux * tset.project(_rho_array(t))


def likelihood(t, counts: CountRecord, tset: TomographySet) -> float:
    """Sum over settings of (nbar - n)^2 / (2 nbar), nbar floored at 0.5 counts."""
    flux = counts.normalization
    if flux <= 0:
        raise ZeroFlux("sum of the first four counts is zero")
    tv = t.t if isinstance(t, TParams) else t
    nbar = _expected_counts(tv, flux, tset)
    return float(np.sum((nbar - counts.n) ** 2 / (2.0 * np.maximum(nbar, DENOMINATOR_FLOOR))))


@dataclass(frozen=True)
class OptimizerOptions:
    max_evals: int = 100_000
    rel_tol: float = 1e-10
    param_tol: float = 1e-8
    strict: bool = False  # raise NotConverged instead of warning


@dataclass
class MLEResult:
    rho: DensityMatrix
    t: TParams
    likelihood: float
    iterations: int
    evaluations: int
    converged: bool
    history: list[float] = field(default_factory=list)
    start: TParams | None = None


def initial_parameters(counts: CountRecord, tset: TomographySet) -> TParams:
    rho_lin, _ = linear_reconstruct(counts, tset)
    try:
        return rho_to_t(rho_lin)
    except SingularInverse:
        log.debug("linear estimate is singular; regularising the starting point")
        try:
            return rho_to_t(rho_lin, regularize=True)
        except SingularInverse:
            return TParams(np.r_[np.ones(4), np.zeros(12)])


def _unit(t: np.ndarray) -> np.ndarray:
    return t / np.linalg.norm(t)


def mle_reconstruct(
    counts: CountRecord, tset: TomographySet, opts: OptimizerOptions = OptimizerOptions()
) -> MLEResult:
    start = initial_parameters(counts, tset)
    flux = counts.normalization
    data = counts.n

    def objective(t):
        nbar = _expected_counts(t, flux, tset)
        return float(np.sum((nbar - data) ** 2 / (2.0 * np.maximum(nbar, DENOMINATOR_FLOOR))))

    x = _unit(start.t.copy())
    fx = objective(x)
    history = [fx]
    evals, iterations = 1, 0
    converged = False

    def record(intermediate_result):
        nonlocal iterations
        iterations += 1
        history.append(float(intermediate_result.fun))

    # Powell restarts from a fresh direction set until one full run leaves
    # both the objective and the estimate unchanged.
    while evals < opts.max_evals:
        res = minimize(
            objective,
            x,
            method="Powell",
            callback=record,
            options={"xtol": opts.param_tol, "ftol": opts.rel_tol, "maxfev": opts.max_evals - evals},
        )
        evals += int(res.nfev)
        x_new = _unit(np.asarray(res.x, dtype=float))
        f_new = float(res.fun)
        if f_new > fx:  # never accept a worse point
            break
        # T -> U T leaves rho unchanged, so motion is measured on rho itself
        step = float(np.max(np.abs(_rho_array(x_new) - _rho_array(x))))
        gain = fx - f_new
        x, fx = x_new, f_new
        if gain <= opts.rel_tol * max(abs(fx), 1.0) and step < opts.param_tol:
            converged = True
            break
    history.append(fx)

    t = TParams(x)
    result = MLEResult(
        rho=t_to_rho(t),
        t=t,
        likelihood=fx,
        iterations=iterations,
        evaluations=evals,
        converged=converged,
        history=history,
        start=start,
    )
    if not converged:
        msg = f"MLE did not converge within {opts.max_evals} evaluations (L = {fx:.6g})"
        if opts.strict:
            raise NotConverged(msg, result)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    return result
