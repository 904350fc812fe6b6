"""Monte Carlo check of the analytic error bars.

Trials are generated in fixed-size chunks. Chunk ``k`` draws from the k-th
child of ``SeedSequence(seed)``, so results do not depend on how many worker
threads run. ``TOMO_KIT_THREADS`` caps the worker count.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .counts import CountRecord
from .linear import TomographySet
from .synthetic import GeneratorConfig, sample_counts
from .uncertainty import ErrorBudget, lambda_variances, rho_element_errors

CHUNK = 1000
# first-order propagation needs a few counts; settings below this are not assessed
MIN_EXPECTED_COUNTS = 10.0


def worker_count() -> int:
    raw = os.environ.get("TOMO_KIT_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return min(4, os.cpu_count() or 1)


def simulate_trials(cfg: GeneratorConfig, tset: TomographySet, trials: int, seed: int | None = None) -> np.ndarray:
    """(trials, 16) counts, reproducible for a given seed whatever the thread count."""
    if trials <= 0:
        raise ValueError("trials must be positive")
    seed = cfg.seed if seed is None else seed
    sizes = [CHUNK] * (trials // CHUNK) + ([trials % CHUNK] if trials % CHUNK else [])
    children = np.random.SeedSequence(int(seed)).spawn(len(sizes))

    def run(k):
        return sample_counts(cfg, tset, sizes[k], np.random.default_rng(children[k]))

    with ThreadPoolExecutor(max_workers=min(worker_count(), len(sizes))) as pool:
        chunks = list(pool.map(run, range(len(sizes))))
    return np.concatenate(chunks, axis=0)


@dataclass(frozen=True)
class ValidationResult:
    trials: int
    seed: int
    normalization: str  # "fixed" (s = n / N_true) or "observed" (s = n / sum of first four)
    lam: np.ndarray
    empirical_var_s: np.ndarray
    var_ratio: np.ndarray  # empirical / analytic
    rho_sigma: np.ndarray
    empirical_rho_std: np.ndarray
    rho_ratio: np.ndarray
    assessed: np.ndarray  # settings with enough expected counts to compare

    def worst_var_deviation(self) -> float:
        return float(np.max(np.abs(self.var_ratio[self.assessed] - 1.0), initial=0.0))

    def worst_rho_deviation(self) -> float:
        """Only meaningful when every setting is assessed; nan otherwise."""
        if not np.all(self.assessed):
            return float("nan")
        return float(np.max(np.abs(self.rho_ratio - 1.0)))


def monte_carlo_validate(
    cfg: GeneratorConfig,
    tset: TomographySet,
    trials: int = 10_000,
    seed: int | None = None,
    normalization: str = "observed",
    exact_covariance: bool = False,
) -> ValidationResult:
    """Compare empirical spread of s and of the linear estimate with the analytic budget.

    The count cross term only exists when s is divided by the observed basis
    sum, so ``exact_covariance`` has no effect with "fixed" normalisation.
    """
    if normalization not in ("fixed", "observed"):
        raise ValueError("normalization must be 'fixed' or 'observed'")
    seed = cfg.seed if seed is None else int(seed)
    n = simulate_trials(cfg, tset, trials, seed)
    if normalization == "fixed":
        s = n / cfg.total_flux
    else:
        norm = n[:, :4].sum(axis=1, keepdims=True)
        if np.any(norm <= 0):
            raise ValueError("a trial produced zero flux in the basis settings")
        s = n / norm
    s_true = tset.project(cfg.rho_true.matrix)
    ref = CountRecord(cfg.total_flux * s_true, settings=tuple(st.setting for st in tset.states), delta_theta=cfg.delta_theta)
    dtheta = cfg.delta_theta if cfg.noise_mode == "poisson_plus_jitter" else 0.0
    exact = exact_covariance and normalization == "observed"
    budget: ErrorBudget = lambda_variances(ref, s_true, tset, exact_covariance=exact, delta_theta=dtheta)
    emp_var = np.var(s, axis=0, ddof=1)
    rho = np.einsum("tv,vij->tij", s, tset.m_matrices)
    emp_std = np.sqrt(np.sum(np.abs(rho - rho.mean(axis=0)) ** 2, axis=0) / (trials - 1))
    sigma = rho_element_errors(budget, tset)
    with np.errstate(divide="ignore", invalid="ignore"):
        var_ratio = np.where(budget.lam > 0, emp_var / budget.lam, np.where(emp_var == 0, 1.0, np.inf))
        rho_ratio = np.where(sigma > 0, emp_std / sigma, np.where(emp_std == 0, 1.0, np.inf))
    return ValidationResult(
        trials=trials,
        seed=seed,
        normalization=normalization,
        lam=budget.lam,
        empirical_var_s=emp_var,
        var_ratio=var_ratio,
        rho_sigma=sigma,
        empirical_rho_std=emp_std,
        rho_ratio=rho_ratio,
        assessed=cfg.total_flux * s_true >= MIN_EXPECTED_COUNTS,
    )


@dataclass(frozen=True)
class ElementCheck:
    trials: int
    seed: int
    rho_sigma: np.ndarray
    empirical_rho_std: np.ndarray
    rho_ratio: np.ndarray

    def worst_rho_deviation(self) -> float:
        return float(np.max(np.abs(self.rho_ratio - 1.0)))


def resample_counts_validate(
    counts: CountRecord,
    tset: TomographySet,
    trials: int = 10_000,
    seed: int = 0,
    exact_covariance: bool = False,
) -> ElementCheck:
    """Poisson-resample observed counts and compare linear-estimate spread with Delta rho.

    Needs no physical state, so it applies to raw data whose linear estimate
    is not positive. Angle errors are not simulated, so Delta theta is 0.
    """
    if trials <= 1:
        raise ValueError("need at least two trials")
    rng = np.random.default_rng(np.random.SeedSequence(int(seed)))
    n = rng.poisson(counts.n, size=(trials, 16)).astype(float)
    norm = n[:, :4].sum(axis=1, keepdims=True)
    if np.any(norm <= 0):
        raise ValueError("a trial produced zero flux in the basis settings")
    rho = np.einsum("tv,vij->tij", n / norm, tset.m_matrices)
    emp_std = np.sqrt(np.sum(np.abs(rho - rho.mean(axis=0)) ** 2, axis=0) / (trials - 1))
    budget = lambda_variances(counts, counts.s(), tset, exact_covariance=exact_covariance, delta_theta=0.0)
    sigma = rho_element_errors(budget, tset)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(sigma > 0, emp_std / sigma, np.where(emp_std == 0, 1.0, np.inf))
    return ElementCheck(trials, int(seed), sigma, emp_std, ratio)
