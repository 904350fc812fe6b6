"""Forward-model count generator used as a test oracle.

Expected counts are ``N <psi_nu| rho |psi_nu>``. Optional noise: independent
Poisson draws, and Gaussian jitter (std ``delta_theta``) on each of the 64
waveplate angles before the projection is computed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .counts import DEFAULT_DELTA_THETA, CountRecord
from .linear import DensityMatrix, TomographySet

NOISE_MODES = ("noiseless", "poisson", "poisson_plus_jitter")


@dataclass(frozen=True)
class GeneratorConfig:
    rho_true: DensityMatrix
    total_flux: float = 10_000.0
    delta_theta: float = DEFAULT_DELTA_THETA
    noise_mode: str = "poisson"
    seed: int = 0

    def __post_init__(self):
        if not isinstance(self.rho_true, DensityMatrix):
            object.__setattr__(self, "rho_true", DensityMatrix(self.rho_true))
        if not self.rho_true.physical:
            raise ValueError("rho_true must be physical")
        if not (math.isfinite(self.total_flux) and self.total_flux > 0):
            raise ValueError("total_flux must be positive")
        if not (math.isfinite(self.delta_theta) and self.delta_theta >= 0):
            raise ValueError("delta_theta must be nonnegative")
        if self.noise_mode not in NOISE_MODES:
            raise ValueError(f"noise_mode must be one of {NOISE_MODES}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


def _beam_kets(h: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Vectorised single-beam amplitudes, shape (..., 2)."""
    a = (np.sin(2 * h) + 1j * np.sin(2 * (h - q))) / math.sqrt(2)
    b = (np.cos(2 * h) - 1j * np.cos(2 * (h - q))) / math.sqrt(2)
    return np.stack([a, b], axis=-1)


def kets_from_angles(angles: np.ndarray) -> np.ndarray:
    """angles (..., 16, 4) as (h1, q1, h2, q2) -> two-photon kets (..., 16, 4)."""
    one = _beam_kets(angles[..., 0], angles[..., 1])
    two = _beam_kets(angles[..., 2], angles[..., 3])
    return (one[..., :, None] * two[..., None, :]).reshape(*angles.shape[:-1], 4)


def _nominal_angles(tset: TomographySet) -> np.ndarray:
    return np.array([st.setting.as_tuple() for st in tset.states])


def expected_fractions(rho, tset: TomographySet, angles: np.ndarray | None = None) -> np.ndarray:
    """<psi|rho|psi> for the nominal (or supplied, batched) angles."""
    m = np.asarray(rho.matrix if isinstance(rho, DensityMatrix) else rho)
    if angles is None:
        return tset.project(m)
    k = kets_from_angles(angles)
    return np.real(np.einsum("...vi,ij,...vj->...v", k.conj(), m, k))


def sample_counts(cfg: GeneratorConfig, tset: TomographySet, trials: int, rng: np.random.Generator) -> np.ndarray:
    """(trials, 16) count array drawn from ``rng``."""
    if cfg.noise_mode == "noiseless":
        return np.tile(cfg.total_flux * tset.project(cfg.rho_true.matrix), (trials, 1))
    if cfg.noise_mode == "poisson_plus_jitter":
        base = _nominal_angles(tset)
        angles = base + rng.normal(0.0, cfg.delta_theta, size=(trials, *base.shape))
        frac = expected_fractions(cfg.rho_true, tset, angles)
    else:
        frac = np.tile(tset.project(cfg.rho_true.matrix), (trials, 1))
    mean = cfg.total_flux * np.clip(frac, 0.0, None)
    return rng.poisson(mean).astype(float)


def generate_counts(cfg: GeneratorConfig, tset: TomographySet) -> CountRecord:
    rng = np.random.default_rng(int(cfg.seed))
    n = sample_counts(cfg, tset, 1, rng)[0]
    return CountRecord(n, settings=tuple(st.setting for st in tset.states), delta_theta=cfg.delta_theta)
