from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import InvalidDimension, ZeroFlux
from .projection import WaveplateSetting, default_settings

DEFAULT_DELTA_THETA = math.radians(0.25)


@dataclass(frozen=True)
class CountRecord:
    """Sixteen coincidence counts with the waveplate settings that produced them.

    Counts are nonnegative reals so that noiseless synthetic and averaged
    data are accepted as-is. ``delta_theta`` is the RMS setting error in
    radians.
    """

    n: np.ndarray
    settings: tuple[WaveplateSetting, ...] = field(default_factory=lambda: tuple(default_settings()))
    delta_theta: float = DEFAULT_DELTA_THETA

    def __post_init__(self):
        n = np.array(self.n, dtype=float).reshape(-1)
        if n.shape != (16,):
            raise InvalidDimension(f"expected 16 counts, got {n.size}")
        if not np.all(np.isfinite(n)) or np.any(n < 0):
            raise ValueError("counts must be finite and nonnegative")
        if len(self.settings) != 16:
            raise InvalidDimension(f"expected 16 waveplate settings, got {len(self.settings)}")
        if not (math.isfinite(self.delta_theta) and self.delta_theta >= 0):
            raise ValueError("delta_theta must be finite and nonnegative")
        n.setflags(write=False)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "settings", tuple(self.settings))

    @property
    def normalization(self) -> float:
        """Flux constant: total counts over the first four (basis) settings."""
        return float(self.n[:4].sum())

    def s(self) -> np.ndarray:
        norm = self.normalization
        if norm <= 0:
            raise ZeroFlux("sum of the first four counts is zero")
        return self.n / norm

    def __eq__(self, other):
        if not isinstance(other, CountRecord):
            return NotImplemented
        return (
            np.array_equal(self.n, other.n)
            and self.settings == other.settings
            and self.delta_theta == other.delta_theta
        )

    __hash__ = None
