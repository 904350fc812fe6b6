"""Jones-calculus model of the two-beam measurement head.

Each beam passes a quarter-wave plate (fast axis ``q``), a half-wave plate
(fast axis ``h``), both measured from the vertical, then a polariser that
transmits |V>. The analysed single-beam state is ``U_QWP(q) U_HWP(h) |V>``.
Two-photon kets live in the basis {|HH>, |HV>, |VH>, |VV>}.

Angles are radians here; degrees only appear at file/CLI boundaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

SQRT_HALF = 1.0 / math.sqrt(2.0)
TWO_PI = 2.0 * math.pi

KET_H = np.array([1.0, 0.0], dtype=complex)
KET_V = np.array([0.0, 1.0], dtype=complex)
KET_D = SQRT_HALF * np.array([1.0, 1.0], dtype=complex)
# anti-diagonal ket used by the four-operator Stokes design
KET_DBAR = SQRT_HALF * np.array([1.0, -1.0], dtype=complex)
KET_R = SQRT_HALF * np.array([1.0, -1.0j], dtype=complex)
KET_L = SQRT_HALF * np.array([1.0, 1.0j], dtype=complex)

NAMED_KETS = {"H": KET_H, "V": KET_V, "D": KET_D, "A": KET_DBAR, "R": KET_R, "L": KET_L}

# (label, h1, q1, h2, q2) in degrees
DEFAULT_DESIGN_DEG = (
    ("HH", 45.0, 0.0, 45.0, 0.0),
    ("HV", 45.0, 0.0, 0.0, 0.0),
    ("VV", 0.0, 0.0, 0.0, 0.0),
    ("VH", 0.0, 0.0, 45.0, 0.0),
    ("RH", 22.5, 0.0, 45.0, 0.0),
    ("RV", 22.5, 0.0, 0.0, 0.0),
    ("DV", 22.5, 45.0, 0.0, 0.0),
    ("DH", 22.5, 45.0, 45.0, 0.0),
    ("DR", 22.5, 45.0, 22.5, 0.0),
    ("DD", 22.5, 45.0, 22.5, 45.0),
    ("RD", 22.5, 0.0, 22.5, 45.0),
    ("HD", 45.0, 0.0, 22.5, 45.0),
    ("VD", 0.0, 0.0, 22.5, 45.0),
    ("VL", 0.0, 0.0, 22.5, 90.0),
    ("HL", 45.0, 0.0, 22.5, 90.0),
    ("RL", 22.5, 0.0, 22.5, 90.0),
)


def _wrap(angle: float) -> float:
    if not math.isfinite(angle):
        raise ValueError(f"waveplate angle must be finite, got {angle}")
    return math.fmod(math.fmod(angle, TWO_PI) + TWO_PI, TWO_PI)


@dataclass(frozen=True)
class WaveplateSetting:
    """Fast-axis angles (radians) for both beams, wrapped to [0, 2*pi)."""

    h1: float
    q1: float
    h2: float
    q2: float

    def __post_init__(self):
        for name in ("h1", "q1", "h2", "q2"):
            object.__setattr__(self, name, _wrap(float(getattr(self, name))))

    @classmethod
    def from_degrees(cls, h1, q1, h2, q2) -> "WaveplateSetting":
        return cls(*(math.radians(float(x)) for x in (h1, q1, h2, q2)))

    def degrees(self) -> tuple[float, float, float, float]:
        return tuple(math.degrees(x) for x in self.as_tuple())

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.h1, self.q1, self.h2, self.q2)


def qwp_matrix(q: float) -> np.ndarray:
    c, s = math.cos(2 * q), math.sin(2 * q)
    return SQRT_HALF * np.array([[1j - c, s], [s, 1j + c]], dtype=complex)


def hwp_matrix(h: float) -> np.ndarray:
    c, s = math.cos(2 * h), math.sin(2 * h)
    return np.array([[c, -s], [-s, -c]], dtype=complex)


def single_beam_state(h: float, q: float) -> tuple[complex, complex]:
    """Amplitudes (a, b) on |H>, |V> of the state analysed by one beam.

    Equal to ``U_QWP(q) @ U_HWP(h) @ |V>`` times the global phase ``i``.
    """
    a = SQRT_HALF * complex(math.sin(2 * h), math.sin(2 * (h - q)))
    b = SQRT_HALF * complex(math.cos(2 * h), -math.cos(2 * (h - q)))
    return a, b


def single_beam_derivatives(h: float, q: float) -> tuple[np.ndarray, np.ndarray]:
    """(d/dh, d/dq) of the (a, b) amplitude pair."""
    c, s = math.cos(2 * (h - q)), math.sin(2 * (h - q))
    d_h = np.sqrt(2.0) * np.array([complex(math.cos(2 * h), c), complex(-math.sin(2 * h), s)])
    d_q = np.sqrt(2.0) * np.array([complex(0.0, -c), complex(0.0, -s)])
    return d_h, d_q


def _beam(h: float, q: float) -> np.ndarray:
    return np.array(single_beam_state(h, q), dtype=complex)


def label_for_ket(ket: np.ndarray, tol: float = 1e-9) -> str:
    """Name of a single-beam ket among H, V, D, A, R, L (up to phase), else '?'."""
    for name, ref in NAMED_KETS.items():
        if abs(abs(np.vdot(ref, ket)) - 1.0) < tol:
            return name
    return "?"


@dataclass(frozen=True)
class ProjectionState:
    ket: np.ndarray = field(repr=False)
    setting: WaveplateSetting
    label: str = ""


def two_photon_state(s: WaveplateSetting, label: str | None = None) -> ProjectionState:
    one = _beam(s.h1, s.q1)
    two = _beam(s.h2, s.q2)
    if label is None:
        label = label_for_ket(one) + label_for_ket(two)
    return ProjectionState(ket=np.kron(one, two), setting=s, label=label)


def default_settings() -> list[WaveplateSetting]:
    return [WaveplateSetting.from_degrees(*row[1:]) for row in DEFAULT_DESIGN_DEG]


def default_states() -> list[ProjectionState]:
    return [
        two_photon_state(setting, label=row[0])
        for row, setting in zip(DEFAULT_DESIGN_DEG, default_settings())
    ]


def state_angle_derivatives(s: WaveplateSetting) -> np.ndarray:
    """Analytic d|psi>/d(h1, q1, h2, q2); shape (4, 4), one row per angle."""
    one, two = _beam(s.h1, s.q1), _beam(s.h2, s.q2)
    d1h, d1q = single_beam_derivatives(s.h1, s.q1)
    d2h, d2q = single_beam_derivatives(s.h2, s.q2)
    return np.array([np.kron(d1h, two), np.kron(d1q, two), np.kron(one, d2h), np.kron(one, d2q)])
