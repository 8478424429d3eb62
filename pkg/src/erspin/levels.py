"""Hyperfine level scheme of the optical ground and excited manifolds.

Energies are effective: ``E(m) = a*m + q*(m**2 - I(I+1)/3)`` per manifold,
in MHz. All frequencies are offsets relative to the spin-preserving
``-7/2 -> -7/2`` readout line; the optical carrier is a label only.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

NUCLEAR_SPIN = Fraction(7, 2)
TWICE_M_VALUES = (-7, -5, -3, -1, 1, 3, 5, 7)
_I_TERM = float(NUCLEAR_SPIN * (NUCLEAR_SPIN + 1) / 3)

# Defaults give a 900 MHz maximum ground-level gap (at the top of the
# manifold) and spin-preserving lines rising by 62-98 MHz per step.
DEFAULT_COEFFICIENTS = {"a_g": 870.0, "a_e": 950.0, "q_g": 5.0, "q_e": 2.0}


class LevelSchemeError(ValueError):
    """Raised for level coefficients that break the line ordering."""


@dataclass(frozen=True, order=True)
class SpinProjection:
    """Nuclear spin projection stored as ``2*m_I``."""

    twice_m_I: int

    def __post_init__(self):
        if self.twice_m_I % 2 == 0 or abs(self.twice_m_I) > 7:
            raise ValueError(f"2*m_I must be odd with |2*m_I| <= 7, got {self.twice_m_I}")

    @property
    def m(self) -> float:
        return self.twice_m_I / 2

    @property
    def index(self) -> int:
        """Position in the ladder, 0 for -7/2 up to 7 for +7/2."""
        return (self.twice_m_I + 7) // 2

    @classmethod
    def from_m(cls, m: float | str | Fraction) -> "SpinProjection":
        twice = Fraction(m) * 2
        if twice.denominator != 1:
            raise ValueError(f"m_I must be a half-integer, got {m}")
        return cls(int(twice))

    @classmethod
    def from_index(cls, index: int) -> "SpinProjection":
        return cls(2 * index - 7)

    def shifted(self, delta: int) -> "SpinProjection":
        return SpinProjection(self.twice_m_I + 2 * delta)

    def __str__(self):
        sign = "+" if self.twice_m_I > 0 else "-"
        return f"{sign}{abs(self.twice_m_I)}/2"


ALL_PROJECTIONS = tuple(SpinProjection(t) for t in TWICE_M_VALUES)
LOWEST = ALL_PROJECTIONS[0]
HIGHEST = ALL_PROJECTIONS[-1]


@dataclass(frozen=True)
class LevelScheme:
    ground_energy: dict
    excited_energy: dict
    coefficients: dict = field(default_factory=dict)
    carrier_frequency_label: str = "1536.4 nm"
    # electronic spin is frozen; kept as a label only
    electron_spin_label: str = "m_S = -1/2"

    def ground_gaps(self) -> np.ndarray:
        e = np.array([self.ground_energy[m] for m in ALL_PROJECTIONS])
        return np.diff(e)

    def excited_gaps(self) -> np.ndarray:
        e = np.array([self.excited_energy[m] for m in ALL_PROJECTIONS])
        return np.diff(e)

    def max_ground_gap(self) -> float:
        return float(np.max(np.abs(self.ground_gaps())))

    def line_frequency(self, ground: SpinProjection, excited: SpinProjection) -> float:
        """Optical frequency offset of ``ground -> excited``, MHz from the readout line."""
        ref = self.excited_energy[LOWEST] - self.ground_energy[LOWEST]
        return float(self.excited_energy[excited] - self.ground_energy[ground] - ref)

    def preserving_offsets(self) -> np.ndarray:
        return np.array([self.line_frequency(m, m) for m in ALL_PROJECTIONS])


def _manifold(a: float, q: float) -> dict:
    return {m: a * m.m + q * (m.m**2 - _I_TERM) for m in ALL_PROJECTIONS}


def build_level_scheme(
    a_g: float = DEFAULT_COEFFICIENTS["a_g"],
    a_e: float = DEFAULT_COEFFICIENTS["a_e"],
    q_g: float = DEFAULT_COEFFICIENTS["q_g"],
    q_e: float = DEFAULT_COEFFICIENTS["q_e"],
    *,
    allow_degenerate: bool = False,
) -> LevelScheme:
    """Build the effective level scheme from linear and quadratic coefficients (MHz).

    Coefficients that make the spin-preserving lines non-monotonic in m_I
    raise :class:`LevelSchemeError`. The fully degenerate case (all lines
    coincide) is only accepted with ``allow_degenerate=True``.
    """
    coeffs = {"a_g": a_g, "a_e": a_e, "q_g": q_g, "q_e": q_e}
    for name, value in coeffs.items():
        if not np.isfinite(value):
            raise LevelSchemeError(f"coefficient {name} is not finite: {value}")
    scheme = LevelScheme(_manifold(a_g, q_g), _manifold(a_e, q_e), coefficients=dict(coeffs))
    steps = np.diff(scheme.preserving_offsets())
    if allow_degenerate and np.all(steps == 0):
        return scheme
    if not np.all(steps > 0):
        raise LevelSchemeError(
            "spin-preserving line frequencies must increase strictly with m_I; "
            f"got steps {np.round(steps, 6).tolist()} MHz"
        )
    return scheme


@dataclass(frozen=True)
class Transition:
    ground_m: SpinProjection
    excited_m: SpinProjection
    frequency_offset: float

    @property
    def delta_m(self) -> int:
        return (self.excited_m.twice_m_I - self.ground_m.twice_m_I) // 2

    @property
    def label(self) -> str:
        return f"|{self.ground_m}>g -> |{self.excited_m}>e"


@dataclass(frozen=True)
class TransitionTable:
    transitions: tuple

    def __len__(self):
        return len(self.transitions)

    def __iter__(self):
        return iter(self.transitions)

    def by_delta(self, delta_m: int) -> list:
        return [t for t in self.transitions if t.delta_m == delta_m]

    def find(self, ground: SpinProjection, excited: SpinProjection) -> Transition:
        for t in self.transitions:
            if t.ground_m == ground and t.excited_m == excited:
                return t
        raise KeyError(f"no transition {ground} -> {excited}")

    def decays_from(self, excited: SpinProjection) -> list:
        return [t for t in self.transitions if t.excited_m == excited]


def list_transitions(scheme: LevelScheme) -> TransitionTable:
    """All dipole-allowed lines, |delta m_I| <= 1: 8 preserving + 7 + 7 spin-flip."""
    out = []
    for delta in (0, 1, -1):
        for g in ALL_PROJECTIONS:
            twice_e = g.twice_m_I + 2 * delta
            if abs(twice_e) > 7:
                continue
            e = SpinProjection(twice_e)
            out.append(Transition(g, e, scheme.line_frequency(g, e)))
    return TransitionTable(tuple(out))


def synth_spectrum(
    table: TransitionTable,
    weights: Sequence[float],
    background: float = 0.36,
    *,
    linewidth: float = 2.0,
    span: tuple | None = None,
    step: float = 1.0,
) -> list:
    """Synthetic pulsed-fluorescence scan of the eight spin-preserving lines.

    Each line is a Lorentzian of FWHM ``linewidth`` (MHz) with peak height
    ``weights[i]`` (ordered -7/2 ... +7/2) above the flat dark-count floor.
    Returns a list of ``(frequency_mhz, intensity, is_assigned_line)``.
    """
    w = np.asarray(weights, dtype=float)
    lines = table.by_delta(0)
    if w.shape != (len(lines),):
        raise ValueError(f"need {len(lines)} weights, got shape {w.shape}")
    if np.any(w < 0) or np.any(w > 1):
        raise ValueError("weights must lie in [0, 1]")
    centers = np.array([t.frequency_offset for t in sorted(lines, key=lambda t: t.ground_m)])
    if span is None:
        span = (centers.min() - 100.0, centers.max() + 100.0)
    n = int(round((span[1] - span[0]) / step)) + 1
    freq = span[0] + step * np.arange(n)
    half = linewidth / 2
    profile = 1.0 / (1.0 + ((freq[:, None] - centers[None, :]) / half) ** 2)
    intensity = background + profile @ w
    assigned = np.any(np.abs(freq[:, None] - centers[None, :]) <= half, axis=1)
    return [(float(f), float(i), bool(a)) for f, i, a in zip(freq, intensity, assigned)]
