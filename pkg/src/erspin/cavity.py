"""Lorentzian Purcell filter of the Fabry-Perot resonator.

Frequencies in MHz, lifetimes in ms. The resonance sits ``detuning`` MHz
away from the readout line (positive = above it).
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .levels import ALL_PROJECTIONS, SpinProjection, TransitionTable

BULK_LIFETIME_MS = 11.4
ENHANCED_LIFETIME_MS = 0.12


@dataclass(frozen=True)
class CavityParams:
    linewidth_kappa: float = 65.0
    peak_purcell: float = 95.0
    cavity_detuning: float = 0.0
    detection_efficiency: float = 0.11
    outcoupling_efficiency: float = 0.76
    min_reflection: float = 0.2
    quality_factor: float = 3e6

    def __post_init__(self):
        if not self.linewidth_kappa > 0:
            raise ValueError("linewidth_kappa must be positive")
        if self.peak_purcell < 0:
            raise ValueError("peak_purcell must be non-negative")
        for name in ("detection_efficiency", "outcoupling_efficiency", "min_reflection"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")

    def with_(self, **kw) -> "CavityParams":
        return replace(self, **kw)


@dataclass(frozen=True)
class BranchingModel:
    """Bulk (cavity-free) decay fractions of each excited level.

    ``flip_up`` is the fraction of decays that end one m_I quantum higher
    in the ground state, ``flip_down`` one quantum lower. Edge levels lose
    the impossible channel and the remaining fractions are renormalised.
    """

    preserving: float = 0.979136
    flip_up: float = 0.010432
    flip_down: float = 0.010432
    bulk_lifetime: float = BULK_LIFETIME_MS

    def __post_init__(self):
        fr = (self.preserving, self.flip_up, self.flip_down)
        if min(fr) < 0:
            raise ValueError("branching fractions must be non-negative")
        if not np.isclose(sum(fr), 1.0, atol=1e-9):
            raise ValueError(f"branching fractions must sum to 1, got {sum(fr)}")
        if not self.bulk_lifetime > 0:
            raise ValueError("bulk_lifetime must be positive")

    @classmethod
    def symmetric(cls, preserving: float, bulk_lifetime: float = BULK_LIFETIME_MS):
        flip = (1.0 - preserving) / 2
        return cls(preserving, flip, flip, bulk_lifetime)

    def fractions(self, excited: SpinProjection) -> dict:
        """Available channels keyed by final ground-state shift (0, +1, -1)."""
        out = {0: self.preserving}
        if excited != ALL_PROJECTIONS[-1]:
            out[+1] = self.flip_up
        if excited != ALL_PROJECTIONS[0]:
            out[-1] = self.flip_down
        total = sum(out.values())
        return {k: v / total for k, v in out.items()}


def purcell_factor(detuning, params: CavityParams):
    """P(d) = P_max / (1 + (2 d / kappa)**2); vectorised over ``detuning``."""
    x = 2.0 * np.asarray(detuning, dtype=float) / params.linewidth_kappa
    out = params.peak_purcell / (1.0 + x * x)
    return float(out) if np.ndim(out) == 0 else out


def relative_purcell(detuning, params: CavityParams):
    x = 2.0 * np.asarray(detuning, dtype=float) / params.linewidth_kappa
    out = 1.0 / (1.0 + x * x)
    return float(out) if np.ndim(out) == 0 else out


def reflection(detuning, params: CavityParams, min_reflection: float | None = None):
    """Fraction of drive light reflected off the cavity, with a Lorentzian dip."""
    r0 = params.min_reflection if min_reflection is None else min_reflection
    if not 0.0 <= r0 <= 1.0:
        raise ValueError("min_reflection must lie in [0, 1]")
    out = r0 + (1.0 - r0) * (1.0 - relative_purcell(detuning, params))
    return float(out) if np.ndim(out) == 0 else out


def lifetime_limit(spin_t1: float) -> float:
    """Coherence limit ``2 * T1`` set by the population lifetime."""
    if not spin_t1 > 0:
        raise ValueError("T1 must be positive")
    return 2.0 * spin_t1


@dataclass(frozen=True)
class DecayRates:
    excited_m: SpinProjection
    rates: dict          # ground shift -> rate (1/ms)
    lifetime: float      # ms

    @property
    def total_rate(self) -> float:
        return sum(self.rates.values())

    @property
    def probabilities(self) -> dict:
        tot = self.total_rate
        return {k: v / tot for k, v in self.rates.items()}

    @property
    def cyclicity(self) -> float:
        return self.rates[0] / self.total_rate

    @property
    def flip_probability(self) -> float:
        return 1.0 - self.cyclicity


def enhanced_rates(
    excited_m: SpinProjection,
    table: TransitionTable,
    params: CavityParams,
    branching: BranchingModel,
) -> DecayRates:
    """Per-channel decay rates of one excited level inside the cavity.

    Every channel is enhanced by its own Lorentzian Purcell factor:
    ``rate = fraction / tau_bulk * (1 + P(line - cavity))``.
    """
    rates = {}
    for shift, frac in branching.fractions(excited_m).items():
        ground = excited_m.shifted(shift)
        line = table.find(ground, excited_m).frequency_offset
        p = purcell_factor(line - params.cavity_detuning, params)
        rates[shift] = frac / branching.bulk_lifetime * (1.0 + p)
    return DecayRates(excited_m, rates, 1.0 / sum(rates.values()))


def decay_matrix(table: TransitionTable, params: CavityParams, branching: BranchingModel) -> np.ndarray:
    """``D[e, g]``: probability that excited level ``e`` decays to ground level ``g``."""
    d = np.zeros((8, 8))
    for e in ALL_PROJECTIONS:
        for shift, p in enhanced_rates(e, table, params, branching).probabilities.items():
            d[e.index, e.shifted(shift).index] = p
    return d
