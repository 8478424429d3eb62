"""All-optical Raman control of the nuclear-spin qubit."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .. import rng as _rng

TWO_PI = 2 * np.pi


@dataclass(frozen=True)
class RamanConfig:
    """Two control fields detuned by ``one_photon_detuning`` from the optical line.

    Rabi frequencies in rad/s, optical detunings in MHz, the two-photon
    detuning in kHz. ``pulse_area_noise_sigma`` is the relative shot-to-shot
    spread of the pulse area.
    """

    rabi_1: float = TWO_PI * 1e6
    rabi_2: float = TWO_PI * 1e6
    one_photon_detuning: float = -90.0
    two_photon_detuning: float = 0.0
    cavity_detuning_control: float = -400.0
    pulse_area_noise_sigma: float = 0.05
    drive_power_mw: float = 10.0

    def __post_init__(self):
        if self.one_photon_detuning == 0:
            raise ValueError("one_photon_detuning must be nonzero")
        if self.pulse_area_noise_sigma < 0:
            raise ValueError("pulse_area_noise_sigma must be >= 0")
        if self.rabi_1 < 0 or self.rabi_2 < 0:
            raise ValueError("Rabi frequencies must be >= 0")

    @property
    def delta(self) -> float:
        """One-photon detuning in rad/s."""
        return TWO_PI * self.one_photon_detuning * 1e6

    def with_(self, **kw) -> "RamanConfig":
        return replace(self, **kw)


def effective_rabi(cfg: RamanConfig) -> float:
    return cfg.rabi_1 * cfg.rabi_2 / (2 * abs(cfg.delta))


def ac_stark_shift(cfg: RamanConfig) -> float:
    """Differential light shift of the two qubit levels (rad/s)."""
    return (cfg.rabi_1**2 - cfg.rabi_2**2) / (4 * cfg.delta)


def pi_time(cfg: RamanConfig) -> float:
    w = effective_rabi(cfg)
    return np.pi / w if w > 0 else float("inf")


def scattering_probability(cfg: RamanConfig, pulse_duration: float, excited_linewidth: float) -> float:
    """Probability of an optical scattering event during a pulse.

    ``excited_linewidth`` is the population decay rate over 2 pi (Hz).
    """
    if pulse_duration < 0:
        raise ValueError("pulse_duration must be >= 0")
    population = (cfg.rabi_1**2 + cfg.rabi_2**2) / (4 * cfg.delta**2)
    return float(min(population * TWO_PI * excited_linewidth * pulse_duration, 1.0))


def flip_population(cfg: RamanConfig, durations, area_factor=1.0) -> np.ndarray:
    """Population left in the initial level for given pulse durations (no noise)."""
    t = np.asarray(durations, dtype=float)
    w = effective_rabi(cfg) * np.asarray(area_factor, dtype=float)
    d = TWO_PI * cfg.two_photon_detuning * 1e3 + ac_stark_shift(cfg)
    gen = np.sqrt(w * w + d * d)
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = np.where(gen > 0, (w / np.where(gen > 0, gen, 1.0)) ** 2, 0.0)
    return 1 - frac * np.sin(gen * t / 2) ** 2


@dataclass(frozen=True)
class RabiData:
    durations: np.ndarray
    population: np.ndarray
    stderr: np.ndarray


def simulate_rabi(cfg: RamanConfig, durations, seed: int = 0, n_traj: int = 4000, *,
                  threads: int = 1, block: int = _rng.DEFAULT_BLOCK) -> RabiData:
    """Rabi fringe averaged over Gaussian pulse-area noise, one area per shot."""
    t = np.asarray(durations, dtype=float)
    if np.any(t < 0):
        raise ValueError("durations must be >= 0")
    if n_traj < 1:
        raise ValueError("n_traj must be >= 1")

    def run(gen: np.random.Generator, m: int) -> np.ndarray:
        factor = 1 + cfg.pulse_area_noise_sigma * gen.standard_normal(m)
        return flip_population(cfg, t[None, :], factor[:, None])

    parts = _rng.map_blocks(run, _rng.block_sizes(n_traj, block), seed, "raman/rabi", threads)
    x = np.concatenate(parts, axis=0)
    se = np.std(x, axis=0, ddof=1) / np.sqrt(x.shape[0]) if x.shape[0] > 1 else np.full(t.size, np.nan)
    return RabiData(t, x.mean(axis=0), se)


def rabi_envelope(cfg: RamanConfig, durations) -> np.ndarray:
    """Large-ensemble envelope of the fringe: ``exp(-(sigma W t)**2 / 2)``."""
    t = np.asarray(durations, dtype=float)
    return np.exp(-0.5 * (cfg.pulse_area_noise_sigma * effective_rabi(cfg) * t) ** 2)
