"""Optical pumping into a single nuclear level as a Markov chain.

Each pulse excites a fraction of one ground level; the excited level then
decays completely (per the cavity-modified branching) before the next
pulse acts.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .levels import ALL_PROJECTIONS, LOWEST, SpinProjection, Transition, TransitionTable

_NORM_TOL = 1e-12


@dataclass(frozen=True)
class PumpPulse:
    target: Transition
    excitation_prob: float
    duration_us: float = 20.0
    chirp_span_mhz: float = 10.0

    def __post_init__(self):
        if not 0.0 <= self.excitation_prob <= 1.0:
            raise ValueError("excitation_prob must lie in [0, 1]")
        if self.duration_us <= 0 or self.chirp_span_mhz <= 0:
            raise ValueError("pulse duration and chirp span must be positive")


@dataclass(frozen=True)
class PumpSequence:
    pulses: tuple
    repetitions: int = 500
    target: SpinProjection = LOWEST

    def __post_init__(self):
        if self.repetitions < 0:
            raise ValueError("repetitions must be >= 0")

    def with_excitation(self, p: float) -> "PumpSequence":
        pulses = tuple(PumpPulse(x.target, p, x.duration_us, x.chirp_span_mhz) for x in self.pulses)
        return PumpSequence(pulses, self.repetitions, self.target)

    def with_repetitions(self, reps: int) -> "PumpSequence":
        return PumpSequence(self.pulses, reps, self.target)


def uniform_population() -> np.ndarray:
    return np.full(8, 1.0 / 8)


def delta_population(m: SpinProjection) -> np.ndarray:
    p = np.zeros(8)
    p[m.index] = 1.0
    return p


def _check_population(pop: np.ndarray) -> np.ndarray:
    pop = np.asarray(pop, dtype=float)
    if pop.shape != (8,):
        raise ValueError(f"population must have 8 entries, got shape {pop.shape}")
    if np.any(pop < 0) or abs(pop.sum() - 1.0) > 1e-9:
        raise ValueError("population must be non-negative and sum to 1")
    return pop


def step(pop, pulse: PumpPulse, decay: np.ndarray) -> np.ndarray:
    """Apply one pulse. ``decay[e, g]`` are per-excited-level branching probabilities."""
    pop = np.array(pop, dtype=float)
    g = pulse.target.ground_m.index
    e = pulse.target.excited_m.index
    moved = pulse.excitation_prob * pop[g]
    pop[g] -= moved
    pop += moved * decay[e]
    return pop


def transfer_matrix(seq: PumpSequence, decay: np.ndarray) -> np.ndarray:
    """Column-stochastic map of one full pass through ``seq.pulses``."""
    m = np.eye(8)
    for pulse in seq.pulses:
        t = np.eye(8)
        g = pulse.target.ground_m.index
        e = pulse.target.excited_m.index
        t[g, g] -= pulse.excitation_prob
        t[:, g] += pulse.excitation_prob * decay[e]
        m = t @ m
    return m


@dataclass
class PumpResult:
    final: np.ndarray
    target: SpinProjection
    target_trajectory: np.ndarray = field(repr=False)

    @property
    def fidelity(self) -> float:
        return float(self.final[self.target.index])


def run(pop0, seq: PumpSequence, decay: np.ndarray) -> PumpResult:
    """Repeat the pulse train ``seq.repetitions`` times.

    ``target_trajectory[k]`` is the target population after ``k`` repetitions
    (index 0 is the initial state).
    """
    pop = _check_population(pop0).copy()
    traj = np.empty(seq.repetitions + 1)
    traj[0] = pop[seq.target.index]
    for k in range(seq.repetitions):
        for pulse in seq.pulses:
            pop = step(pop, pulse, decay)
        traj[k + 1] = pop[seq.target.index]
    if abs(pop.sum() - 1.0) > _NORM_TOL * max(1, seq.repetitions * len(seq.pulses)):
        raise FloatingPointError("population normalisation drifted")
    return PumpResult(pop, seq.target, traj)


def red_sideband_sequence(table: TransitionTable, excitation_prob: float, repetitions: int = 500) -> PumpSequence:
    """Sweep from ``+7/2 -> +5/2`` down to ``-5/2 -> -7/2``."""
    return init_other_state(LOWEST, table, excitation_prob, repetitions)


def init_other_state(
    target: SpinProjection,
    table: TransitionTable,
    excitation_prob: float = 1.0,
    repetitions: int = 500,
) -> PumpSequence:
    """Pulse train whose only absorbing state is ``target``.

    Levels above the target are driven on the red sideband (delta m = -1),
    top first; levels below it on the blue sideband, bottom first.
    """
    pulses = []
    for m in reversed(ALL_PROJECTIONS):
        if m > target:
            pulses.append(PumpPulse(table.find(m, m.shifted(-1)), excitation_prob))
    for m in ALL_PROJECTIONS:
        if m < target:
            pulses.append(PumpPulse(table.find(m, m.shifted(+1)), excitation_prob))
    return PumpSequence(tuple(pulses), repetitions, target)


def stationary_states(seq: PumpSequence, decay: np.ndarray, tol: float = 1e-9) -> list:
    """Levels that no pulse of ``seq`` ever leaves (absorbing states)."""
    t = transfer_matrix(seq, decay)
    return [m for m in ALL_PROJECTIONS if abs(t[m.index, m.index] - 1.0) < tol]


def stationary_distribution(seq: PumpSequence, decay: np.ndarray) -> np.ndarray:
    """Eigenvector of the one-pass transfer matrix for eigenvalue 1."""
    t = transfer_matrix(seq, decay)
    w, v = np.linalg.eig(t)
    k = int(np.argmin(np.abs(w - 1.0)))
    vec = np.real(v[:, k])
    return vec / vec.sum()


def repetitions_to_reach(pop0, seq: PumpSequence, decay: np.ndarray, level: float, max_reps: int = 100000) -> int | None:
    """Smallest repetition count with target population >= ``level``; None if never."""
    t = transfer_matrix(seq, decay)
    pop = _check_population(pop0).copy()
    idx = seq.target.index
    for k in range(max_reps + 1):
        if pop[idx] >= level:
            return k
        pop = t @ pop
    return None
