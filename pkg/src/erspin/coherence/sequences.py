"""Pulse sequences and their toggling-frame filter functions.

Conventions: the qubit frequency noise ``d(t)`` (rad/s) has two-sided power
spectral density ``S(w) = int C(tau) exp(-i w tau) dtau``. A sequence with
toggling function ``y(t) = +-1`` accumulates ``phi = int y(t) d(t) dt`` and
the Gaussian dephasing exponent is

    chi = <phi**2> / 2 = 1/(2 pi) int_0^inf S(w) |Y(w)|**2 dw,

with ``Y(w) = int_0^T y(t) exp(i w t) dt``. White noise of level ``S0``
gives ``chi = S0 T / 2``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

RAMSEY, HAHN, XY = "ramsey", "hahn", "xy"


@dataclass(frozen=True)
class SequenceSpec:
    """A free-evolution sequence of total length ``total_time`` (s).

    The ``n_pi`` pulses sit at ``T (j - 1/2) / N`` (CPMG timing). XY-N
    alternates X and Y rotation axes.
    """

    kind: str
    total_time: float
    n_pi: int = 0

    def __post_init__(self):
        if self.kind not in (RAMSEY, HAHN, XY):
            raise ValueError(f"unknown sequence kind {self.kind!r}")
        if self.total_time < 0:
            raise ValueError("total_time must be >= 0")
        if self.kind == RAMSEY and self.n_pi != 0:
            raise ValueError("a Ramsey sequence has no pi pulses")
        if self.kind == HAHN and self.n_pi != 1:
            object.__setattr__(self, "n_pi", 1)
        if self.kind == XY and self.n_pi < 1:
            raise ValueError("XY-N needs at least one pi pulse")

    @classmethod
    def ramsey(cls, t: float) -> "SequenceSpec":
        return cls(RAMSEY, t, 0)

    @classmethod
    def hahn(cls, t: float) -> "SequenceSpec":
        return cls(HAHN, t, 1)

    @classmethod
    def xy(cls, n: int, t: float) -> "SequenceSpec":
        return cls(XY, t, n)

    def at(self, t: float) -> "SequenceSpec":
        return SequenceSpec(self.kind, t, self.n_pi)

    @property
    def pulse_times(self) -> np.ndarray:
        n = self.n_pi
        return self.total_time * (np.arange(1, n + 1) - 0.5) / n if n else np.zeros(0)

    @property
    def pulse_axes(self) -> tuple:
        return tuple("XY"[j % 2] for j in range(self.n_pi))

    def segments(self):
        """``(edges, signs)``: segment boundaries and toggling sign of each segment."""
        edges = np.concatenate([[0.0], self.pulse_times, [self.total_time]])
        signs = np.where(np.arange(self.n_pi + 1) % 2 == 0, 1.0, -1.0)
        return edges, signs


def toggling_transform(seq: SequenceSpec, omega) -> np.ndarray:
    """``Y(w)`` evaluated stably (no 1/w cancellation near zero)."""
    w = np.asarray(omega, dtype=float)
    edges, signs = seq.segments()
    length = np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    arg = np.multiply.outer(w, length) / 2
    terms = length * np.sinc(arg / np.pi) * np.exp(1j * np.multiply.outer(w, mid))
    return terms @ signs


def filter_weight(seq: SequenceSpec, omega) -> np.ndarray:
    """``|Y(w)|**2``; multiply by ``w**2`` for the conventional ``|F(w)|**2``."""
    y = toggling_transform(seq, omega)
    return (y * np.conj(y)).real


def filter_function(seq: SequenceSpec, omega) -> np.ndarray:
    """Conventional filter function ``|F(w)|**2 = w**2 |Y(w)|**2``."""
    w = np.asarray(omega, dtype=float)
    return w * w * filter_weight(seq, w)


def large_frequency_weight(seq: SequenceSpec) -> float:
    """Oscillation average of ``w**2 |Y(w)|**2`` for ``w -> inf``."""
    return 2.0 + 4.0 * seq.n_pi if seq.total_time > 0 else 0.0
