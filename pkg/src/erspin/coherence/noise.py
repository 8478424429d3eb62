"""Classical qubit-frequency noise and the filter-function dephasing exponent."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy import special

from .sequences import HAHN, SequenceSpec, filter_weight, large_frequency_weight, toggling_transform


class IntegrationError(RuntimeError):
    """Filter-function quadrature did not reach the requested tolerance."""


@dataclass(frozen=True)
class Sinusoid:
    """Deterministic tone ``A cos(2 pi f t + phase)`` on the qubit frequency.

    ``phase=None`` means the tone is not locked to the sequence start and is
    averaged over a uniform phase.
    """

    amplitude: float
    frequency: float
    phase: float | None = None

    def __post_init__(self):
        if self.amplitude < 0:
            raise ValueError("sinusoid amplitude must be >= 0")
        if self.frequency < 0:
            raise ValueError("sinusoid frequency must be >= 0")

    @property
    def omega(self) -> float:
        return 2 * np.pi * self.frequency


@dataclass(frozen=True)
class NoiseModel:
    """OU process + sinusoids + white floor, all in rad/s of qubit detuning.

    ``ou_sigma`` is the stationary standard deviation and ``ou_tau`` the
    correlation time (s). ``white_floor`` is the two-sided PSD level (rad**2/s).
    ``static_offset`` is a fixed detuning (rad/s), refocused by any echo.
    """

    ou_sigma: float = 0.0
    ou_tau: float = 1.0
    sinusoids: tuple = field(default_factory=tuple)
    white_floor: float = 0.0
    static_offset: float = 0.0

    def __post_init__(self):
        if not self.ou_tau > 0:
            raise ValueError("ou_tau must be positive")
        if self.ou_sigma < 0 or self.white_floor < 0:
            raise ValueError("noise amplitudes must be >= 0")
        object.__setattr__(self, "sinusoids", tuple(self.sinusoids))

    def with_(self, **kw) -> "NoiseModel":
        return replace(self, **kw)

    def ou_psd(self, omega):
        w = np.asarray(omega, dtype=float)
        return 2 * self.ou_sigma**2 * self.ou_tau / (1 + (w * self.ou_tau) ** 2)

    def psd(self, omega):
        """Two-sided PSD of the stochastic part (sinusoids excluded)."""
        return self.ou_psd(omega) + self.white_floor

    @property
    def is_zero(self) -> bool:
        return (self.ou_sigma == 0 and self.white_floor == 0 and self.static_offset == 0
                and all(s.amplitude == 0 for s in self.sinusoids))


# --- quadrature ----------------------------------------------------------
#
# Y_T(w) = T Y_1(w T), so chi(T) = T/(2 pi) int S(u / T) |Y_1(u)|**2 du over the
# unit-length sequence. One grid in u serves every total time.

@lru_cache(maxsize=8)
def _gauss_legendre(order: int):
    return np.polynomial.legendre.leggauss(order)


@dataclass(frozen=True)
class _Grid:
    nodes: np.ndarray       # u = w T
    weights: np.ndarray     # quadrature weight * |Y_1(u)|**2
    cutoff: float           # in u
    tail_weight: float      # asymptotic w**2 |Y|**2 (independent of T)


def _panel_edges(n_pi: int, zeros: float) -> np.ndarray:
    """Log panels over nine decades below the first filter zero (u = pi),
    then uniform half-oscillation panels up to ``zeros`` zeros."""
    logs = np.geomspace(1e-9 * np.pi, np.pi, 109)
    lin = np.pi * (1 + np.arange(1, int(np.ceil(zeros)) + 1))
    return np.concatenate([[0.0], logs, lin])


@lru_cache(maxsize=256)
def _grid(kind: str, n_pi: int, order: int, zeros: int) -> _Grid:
    unit = SequenceSpec(kind, 1.0, n_pi)
    edges = _panel_edges(n_pi, zeros)
    x, wq = _gauss_legendre(order)
    a, b = edges[:-1, None], edges[1:, None]
    nodes = (0.5 * (b - a) * x + 0.5 * (a + b)).ravel()
    wts = (0.5 * (b - a) * wq).ravel()
    return _Grid(nodes, wts * filter_weight(unit, nodes), float(edges[-1]), large_frequency_weight(unit))


def _u_minus_arctan(u):
    u = np.asarray(u, dtype=float)
    u2 = u * u
    series = u * u2 * (1 / 3 - u2 / 5 + u2 * u2 / 7)
    return np.where(u < 1e-2, series, u - np.arctan(u))


def _ou_chi(grid: _Grid, noise: NoiseModel, times: np.ndarray) -> np.ndarray:
    t = times[:, None]
    core = t[:, 0] * (noise.ou_psd(grid.nodes[None, :] / t) @ grid.weights)
    # beyond the cutoff |Y|**2 is replaced by its oscillation average tail/w**2
    tau = noise.ou_tau
    wc = grid.cutoff / times
    tail = 2 * noise.ou_sigma**2 * tau**2 * grid.tail_weight * _u_minus_arctan(1 / (wc * tau))
    return (core + tail) / (2 * np.pi)


class FilterQuadrature:
    """Reusable quadrature for one sequence shape at many total times.

    The integral is evaluated with cutoffs at ``span`` and ``2 * span``
    filter zeros per pulse (and at least ``span`` times the OU corner for the
    longest time); the finer value is returned and a disagreement beyond
    ``rtol`` raises :class:`IntegrationError`. The OU corner must lie within
    nine decades below ``pi / T`` to be resolved.
    """

    def __init__(self, kind: str, n_pi: int = 0, *, order: int = 12, span: float = 8.0,
                 rtol: float = 1e-4, atol: float = 1e-12):
        SequenceSpec(kind, 1.0, n_pi)   # validates
        self.kind, self.n_pi = kind, (1 if kind == HAHN else n_pi)
        self.order, self.span = order, span
        self.rtol, self.atol = rtol, atol

    @classmethod
    def for_sequence(cls, seq: SequenceSpec, **kw) -> "FilterQuadrature":
        return cls(seq.kind, seq.n_pi, **kw)

    def _zeros(self, span: float, t_over_tau: float) -> int:
        return int(np.ceil(max(span * (self.n_pi + 2), span * t_over_tau / np.pi)))

    def chi(self, noise: NoiseModel, times) -> np.ndarray:
        """Dephasing exponent of the OU + white part at each total time."""
        times = np.atleast_1d(np.asarray(times, dtype=float))
        if np.any(times < 0):
            raise ValueError("times must be >= 0")
        out = 0.5 * noise.white_floor * times
        pos = times > 0
        if noise.ou_sigma == 0 or not np.any(pos):
            return out
        tp = times[pos]
        ratio = float(tp.max()) / noise.ou_tau
        coarse = _grid(self.kind, self.n_pi, self.order, self._zeros(self.span, ratio))
        fine = _grid(self.kind, self.n_pi, self.order, self._zeros(2 * self.span, ratio))
        c1 = _ou_chi(coarse, noise, tp)
        c2 = _ou_chi(fine, noise, tp)
        bad = np.abs(c1 - c2) > self.rtol * np.abs(c2) + self.atol
        if np.any(bad):
            k = int(np.argmax(bad))
            raise IntegrationError(
                f"filter quadrature not converged for {self.kind}-{self.n_pi} at T={tp[k]:.4g} s: "
                f"{c1[k]:.6e} vs {c2[k]:.6e}")
        out[pos] += c2
        return out


def sinusoid_factors(kind: str, n_pi: int, times, noise: NoiseModel) -> np.ndarray:
    """Signed coherence factor from the deterministic tones and the static offset."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    unit = SequenceSpec(kind, 1.0, n_pi)
    out = np.ones_like(times)
    for s in noise.sinusoids:
        if s.amplitude == 0:
            continue
        y = times * toggling_transform(unit, s.omega * times)
        if s.phase is None:
            out *= special.j0(s.amplitude * np.abs(y))
        else:
            # int y(t) A cos(w t + p) dt = A Re[exp(i p) Y(w)]
            out *= np.cos(s.amplitude * (np.exp(1j * s.phase) * y).real)
    if noise.static_offset:
        y0 = times * toggling_transform(unit, np.zeros_like(times)).real
        out *= np.cos(noise.static_offset * y0)
    return out


def sinusoid_factor(seq: SequenceSpec, noise: NoiseModel) -> float:
    return float(sinusoid_factors(seq.kind, seq.n_pi, [seq.total_time], noise)[0])


def filter_chi(seq: SequenceSpec, noise: NoiseModel, *, rtol: float = 1e-4) -> float:
    """Gaussian dephasing exponent of the stochastic noise for ``seq``."""
    return float(FilterQuadrature.for_sequence(seq, rtol=rtol).chi(noise, [seq.total_time])[0])


def coherence_curve(kind: str, n_pi: int, times, noise: NoiseModel, *, rtol: float = 1e-4) -> np.ndarray:
    """``exp(-chi) * |deterministic factor|`` at each time, clipped to [0, 1]."""
    chi = FilterQuadrature(kind, n_pi, rtol=rtol).chi(noise, times)
    c = np.exp(-chi) * np.abs(sinusoid_factors(kind, n_pi, times, noise))
    return np.clip(c, 0.0, 1.0)


def coherence(seq: SequenceSpec, noise: NoiseModel, *, rtol: float = 1e-4) -> float:
    return float(coherence_curve(seq.kind, seq.n_pi, [seq.total_time], noise, rtol=rtol)[0])


def ou_chi_exact(seq: SequenceSpec, noise: NoiseModel) -> float:
    """Closed-form time-domain ``chi`` for the OU + white part (independent check)."""
    edges, signs = seq.segments()
    if seq.total_time == 0:
        return 0.0
    theta = 1.0 / noise.ou_tau
    a, b = edges[:-1], edges[1:]

    # double integral of exp(-theta |t - s|) over [a_i, b_i] x [a_j, b_j]
    def g(x):
        z = theta * np.abs(x)
        series = z * z * (0.5 - z / 6 + z * z / 24 - z**3 / 120)
        return np.where(z < 1e-3, series, np.expm1(-z) + z) / theta**2

    ai, bi = a[:, None], b[:, None]
    aj, bj = a[None, :], b[None, :]
    k = g(bi - aj) + g(ai - bj) - g(bi - bj) - g(ai - aj)
    var = noise.ou_sigma**2 * float(signs @ k @ signs)
    return 0.5 * var + 0.5 * noise.white_floor * seq.total_time
