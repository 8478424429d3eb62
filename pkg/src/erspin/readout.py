"""Single-shot readout by photon counting.

A bright shot (qubit in the readout level) is excited by each pulse with
probability ``excitation_prob``; every excitation is detected with
probability ``detection_prob`` and, with probability ``flip_prob``, flips
the nuclear spin out of the cycling transition for the rest of the shot.
Detector dark counts add Poisson noise during every detection window. A
dark shot only sees dark counts plus an optional per-pulse leakage click.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np
from scipy import stats
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from . import rng as _rng
from .validation import check_counts, check_probability

# observed figures of merit the calibration targets
BRIGHT_MEAN = 10.69
BRIGHT_MEAN_ERR = 0.05
DARK_MEAN = 2.356
DARK_MEAN_ERR = 0.024
DARK_RATE_HZ = 43.9
N_PULSES = 110
THRESHOLD = 5

BRIGHT, DARK = "bright", "dark"


@dataclass(frozen=True)
class ReadoutConfig:
    n_pulses: int = N_PULSES
    pulse_duration_us: float = 8.0
    chirp_span_mhz: float = 2.0
    detection_window_us: float = DARK_MEAN / (N_PULSES * DARK_RATE_HZ) * 1e6
    dark_rate_hz: float = DARK_RATE_HZ
    excitation_prob: float = 0.818169
    detection_prob: float = 0.11
    flip_prob: float = 0.0039746
    leakage_prob: float = 0.0
    threshold: int = THRESHOLD

    def __post_init__(self):
        if int(self.n_pulses) != self.n_pulses or self.n_pulses < 1:
            raise ValueError("n_pulses must be a positive integer")
        for name in ("excitation_prob", "detection_prob", "flip_prob", "leakage_prob"):
            check_probability(getattr(self, name), name)
        if self.dark_rate_hz < 0:
            raise ValueError("dark_rate_hz must be >= 0")
        if self.threshold < 0:
            raise ValueError("threshold must be >= 0")

    @property
    def signal_prob(self) -> float:
        return self.excitation_prob * self.detection_prob

    @property
    def dark_mean(self) -> float:
        """Expected dark counts over all windows of one shot."""
        return self.n_pulses * self.dark_rate_hz * self.detection_window_us * 1e-6

    def with_(self, **kw) -> "ReadoutConfig":
        return replace(self, **kw)


def _check_window(cfg: ReadoutConfig):
    if not cfg.detection_window_us > 0:
        raise ValueError("detection_window_us must be positive")


def _support(cfg: ReadoutConfig, n_pulses: int | None = None) -> int:
    n = cfg.n_pulses if n_pulses is None else n_pulses
    lam = n * cfg.dark_rate_hz * cfg.detection_window_us * 1e-6
    return int(n + lam + 12 * np.sqrt(lam + 1) + 20)


def _signal_step(alive, lost, cfg: ReadoutConfig):
    """One pulse of the (alive, count) chain for the bright state."""
    p, eta, eps = cfg.excitation_prob, cfg.detection_prob, cfg.flip_prob
    shifted = np.empty_like(alive)
    shifted[0] = 0.0
    shifted[1:] = alive[:-1]
    after = (1 - eta) * alive + eta * shifted
    return (1 - p) * alive + p * (1 - eps) * after, lost + p * eps * after


def _leak_dist(n: int, q: float, size: int) -> np.ndarray:
    out = np.zeros(size)
    k = np.arange(min(n, size - 1) + 1)
    out[: k.size] = stats.binom.pmf(k, n, q)
    return out


def _with_dark(signal: np.ndarray, lam: float) -> np.ndarray:
    size = signal.size
    pois = stats.poisson.pmf(np.arange(size), lam)
    return np.convolve(signal, pois)[:size]


def signal_distributions(cfg: ReadoutConfig, pulse_counts: Iterable[int], size: int) -> dict:
    """Bright-state signal photon distributions (no dark counts) for several pulse counts."""
    wanted = sorted(set(int(n) for n in pulse_counts))
    alive = np.zeros(size)
    alive[0] = 1.0
    lost = np.zeros(size)
    out = {}
    if 0 in wanted:
        out[0] = alive.copy()
    for k in range(1, wanted[-1] + 1):
        alive, lost = _signal_step(alive, lost, cfg)
        if k in wanted:
            out[k] = alive + lost
    return out


def analytic_distributions(cfg: ReadoutConfig, size: int | None = None):
    """Exact photon-number distributions ``(bright, dark)`` of one shot.

    The bright signal is propagated as a two-component Markov chain
    (still cycling / flipped), which is exact for permanent flips; its mean is
    ``sum_k p_sig (1 - eps p_exc)**k``. Both states are convolved with the
    Poisson dark counts; the dark state also carries the leakage clicks.
    """
    _check_window(cfg)
    size = _support(cfg) if size is None else size
    sig = signal_distributions(cfg, [cfg.n_pulses], size)[cfg.n_pulses]
    bright = _with_dark(sig, cfg.dark_mean)
    dark = _with_dark(_leak_dist(cfg.n_pulses, cfg.leakage_prob, size), cfg.dark_mean)
    return bright, dark


def no_excitation_distribution(cfg: ReadoutConfig, size: int | None = None) -> np.ndarray:
    _check_window(cfg)
    size = _support(cfg) if size is None else size
    return stats.poisson.pmf(np.arange(size), cfg.dark_mean)


def mean_of(dist) -> float:
    dist = np.asarray(dist)
    return float(np.arange(dist.size) @ dist)


def bright_mean(cfg: ReadoutConfig) -> float:
    """Closed-form mean of the bright distribution."""
    s = 1.0 - cfg.flip_prob * cfg.excitation_prob
    k = np.arange(cfg.n_pulses)
    return float(cfg.signal_prob * np.sum(s**k) + cfg.dark_mean)


def dark_state_mean(cfg: ReadoutConfig) -> float:
    return cfg.dark_mean + cfg.n_pulses * cfg.leakage_prob


# --- Monte Carlo ---------------------------------------------------------

def _shot_block(state: str, cfg: ReadoutConfig):
    def run(gen: np.random.Generator, n: int) -> np.ndarray:
        counts = gen.poisson(cfg.dark_mean, size=n)
        if state == BRIGHT:
            alive = np.ones(n, dtype=bool)
            for _ in range(cfg.n_pulses):
                u = gen.random((3, n))
                excited = alive & (u[0] < cfg.excitation_prob)
                counts += excited & (u[1] < cfg.detection_prob)
                alive &= ~(excited & (u[2] < cfg.flip_prob))
        elif cfg.leakage_prob > 0:
            counts += gen.binomial(cfg.n_pulses, cfg.leakage_prob, size=n)
        return counts
    return run


def simulate_shots(
    state: str,
    cfg: ReadoutConfig,
    n_shots: int,
    seed: int = 0,
    *,
    tag: str = "readout",
    threads: int = 1,
    block: int = _rng.DEFAULT_BLOCK,
) -> np.ndarray:
    """Photon counts of ``n_shots`` independent shots; deterministic in ``seed``."""
    if state not in (BRIGHT, DARK):
        raise ValueError(f"state must be {BRIGHT!r} or {DARK!r}")
    _check_window(cfg)
    sizes = _rng.block_sizes(n_shots, block)
    parts = _rng.map_blocks(_shot_block(state, cfg), sizes, seed, f"{tag}/{state}", threads)
    return np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)


def simulate_shot(state: str, cfg: ReadoutConfig, gen: np.random.Generator) -> int:
    return int(_shot_block(state, cfg)(gen, 1)[0])


# --- histograms and fidelity -----------------------------------------------

@dataclass
class Histogram:
    counts: dict = field(default_factory=dict)

    @property
    def n_shots(self) -> int:
        return int(sum(self.counts.values()))

    @classmethod
    def from_samples(cls, samples) -> "Histogram":
        values, occ = np.unique(check_counts(samples), return_counts=True)
        return cls({int(v): int(c) for v, c in zip(values, occ)})

    def merge(self, other: "Histogram") -> "Histogram":
        out = dict(self.counts)
        for k, v in other.counts.items():
            out[k] = out.get(k, 0) + v
        return Histogram(out)

    def probabilities(self, size: int | None = None) -> np.ndarray:
        top = max(self.counts, default=0) + 1
        size = top if size is None else max(size, top)
        p = np.zeros(size)
        for k, v in self.counts.items():
            p[k] = v
        return p / max(self.n_shots, 1)

    def mean(self) -> float:
        return float(sum(k * v for k, v in self.counts.items()) / self.n_shots)


def _as_dist(x) -> np.ndarray:
    if isinstance(x, Histogram):
        return x.probabilities()
    return np.asarray(x, dtype=float) / np.sum(x)


def fidelity(bright, dark, threshold: int) -> tuple:
    """``(min, mean)`` of the correct-assignment probabilities.

    A shot is called bright when at least ``threshold`` photons are counted.
    No correction for preparation errors is applied.
    """
    if threshold < 0:
        raise ValueError("threshold must be >= 0")
    b, d = _as_dist(bright), _as_dist(dark)
    f_bright = float(np.sum(b[threshold:]))
    f_dark = float(np.sum(d[:threshold]))
    return min(f_bright, f_dark), 0.5 * (f_bright + f_dark)


def assignment_probabilities(bright, dark, threshold: int) -> tuple:
    b, d = _as_dist(bright), _as_dist(dark)
    return float(np.sum(b[threshold:])), float(np.sum(d[:threshold]))


@dataclass
class FidelityMap:
    pulses: np.ndarray
    thresholds: np.ndarray
    min_fidelity: np.ndarray     # shape (len(pulses), len(thresholds))
    avg_fidelity: np.ndarray
    best_pulses: int
    best_threshold: int

    @property
    def best(self) -> float:
        i = int(np.searchsorted(self.pulses, self.best_pulses))
        j = int(np.searchsorted(self.thresholds, self.best_threshold))
        return float(self.min_fidelity[i, j])

    def at(self, n_pulses: int, threshold: int) -> tuple:
        i = int(np.flatnonzero(self.pulses == n_pulses)[0])
        j = int(np.flatnonzero(self.thresholds == threshold)[0])
        return float(self.min_fidelity[i, j]), float(self.avg_fidelity[i, j])

    def rows(self):
        for i, n in enumerate(self.pulses):
            for j, t in enumerate(self.thresholds):
                yield int(n), int(t), float(self.min_fidelity[i, j]), float(self.avg_fidelity[i, j])


def optimize(cfg: ReadoutConfig, pulses: Sequence[int], thresholds: Sequence[int]) -> FidelityMap:
    """Analytic min/avg fidelity over a (pulse count, threshold) grid.

    The argmax maximises the minimum fidelity; ties go to fewer pulses, then
    to the lower threshold.
    """
    pulses = np.array(sorted(set(int(p) for p in pulses)))
    thresholds = np.array(sorted(set(int(t) for t in thresholds)))
    if pulses.size == 0 or thresholds.size == 0:
        raise ValueError("pulse and threshold ranges must be non-empty")
    _check_window(cfg)
    size = _support(cfg, int(pulses[-1]))
    sig = signal_distributions(cfg, pulses, size)
    per_pulse_dark = cfg.dark_rate_hz * cfg.detection_window_us * 1e-6
    fmin = np.empty((pulses.size, thresholds.size))
    favg = np.empty_like(fmin)
    for i, n in enumerate(pulses):
        lam = n * per_pulse_dark
        bright = _with_dark(sig[n], lam)
        dark = _with_dark(_leak_dist(int(n), cfg.leakage_prob, size), lam)
        cb = np.concatenate([[0.0], np.cumsum(bright)])
        cd = np.concatenate([[0.0], np.cumsum(dark)])
        fb = 1.0 - cb[thresholds]
        fd = cd[thresholds]
        fmin[i] = np.minimum(fb, fd)
        favg[i] = 0.5 * (fb + fd)
    # ties: first occurrence in row-major order = fewest pulses, then lowest threshold
    flat = int(np.argmax(fmin))
    i, j = divmod(flat, thresholds.size)
    return FidelityMap(pulses, thresholds, fmin, favg, int(pulses[i]), int(thresholds[j]))


class ThresholdDiscriminator(ClassifierMixin, BaseEstimator):
    """Photon-count threshold classifier (1 = bright, 0 = dark).

    With ``threshold=None`` the threshold is learned in :meth:`fit` by
    maximising the minimum per-class assignment probability over labelled
    shots; an explicit integer is used as given.
    """

    def __init__(self, threshold=None, max_threshold=None):
        self.threshold = threshold
        self.max_threshold = max_threshold

    def fit(self, X, y):
        self.bright_hist_ = self.dark_hist_ = None
        return self.partial_fit(X, y)

    def partial_fit(self, X, y, classes=None):
        """Merge a batch of labelled shots into the class histograms and re-derive the threshold."""
        counts = check_counts(X)
        y = np.asarray(y).astype(int).ravel()
        if y.shape != counts.shape:
            raise ValueError("X and y must have the same number of shots")
        if np.any((y != 0) & (y != 1)):
            raise ValueError("labels must be 0 (dark) or 1 (bright)")
        self.classes_ = np.array([0, 1])
        bright = Histogram.from_samples(counts[y == 1])
        dark = Histogram.from_samples(counts[y == 0])
        if getattr(self, "bright_hist_", None) is not None:
            bright, dark = self.bright_hist_.merge(bright), self.dark_hist_.merge(dark)
        self.bright_hist_, self.dark_hist_ = bright, dark
        if bright.n_shots == 0 or dark.n_shots == 0:
            raise ValueError("need labelled shots from both states")
        largest = max(max(bright.counts), max(dark.counts)) + 1
        top = largest if self.max_threshold is None else int(self.max_threshold)
        size = max(top, largest) + 1
        pb, pd = bright.probabilities(size), dark.probabilities(size)
        if self.threshold is None:
            scores = [fidelity(pb, pd, t) for t in range(top + 1)]
            self.threshold_ = int(max(range(top + 1), key=lambda t: (scores[t][0], -t)))
        else:
            self.threshold_ = int(self.threshold)
        self.min_fidelity_, self.avg_fidelity_ = fidelity(pb, pd, self.threshold_)
        return self

    def predict(self, X):
        check_is_fitted(self, "threshold_")
        return (check_counts(X) >= self.threshold_).astype(int)

    def fidelity(self, X, y) -> tuple:
        """``(min, mean)`` assignment fidelity on labelled shots."""
        check_is_fitted(self, "threshold_")
        counts = check_counts(X)
        y = np.asarray(y).astype(int).ravel()
        pred = self.predict(counts)
        f_bright = float(np.mean(pred[y == 1] == 1))
        f_dark = float(np.mean(pred[y == 0] == 0))
        return min(f_bright, f_dark), 0.5 * (f_bright + f_dark)
