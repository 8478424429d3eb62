"""Trajectory Monte Carlo of the accumulated qubit phase.

The OU detuning and its integral over each free-evolution segment are drawn
jointly from their exact Gaussian transition law, so no time step is
involved. White noise adds an independent Gaussian phase and sinusoids are
integrated exactly with a random phase per trajectory when not locked.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import rng as _rng
from .noise import NoiseModel
from .sequences import SequenceSpec


@dataclass(frozen=True)
class MCEstimate:
    value: float
    stderr: float
    n_traj: int


def ou_segment_law(h: float, sigma: float, tau: float):
    """Moments of ``(x(h), int_0^h x)`` given ``x(0)`` for a stationary OU process.

    Returns ``(a, var_x, cov, var_int)`` with conditional means
    ``a x0`` and ``x0 tau (1 - a)``.
    """
    z = h / tau
    a = np.exp(-z)
    one_minus_a = -np.expm1(-z)
    var_x = sigma**2 * -np.expm1(-2 * z)
    cov = sigma**2 * tau * one_minus_a**2
    if z < 1e-3:
        poly = z**3 * (2 / 3 - z / 2 + 7 * z * z / 30)
    else:
        poly = 2 * z - 3 + 4 * a - a * a
    var_int = sigma**2 * tau**2 * poly
    return a, var_x, cov, var_int


def _segment_phases(seq: SequenceSpec, noise: NoiseModel, gen: np.random.Generator, m: int) -> np.ndarray:
    """``(m, n_segments)`` lab-frame phases accumulated in each free segment."""
    edges, _ = seq.segments()
    lengths = np.diff(edges)
    out = np.zeros((m, lengths.size))
    if noise.ou_sigma > 0:
        sigma, tau = noise.ou_sigma, noise.ou_tau
        x = sigma * gen.standard_normal(m)
        for k, h in enumerate(lengths):
            if h == 0:
                continue
            a, vx, c, vi = ou_segment_law(h, sigma, tau)
            g1 = gen.standard_normal(m)
            g2 = gen.standard_normal(m)
            sx = np.sqrt(vx)
            cond = max(vi - c * c / vx, 0.0) if vx > 0 else vi
            integral = x * tau * -np.expm1(-h / tau) + (c / sx) * g1 + np.sqrt(cond) * g2
            x = a * x + sx * g1
            out[:, k] += integral
    if noise.white_floor > 0:
        out += np.sqrt(noise.white_floor * lengths) * gen.standard_normal((m, lengths.size))
    mid = 0.5 * (edges[1:] + edges[:-1])
    for s in noise.sinusoids:
        if s.amplitude == 0:
            continue
        phase = gen.uniform(0, 2 * np.pi, m) if s.phase is None else np.full(m, s.phase)
        seg = lengths * np.sinc(s.omega * lengths / (2 * np.pi)) * np.exp(1j * s.omega * mid)
        out += s.amplitude * (np.exp(1j * phase)[:, None] * seg[None, :]).real
    if noise.static_offset:
        out += noise.static_offset * lengths
    return out


def _rotate(v: np.ndarray, axis: np.ndarray, angle) -> np.ndarray:
    """Rodrigues rotation of row vectors ``v`` about a unit ``axis``."""
    c = np.cos(angle)[..., None] if np.ndim(angle) else np.cos(angle)
    s = np.sin(angle)[..., None] if np.ndim(angle) else np.sin(angle)
    return v * c + np.cross(axis, v) * s + np.outer(v @ axis, axis) * (1 - c)


_AXES = {"X": np.array([1.0, 0.0, 0.0]), "Y": np.array([0.0, 1.0, 0.0])}
_Z = np.array([0.0, 0.0, 1.0])


def _bloch_signal(seq: SequenceSpec, phases: np.ndarray, area_error: float) -> np.ndarray:
    """Projection of the final Bloch vector on its ideal noise-free direction."""
    m = phases.shape[0]
    v = np.tile([1.0, 0.0, 0.0], (m, 1))
    ideal = np.array([1.0, 0.0, 0.0])
    angle = np.pi * (1 + area_error)
    for k, axis in enumerate(seq.pulse_axes):
        v = _rotate(v, _Z, phases[:, k])
        v = _rotate(v, _AXES[axis], angle)
        ideal = _rotate(ideal[None, :], _AXES[axis], np.pi)[0]
    v = _rotate(v, _Z, phases[:, -1])
    return v @ ideal


def _block(seq: SequenceSpec, noise: NoiseModel, area_error: float):
    _, signs = seq.segments()

    def run(gen: np.random.Generator, m: int) -> np.ndarray:
        phases = _segment_phases(seq, noise, gen, m)
        if area_error:
            return _bloch_signal(seq, phases, area_error)
        return np.cos(phases @ signs)

    return run


def coherence_mc(seq: SequenceSpec, noise: NoiseModel, n_traj: int, seed: int = 0, *,
                 threads: int = 1, pulse_area_error: float = 0.0,
                 block: int = _rng.DEFAULT_BLOCK, tag: str | None = None) -> MCEstimate:
    """Mean of ``cos(toggled phase)`` over noise realisations.

    With ``pulse_area_error`` every pi pulse rotates by ``pi (1 + error)`` and
    the Bloch vector is propagated explicitly.
    """
    if n_traj < 1:
        raise ValueError("n_traj must be >= 1")
    if seq.total_time == 0 or (noise.is_zero and not pulse_area_error):
        return MCEstimate(1.0, 0.0, int(n_traj))
    tag = tag or f"coherence/{seq.kind}/{seq.n_pi}/{seq.total_time!r}"
    parts = _rng.map_blocks(_block(seq, noise, pulse_area_error), _rng.block_sizes(n_traj, block),
                            seed, tag, threads)
    x = np.concatenate(parts)
    se = float(np.std(x, ddof=1) / np.sqrt(x.size)) if x.size > 1 else float("nan")
    return MCEstimate(float(np.mean(x)), se, int(x.size))


def coherence_mc_curve(kind: str, n_pi: int, times, noise: NoiseModel, n_traj: int, seed: int = 0,
                       **kw) -> tuple:
    """``(values, stderrs)`` with an independent stream family per time point."""
    est = [coherence_mc(SequenceSpec(kind, float(t), n_pi), noise, n_traj, seed, **kw) for t in times]
    return np.array([e.value for e in est]), np.array([e.stderr for e in est])
