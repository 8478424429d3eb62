"""Coherence-time extraction and the dynamical-decoupling scan."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..fitting import FitError, FitResult, PowerLaw, StretchedExponential
from .noise import NoiseModel, coherence_curve
from .sequences import HAHN, RAMSEY, XY


@dataclass(frozen=True)
class TimeGrid:
    """Fixed grid ``linspace(0, t_max(N), points)`` with ``t_max = base * N**power``."""

    base: float
    power: float = 0.0
    points: int = 61

    def times(self, n_pi: int = 1) -> np.ndarray:
        t_max = self.base * max(n_pi, 1) ** self.power
        return np.linspace(0.0, t_max, self.points)


RAMSEY_GRID = TimeGrid(2e-3, 0.0, 41)
HAHN_GRID = TimeGrid(60e-3, 0.0, 121)
DD_GRID = TimeGrid(50e-3, 0.75, 61)


DIP_LEVEL = 0.5


def fit_window(values, dip_level: float = DIP_LEVEL) -> int:
    """Number of leading samples up to and including the first local minimum
    below ``dip_level``. Shallower wiggles stay inside the window."""
    v = np.asarray(values, dtype=float)
    for i in range(1, v.size - 1):
        if v[i] < v[i - 1] and v[i] <= v[i + 1] and v[i] < dip_level:
            return i + 1
    return v.size


@dataclass
class DecayFit:
    time: float
    stderr: float | None
    stretch: float
    converged: bool
    window: int
    result: FitResult | None = None
    message: str = ""

    def to_dict(self) -> dict:
        return {"time": self.time, "stderr": self.stderr, "stretch": self.stretch,
                "converged": self.converged, "window_points": self.window, "message": self.message}


def measure_decay(times, values, *, fixed=None) -> DecayFit:
    """Stretched-exponential 1/e time over the window before the first dip.

    The offset is fixed to 0 by default because ideal coherence decays to 0.
    The window ends at the first dip below :data:`DIP_LEVEL`.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    k = fit_window(values)
    fixed = {"offset": 0.0} if fixed is None else fixed
    try:
        est = StretchedExponential(fixed=fixed).fit(times[:k], values[:k])
    except (FitError, ValueError) as exc:
        return DecayFit(float("nan"), None, float("nan"), False, k, None, str(exc))
    r = est.result_
    se = r.standard_errors["decay_time"] if r.standard_errors else None
    return DecayFit(r.parameters["decay_time"], se, r.parameters["stretch"], r.converged, k, r, r.message)


def find_revival(times, values) -> float:
    """Time of the first local maximum after the first local minimum (nan if none).

    The sample maximum is refined by a parabola through its neighbours.
    """
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    k = fit_window(v)
    if k >= v.size:
        return float("nan")
    for i in range(k, v.size - 1):
        if v[i] > v[i - 1] and v[i] >= v[i + 1]:
            y0, y1, y2 = v[i - 1], v[i], v[i + 1]
            den = y0 - 2 * y1 + y2
            shift = 0.5 * (y0 - y2) / den if den != 0 else 0.0
            return float(t[i] + shift * (t[i + 1] - t[i]))
    return float("nan")


def curve(kind: str, n_pi: int, times, noise: NoiseModel) -> np.ndarray:
    return coherence_curve(kind, n_pi, times, noise)


def ramsey_time(noise: NoiseModel, grid: TimeGrid = RAMSEY_GRID) -> DecayFit:
    t = grid.times()
    return measure_decay(t, curve(RAMSEY, 0, t, noise))


def hahn_time(noise: NoiseModel, grid: TimeGrid = HAHN_GRID) -> DecayFit:
    t = grid.times()
    return measure_decay(t, curve(HAHN, 1, t, noise))


def hahn_revival(noise: NoiseModel, grid: TimeGrid = HAHN_GRID) -> float:
    t = grid.times()
    return find_revival(t, curve(HAHN, 1, t, noise))


@dataclass
class DDScan:
    pulse_counts: list
    fits: list
    power_law: FitResult | None
    message: str = ""
    curves: dict = field(default_factory=dict, repr=False)

    @property
    def times(self) -> np.ndarray:
        return np.array([f.time for f in self.fits])

    @property
    def exponent(self) -> float:
        return self.power_law.parameters["exponent"] if self.power_law else float("nan")

    def time_at(self, n: int) -> float:
        return self.fits[self.pulse_counts.index(n)].time

    def to_dict(self) -> dict:
        return {
            "rows": [{"n_pi": n, **f.to_dict()} for n, f in zip(self.pulse_counts, self.fits)],
            "power_law": None if self.power_law is None else self.power_law.to_dict(),
            "message": self.message,
        }


def dd_scan(noise: NoiseModel, pulse_counts=(1, 2, 4, 8, 16, 32, 64), grid: TimeGrid = DD_GRID,
            *, curve_fn=None) -> DDScan:
    """T_DD(N) from stretched-exponential fits, then ``T_DD = a N**b`` over N.

    ``N = 1`` is the Hahn echo. A failed per-N fit is kept in the table and
    left out of the power law. Fewer than 3 usable points refuse the power law.
    """
    counts = [int(n) for n in pulse_counts]
    if not counts:
        raise ValueError("pulse_counts must not be empty")
    if any(n < 1 for n in counts):
        raise ValueError("pulse counts must be >= 1")
    curve_fn = curve_fn or curve
    fits, curves = [], {}
    for n in counts:
        t = grid.times(n)
        kind = HAHN if n == 1 else XY
        v = curve_fn(kind, n, t, noise)
        curves[n] = (t, v)
        fits.append(measure_decay(t, v))
    ok = [(n, f.time) for n, f in zip(counts, fits)
          if f.converged and np.isfinite(f.time) and f.time > 0]
    if len(ok) < 3:
        return DDScan(counts, fits, None, f"power law needs >= 3 converged points, got {len(ok)}", curves)
    n_ok, t_ok = map(np.array, zip(*ok))
    law = PowerLaw().fit(n_ok, t_ok).result_
    return DDScan(counts, fits, law, "", curves)
