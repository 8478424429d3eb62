"""Curve fits for coherence and Rabi data.

Three models, each as a scikit-learn style regressor:

* :class:`StretchedExponential` -- ``A exp(-(t/T)**x) + c``
* :class:`DampedCosine`         -- ``(1 + cos(W t) exp(-(t/T)**x)) / 2``
* :class:`PowerLaw`             -- ``T = a N**b`` (log-log linear least squares)

The nonlinear models are solved with a damped Gauss-Newton
(Levenberg-Marquardt) iteration on central-difference Jacobians. Scale and
exponent parameters are optimised in log space so they stay positive.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, clone
from sklearn.utils.validation import check_is_fitted

from .validation import check_xy


class FitError(RuntimeError):
    """Raised for inputs a model cannot be fitted to."""


@dataclass
class FitResult:
    model: str
    parameters: dict
    standard_errors: dict | None
    residual_norm: float
    converged: bool
    iterations: int
    message: str = ""
    covariance: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "parameters": {k: float(v) for k, v in self.parameters.items()},
            "standard_errors": None if self.standard_errors is None
            else {k: float(v) for k, v in self.standard_errors.items()},
            "residual_norm": float(self.residual_norm),
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "message": self.message,
        }


# --- Levenberg-Marquardt ----------------------------------------------------

def numerical_jacobian(fun: Callable, p: np.ndarray, rel_step: float = 1e-6) -> np.ndarray:
    """Central differences with step ``rel_step * max(|p_i|, 1)``."""
    p = np.asarray(p, dtype=float)
    f0 = fun(p)
    jac = np.empty((f0.size, p.size))
    for i in range(p.size):
        h = rel_step * max(abs(p[i]), 1.0)
        up, dn = p.copy(), p.copy()
        up[i] += h
        dn[i] -= h
        jac[:, i] = (fun(up) - fun(dn)) / (2 * h)
    return jac


@dataclass
class LMOutcome:
    params: np.ndarray
    cost: float
    iterations: int
    converged: bool
    jacobian: np.ndarray
    history: list
    message: str = ""


def levenberg_marquardt(residual: Callable, p0, *, max_iter: int = 500, ftol: float = 1e-15,
                        xtol: float = 1e-13, lam0: float = 1e-3) -> LMOutcome:
    """Minimise ``sum(residual(p)**2)``. Steps that do not lower the cost are rejected."""
    p = np.asarray(p0, dtype=float).copy()
    r = residual(p)
    if not np.all(np.isfinite(r)):
        return LMOutcome(p, np.inf, 0, False, np.full((r.size, p.size), np.nan), [], "non-finite start")
    cost = float(r @ r)
    history = [cost]
    lam = lam0
    jac = numerical_jacobian(residual, p)
    converged, message = False, "max iterations reached"
    it = 0
    for it in range(1, max_iter + 1):
        g = jac.T @ r
        a = jac.T @ jac
        diag = np.diag(a).copy()
        diag[diag == 0] = 1.0
        accepted = False
        for _ in range(40):
            try:
                step = np.linalg.solve(a + lam * np.diag(diag), -g)
            except np.linalg.LinAlgError:
                lam *= 10
                continue
            trial = p + step
            rt = residual(trial)
            ct = float(rt @ rt) if np.all(np.isfinite(rt)) else np.inf
            if ct <= cost:
                accepted = True
                break
            lam *= 10
        if not accepted:
            converged, message = cost < np.inf, "no further decrease"
            break
        small_step = np.all(np.abs(step) <= xtol * np.maximum(np.abs(p), 1.0))
        small_drop = (cost - ct) <= ftol * max(cost, 1e-300)
        stalled = ct == cost
        p, r, cost = trial, rt, ct
        history.append(cost)
        lam = max(lam / 10, 1e-15)
        if cost == 0.0 or stalled or (small_step and small_drop):
            converged, message = True, "converged"
            break
        jac = numerical_jacobian(residual, p)
    jac = numerical_jacobian(residual, p)
    return LMOutcome(p, cost, it, converged, jac, history, message)


def _covariance(jac: np.ndarray, cost: float, dof: int, absolute_sigma: bool):
    a = jac.T @ jac
    if np.linalg.matrix_rank(a) < a.shape[0]:
        return None
    cov = np.linalg.inv(a)
    if not absolute_sigma:
        cov *= cost / max(dof, 1)
    return cov


# --- base estimator ---------------------------------------------------------

class _CurveModel(RegressorMixin, BaseEstimator):
    """Shared fit machinery: subclasses define the parameter layout and starts."""

    names: tuple = ()
    log_params: tuple = ()      # optimised as log(value)
    min_points = 4

    def _predict_params(self, t, params: dict):
        raise NotImplementedError

    def _starts(self, t, y):
        raise NotImplementedError

    def _fixed(self) -> dict:
        return dict(getattr(self, "fixed", None) or {})

    def _pack(self, params: dict, free: list) -> np.ndarray:
        return np.array([np.log(params[n]) if n in self.log_params else params[n] for n in free])

    def _unpack(self, vec, free: list, fixed: dict) -> dict:
        out = dict(fixed)
        for n, v in zip(free, vec):
            out[n] = float(np.exp(np.clip(v, -700, 700))) if n in self.log_params else float(v)
        return out

    def fit(self, X, y, sample_weight=None):
        t, y, w = check_xy(X, y, sample_weight, min_points=self.min_points)
        self._seen = (t, y, w, sample_weight is not None)
        return self._fit_arrays(t, y, w, sample_weight is not None)

    def partial_fit(self, X, y, sample_weight=None):
        """Add points to the data seen so far and refit, warm-started from the last optimum.

        Until ``min_points`` points have arrived the data are only stored.
        """
        t, y, w = check_xy(X, y, sample_weight)
        if getattr(self, "_seen", None) is not None:
            t0, y0, w0, weighted = self._seen
            t, y, w = np.concatenate([t0, t]), np.concatenate([y0, y]), np.concatenate([w0, w])
            weighted = weighted or sample_weight is not None
        else:
            weighted = sample_weight is not None
        self._seen = (t, y, w, weighted)
        if t.size < self.min_points:
            return self
        return self._fit_arrays(t, y, w, weighted, warm=getattr(self, "params_", None))

    def _fit_arrays(self, t, y, w, weighted: bool, warm: dict | None = None):
        self._validate_data(t, y)
        fixed = self._fixed()
        unknown = set(fixed) - set(self.names)
        if unknown:
            raise ValueError(f"unknown fixed parameters {sorted(unknown)}")
        free = [n for n in self.names if n not in fixed]
        sw = np.sqrt(w)

        def residual(vec):
            with np.errstate(all="ignore"):
                return sw * (self._predict_params(t, self._unpack(vec, free, fixed)) - y)

        starts = list(self._starts(t, y))
        if warm is not None and all(np.isfinite(v) for v in warm.values()):
            starts.insert(0, dict(warm))
        best = None
        for start in starts:
            start = {**start, **fixed}
            if any(start[n] <= 0 for n in self.log_params if n in free):
                continue
            out = levenberg_marquardt(residual, self._pack(start, free), max_iter=self.max_iter)
            # total order: lower cost wins, earlier start wins ties
            if best is None or out.cost < best.cost:
                best = out
        if best is None:
            raise FitError("no admissible starting point")
        params = self._unpack(best.params, free, fixed)
        dof = t.size - len(free)
        cov = _covariance(best.jacobian, best.cost, dof, weighted and self.absolute_sigma)
        converged = best.converged and cov is not None and np.all(np.isfinite(best.params))
        message = best.message if cov is not None else "degenerate: singular Jacobian"
        msg_extra = self._check_result(t, y, params)
        if msg_extra:
            converged, message = False, msg_extra
        errors = None
        if converged:
            errors = {n: 0.0 for n in fixed}
            for i, n in enumerate(free):
                se = float(np.sqrt(max(cov[i, i], 0.0)))
                errors[n] = params[n] * se if n in self.log_params else se
            errors = {n: errors[n] for n in self.names}
        self.params_ = {n: params[n] for n in self.names}
        self.stderr_ = errors
        self.result_ = FitResult(type(self).__name__, dict(self.params_), errors, float(np.sqrt(best.cost)),
                                 bool(converged), best.iterations, message,
                                 cov if converged else None)
        self.cost_history_ = best.history
        return self

    def _validate_data(self, t, y):
        if np.any(t < 0):
            raise FitError("time values must be >= 0")

    def _check_result(self, t, y, params) -> str:
        return ""

    def predict(self, X):
        check_is_fitted(self, "params_")
        t = np.asarray(X, dtype=float).ravel()
        return self._predict_params(t, self.params_)


class StretchedExponential(_CurveModel):
    """``amplitude * exp(-(t / decay_time)**stretch) + offset``.

    ``decay_time`` is the 1/e time of the decaying part. Multi-start over
    ``decay_time = span * 10**k`` for ``k`` in ``decades`` and every stretch in
    ``stretch_starts``; the lowest cost wins.
    """

    names = ("amplitude", "decay_time", "stretch", "offset")
    log_params = ("decay_time", "stretch")

    def __init__(self, fixed=None, decades=(-1.5, -1.0, -0.5, 0.0, 0.5, 1.0),
                 stretch_starts=(1.0, 2.0, 3.0), max_iter=300, absolute_sigma=False):
        self.fixed = fixed
        self.decades = decades
        self.stretch_starts = stretch_starts
        self.max_iter = max_iter
        self.absolute_sigma = absolute_sigma

    def _predict_params(self, t, p):
        return p["amplitude"] * np.exp(-(np.asarray(t) / p["decay_time"]) ** p["stretch"]) + p["offset"]

    def _starts(self, t, y):
        span = float(np.max(t)) if np.max(t) > 0 else 1.0
        i0, i1 = int(np.argmin(t)), int(np.argmax(t))
        amp = float(y[i0] - y[i1]) or 1.0
        for k in self.decades:
            for x in self.stretch_starts:
                yield {"amplitude": amp, "decay_time": span * 10.0**k, "stretch": float(x),
                       "offset": float(y[i1])}

    def _check_result(self, t, y, p):
        if np.ptp(y) == 0:
            return "degenerate: constant data"
        if p["decay_time"] > 1e3 * max(np.max(t), 1e-300) or abs(p["amplitude"]) < 1e-12:
            return "degenerate: decay time not identifiable"
        return ""


class DampedCosine(_CurveModel):
    """``(1 + cos(omega t) exp(-(t / decay_time)**stretch)) / 2``.

    The frequency is seeded from the largest peak of a zero-padded
    periodogram. A peak within 10% of the Nyquist frequency (fewer than about
    2.2 samples per period) is reported as a failed fit.
    """

    names = ("omega", "decay_time", "stretch")
    log_params = ("omega", "decay_time", "stretch")
    min_points = 8

    def __init__(self, fixed=None, decades=(-0.5, 0.0, 0.5, 1.0), stretch_starts=(1.0, 2.0),
                 max_iter=300, absolute_sigma=False):
        self.fixed = fixed
        self.decades = decades
        self.stretch_starts = stretch_starts
        self.max_iter = max_iter
        self.absolute_sigma = absolute_sigma

    def _predict_params(self, t, p):
        t = np.asarray(t)
        return 0.5 * (1 + np.cos(p["omega"] * t) * np.exp(-(t / p["decay_time"]) ** p["stretch"]))

    def _validate_data(self, t, y):
        super()._validate_data(t, y)
        self._peak = spectral_peak(t, y)

    def _starts(self, t, y):
        omega, ok = self._peak
        if not ok:
            return
        span = float(np.ptp(t))
        for k in self.decades:
            for x in self.stretch_starts:
                yield {"omega": omega, "decay_time": span * 10.0**k, "stretch": float(x)}

    def _fit_arrays(self, t, y, w, weighted, warm=None):
        try:
            return super()._fit_arrays(t, y, w, weighted, warm)
        except FitError as exc:
            if "starting point" not in str(exc):
                raise
            self.params_ = {n: float("nan") for n in self.names}
            self.stderr_ = None
            self.result_ = FitResult(type(self).__name__, dict(self.params_), None, float("nan"),
                                     False, 0, "no usable spectral peak (aliased or flat data)")
            return self


def spectral_peak(t, y, oversample: int = 16) -> tuple:
    """``(omega, ok)`` of the dominant oscillation in possibly uneven samples."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float) - np.mean(y)
    if np.ptp(y) == 0 or t.size < 4:
        return float("nan"), False
    dt = np.median(np.diff(np.sort(t)))
    nyquist = np.pi / dt
    span = np.ptp(t)
    omegas = np.linspace(0.5 * np.pi / span, nyquist, oversample * t.size)
    power = np.abs(np.exp(-1j * np.outer(omegas, t)) @ y) ** 2
    k = int(np.argmax(power))
    omega = float(omegas[k])
    ok = omega < 0.9 * nyquist and power[k] > 0
    return omega, bool(ok)


class PowerLaw(RegressorMixin, BaseEstimator):
    """``T = prefactor * N**exponent`` from a straight line in log-log space."""

    names = ("prefactor", "exponent")
    residual_space = "log"

    def fit(self, X, y, sample_weight=None):
        if np.size(X) < 3:
            raise FitError("power-law fit needs at least 3 points")
        self._normal = None
        return self.partial_fit(X, y, sample_weight)

    def partial_fit(self, X, y, sample_weight=None):
        """Accumulate the log-log normal equations; chunked and batch fits agree.

        Parameters are (re)estimated once at least 3 points have been seen.
        """
        n, t, w = check_xy(X, y, sample_weight)
        if np.any(n <= 0) or np.any(t <= 0):
            raise FitError("power-law fit needs strictly positive data")
        lx, ly = np.log(n), np.log(t)
        a = np.column_stack([np.ones_like(lx), lx])
        stats = [(a * w[:, None]).T @ a, (a * w[:, None]).T @ ly, float(ly @ (w * ly)), n.size]
        if getattr(self, "_normal", None) is not None:
            stats = [x + y0 for x, y0 in zip(stats, self._normal)]
        self._normal = stats
        ata, aty, yty, count = stats
        if count < 3:
            return self
        try:
            coef = np.linalg.solve(ata, aty)
        except np.linalg.LinAlgError:
            raise FitError("power-law fit needs at least 2 distinct pulse counts") from None
        cost = max(float(yty - 2 * coef @ aty + coef @ ata @ coef), 0.0)
        cov = np.linalg.inv(ata) * cost / max(count - 2, 1)
        log_a, b = coef
        self.params_ = {"prefactor": float(np.exp(log_a)), "exponent": float(b)}
        self.stderr_ = {"prefactor": float(np.exp(log_a) * np.sqrt(cov[0, 0])),
                        "exponent": float(np.sqrt(cov[1, 1]))}
        self.result_ = FitResult("PowerLaw", dict(self.params_), dict(self.stderr_), float(np.sqrt(cost)),
                                 True, 1, "linear least squares in log-log space", cov)
        return self

    def predict(self, X):
        check_is_fitted(self, "params_")
        n = np.asarray(X, dtype=float).ravel()
        return self.params_["prefactor"] * n ** self.params_["exponent"]


def bootstrap(estimator, X, y, n_resamples: int = 200, seed: int = 0) -> dict:
    """Residual-bootstrap standard deviation of each fitted parameter."""
    from .rng import stream

    base = clone(estimator).fit(X, y)
    x = np.asarray(X, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    yhat = base.predict(x)
    # resample in the space where the model is fitted
    log_space = getattr(estimator, "residual_space", "linear") == "log"
    resid = np.log(y / yhat) if log_space else y - yhat
    gen = stream(seed, f"bootstrap/{type(estimator).__name__}")
    draws = {n: [] for n in base.params_}
    for _ in range(n_resamples):
        e = gen.choice(resid, size=resid.size, replace=True)
        yb = yhat * np.exp(e) if log_space else yhat + e
        try:
            est = clone(estimator).fit(x, yb)
        except FitError:
            continue
        if getattr(est, "result_", None) is not None and not est.result_.converged:
            continue
        for k, v in est.params_.items():
            draws[k].append(v)
    return {k: float(np.std(v, ddof=1)) if len(v) > 1 else float("nan") for k, v in draws.items()}


def fit_stretched_exp(t, y, weights=None, **kw) -> FitResult:
    return StretchedExponential(**kw).fit(t, y, weights).result_


def fit_damped_cosine(t, y, weights=None, **kw) -> FitResult:
    return DampedCosine(**kw).fit(t, y, weights).result_


def fit_power_law(n, t, weights=None) -> FitResult:
    return PowerLaw().fit(n, t, weights).result_


MODELS = {"stretched_exp": StretchedExponential, "damped_cosine": DampedCosine, "power_law": PowerLaw}
