"""Command-line entry point: ``erspin <subcommand> [flags]``.

Every run writes ``<subcommand>.csv`` and/or ``<subcommand>.json`` plus
``<subcommand>.manifest.json`` into ``--out``. Exit codes: 0 success,
2 configuration error, 3 numerical failure, 4 infeasible calibration.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, calibration, cavity, config, fitting, pumping, readout
from .coherence import dd, montecarlo, raman
from .coherence.noise import IntegrationError, coherence_curve
from .coherence.sequences import HAHN, RAMSEY, XY
from .levels import LevelSchemeError, build_level_scheme, list_transitions

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_INFEASIBLE = 0, 2, 3, 4


class NumericalFailure(RuntimeError):
    pass


# --- output ------------------------------------------------------------------

def _num(x):
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return None if not math.isfinite(x) else x
    if isinstance(x, dict):
        return {str(k): _num(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, np.ndarray)):
        return [_num(v) for v in x]
    return x


def write_json(path: Path, obj) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_num(obj), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow(["" if v is None else (repr(float(v)) if isinstance(v, (float, np.floating)) else v)
                        for v in row])


def _versions() -> dict:
    import scipy
    import sklearn

    return {"erspin": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "scikit-learn": sklearn.__version__}


# --- subcommands -------------------------------------------------------------

def cmd_spectrum(cfg, args, out: Path) -> dict:
    scheme = build_level_scheme(**cfg.level_kwargs())
    table = list_transitions(scheme)
    rows = synth = None
    from .levels import synth_spectrum

    synth = synth_spectrum(table, [1.0] * 8)
    write_csv(out / "spectrum.csv", ["frequency_mhz", "intensity", "assigned"],
              [(f, i, int(a)) for f, i, a in synth])
    rows = [(str(t.ground_m), str(t.excited_m), t.delta_m, t.frequency_offset) for t in table]
    write_csv(out / "transitions.csv", ["ground_m", "excited_m", "delta_m", "offset_mhz"], rows)
    if args.svg:
        from . import plots

        f, i, _ = zip(*synth)
        plots.line_plot(out / "spectrum.svg", [("", f, i)], xlabel="detuning (MHz)", ylabel="counts (a.u.)")
    return {"n_transitions": len(table), "max_ground_gap_mhz": scheme.max_ground_gap(),
            "preserving_offsets_mhz": scheme.preserving_offsets().tolist(),
            "ground_gaps_mhz": scheme.ground_gaps().tolist()}


def cmd_purcell(cfg, args, out: Path) -> dict:
    p = cfg.cavity_params()
    d = np.arange(args.span_min, args.span_max + 0.5 * args.step, args.step)
    d = np.round(d, 9)
    pf = cavity.purcell_factor(d, p)
    write_csv(out / "purcell.csv", ["detuning_mhz", "purcell", "relative", "reflection"],
              zip(d, pf, cavity.relative_purcell(d, p), cavity.reflection(d, p)))
    table = list_transitions(build_level_scheme(**cfg.level_kwargs()))
    from .levels import LOWEST

    rates = cavity.enhanced_rates(LOWEST, table, p, cfg.branching())
    if args.svg:
        from . import plots

        plots.line_plot(out / "purcell.svg", [("", d, pf)], xlabel="detuning (MHz)", ylabel="Purcell factor")
    return {"peak_purcell": cavity.purcell_factor(0.0, p), "fwhm_mhz": p.linewidth_kappa,
            "enhanced_lifetime_ms": rates.lifetime, "bulk_lifetime_ms": cfg.get("cavity", "bulk_lifetime_ms"),
            "relative_purcell_900mhz": cavity.relative_purcell(900.0, p),
            "cyclicity_readout_level": rates.cyclicity}


def cmd_pump(cfg, args, out: Path) -> dict:
    table = list_transitions(build_level_scheme(**cfg.level_kwargs()))
    decay = cavity.decay_matrix(table, cfg.cavity_params(), cfg.branching())
    pc = cfg.section("pump")
    seq = pumping.init_other_state(cfg.pump_target(), table, pc["excitation_prob"], pc["repetitions"])
    res = pumping.run(pumping.uniform_population(), seq, decay)
    write_csv(out / "pump.csv", ["repetition", "target_population"], enumerate(res.target_trajectory))
    if args.svg:
        from . import plots

        plots.line_plot(out / "pump.svg", [("", np.arange(res.target_trajectory.size), res.target_trajectory)],
                        xlabel="repetitions", ylabel="target population")
    return {"target": str(seq.target), "fidelity": res.fidelity, "repetitions": seq.repetitions,
            "final_population": {str(m): float(v) for m, v in zip(_projections(), res.final)}}


def _projections():
    from .levels import ALL_PROJECTIONS

    return ALL_PROJECTIONS


def cmd_readout(cfg, args, out: Path) -> dict:
    rc = cfg.readout_config()
    b, d = readout.analytic_distributions(rc)
    summary = {"threshold": rc.threshold, "n_pulses": rc.n_pulses, "bright_mean": readout.mean_of(b),
               "dark_mean": readout.mean_of(d)}
    fmin, favg = readout.fidelity(b, d, rc.threshold)
    summary.update(min_fidelity=fmin, avg_fidelity=favg, method="analytic")
    if not args.analytic:
        shots = args.shots or cfg.get("readout", "shots")
        seed = cfg.get("run", "seed") if args.seed is None else args.seed
        xb = readout.simulate_shots(readout.BRIGHT, rc, shots, seed, threads=args.threads)
        xd = readout.simulate_shots(readout.DARK, rc, shots, seed, threads=args.threads)
        size = max(b.size, int(xb.max()) + 1, int(xd.max()) + 1)
        hb = readout.Histogram.from_samples(xb).probabilities(size)
        hd = readout.Histogram.from_samples(xd).probabilities(size)
        mfmin, mfavg = readout.fidelity(hb, hd, rc.threshold)
        summary.update(method="monte_carlo", shots=shots, mc_min_fidelity=mfmin, mc_avg_fidelity=mfavg,
                       mc_bright_mean=float(xb.mean()), mc_dark_mean=float(xd.mean()))
        b = np.pad(b, (0, size - b.size))
        d = np.pad(d, (0, size - d.size))
        rows = zip(range(size), b, d, hb, hd)
        header = ["photons", "bright_analytic", "dark_analytic", "bright_mc", "dark_mc"]
    else:
        rows = zip(range(b.size), b, d)
        header = ["photons", "bright_analytic", "dark_analytic"]
    write_csv(out / "readout.csv", header, rows)
    if args.svg:
        from . import plots

        k = np.arange(min(b.size, 30))
        plots.histogram_plot(out / "readout.svg", k, b[:k.size], d[:k.size], rc.threshold)
    return summary


def cmd_readout_map(cfg, args, out: Path) -> dict:
    rc = cfg.readout_config()
    p_lo, p_hi = cfg.get("readout", "pulse_range")
    t_lo, t_hi = cfg.get("readout", "threshold_range")
    fm = readout.optimize(rc, range(p_lo, p_hi + 1), range(t_lo, t_hi + 1))
    write_csv(out / "readout-map.csv", ["n_pulses", "threshold", "min_fidelity", "avg_fidelity"], fm.rows())
    if args.svg:
        from . import plots

        series = [(f"n = {t}", fm.pulses, fm.min_fidelity[:, j]) for j, t in enumerate(fm.thresholds)
                  if abs(t - fm.best_threshold) <= 1]
        plots.line_plot(out / "readout-map.svg", series, xlabel="pulses", ylabel="min fidelity")
    return {"best_pulses": fm.best_pulses, "best_threshold": fm.best_threshold, "best_min_fidelity": fm.best,
            "dark_rate_hz": rc.dark_rate_hz}


def _linspace(t_max: float, points: int) -> np.ndarray:
    return np.linspace(0.0, t_max, points)


def cmd_rabi(cfg, args, out: Path) -> dict:
    rcfg = cfg.raman_config()
    r = cfg.section("raman")
    t = _linspace(r["max_duration_us"] * 1e-6, r["points"])
    seed = cfg.get("run", "seed") if args.seed is None else args.seed
    data = raman.simulate_rabi(rcfg, t, seed, r["trajectories"], threads=args.threads)
    write_csv(out / "rabi.csv", ["duration_s", "population", "uncertainty"],
              zip(t, data.population, data.stderr))
    fit = fitting.DampedCosine(decades=cfg.get("fit", "decades"), stretch_starts=cfg.get("fit", "stretch_starts"))
    res = fit.fit(t, data.population).result_
    if args.svg:
        from . import plots

        plots.line_plot(out / "rabi.svg", [("simulation", t, data.population, data.stderr),
                                           ("fit", t, fit.predict(t))],
                        xlabel="pulse duration (s)", ylabel="population")
    tp = raman.pi_time(rcfg)
    return {"effective_rabi_rad_s": raman.effective_rabi(rcfg), "pi_time_s": tp,
            "ac_stark_shift_rad_s": raman.ac_stark_shift(rcfg),
            "scattering_probability_pi": raman.scattering_probability(rcfg, tp, _control_linewidth(cfg)),
            "fit": res.to_dict()}


def _control_linewidth(cfg) -> float:
    """Excited-state decay rate / 2 pi (Hz) while the cavity is parked for control."""
    p = cfg.cavity_params()
    bulk_s = cfg.get("cavity", "bulk_lifetime_ms") * 1e-3
    purcell = cavity.purcell_factor(cfg.get("raman", "cavity_detuning_control_mhz"), p)
    return (1 + purcell) / (2 * np.pi * bulk_s)


def _coherence_run(cfg, args, out: Path, name: str, kind: str, grid: dd.TimeGrid) -> dict:
    noise = cfg.noise_model()
    t = grid.times()
    n_pi = 1 if kind == HAHN else 0
    if args.mc:
        seed = cfg.get("run", "seed") if args.seed is None else args.seed
        v, se = montecarlo.coherence_mc_curve(kind, n_pi, t, noise, cfg.get("noise", "trajectories"), seed,
                                              threads=args.threads,
                                              pulse_area_error=cfg.get("noise", "pulse_area_error"))
    else:
        v, se = coherence_curve(kind, n_pi, t, noise), np.zeros_like(t)
    write_csv(out / f"{name}.csv", ["time_s", "coherence", "uncertainty"], zip(t, v, se))
    fit = dd.measure_decay(t, v)
    summary = {"method": "monte_carlo" if args.mc else "filter_function", "fit": fit.to_dict()}
    if kind == HAHN:
        summary["revival_s"] = dd.find_revival(t, v)
    if not fit.converged:
        raise NumericalFailure(f"{name} decay fit did not converge: {fit.message}")
    if args.svg:
        from . import plots

        plots.line_plot(out / f"{name}.svg", [("", t, v)], xlabel="time (s)", ylabel="coherence")
    return summary


def cmd_ramsey(cfg, args, out):
    return _coherence_run(cfg, args, out, "ramsey", RAMSEY, dd.RAMSEY_GRID)


def cmd_echo(cfg, args, out):
    return _coherence_run(cfg, args, out, "echo", HAHN, dd.HAHN_GRID)


def cmd_dd(cfg, args, out: Path) -> dict:
    noise = cfg.noise_model()
    counts = cfg.get("noise", "pulse_counts")
    curve_fn = None
    if args.mc:
        seed = cfg.get("run", "seed") if args.seed is None else args.seed

        def curve_fn(kind, n, t, nz):
            return montecarlo.coherence_mc_curve(kind, n, t, nz, cfg.get("noise", "trajectories"), seed,
                                                 threads=args.threads,
                                                 pulse_area_error=cfg.get("noise", "pulse_area_error"))[0]
    scan = dd.dd_scan(noise, counts, curve_fn=curve_fn)
    rows = [(n, f.time, f.stderr) for n, f in zip(scan.pulse_counts, scan.fits)]
    write_csv(out / "dd.csv", ["n_pi", "t_dd_s", "uncertainty"], rows)
    if args.svg:
        from . import plots

        n = np.array(scan.pulse_counts, dtype=float)
        series = [("T_DD", n, scan.times)]
        if scan.power_law:
            series.append((f"N^{scan.exponent:.2f}", n, fitting.PowerLaw().fit(n, scan.times).predict(n)))
        plots.line_plot(out / "dd.svg", series, xlabel="pulses N", ylabel="T_DD (s)", logx=True, logy=True,
                        markers=True)
    summary = scan.to_dict()
    summary["exponent"] = scan.exponent
    if scan.power_law is None and len(counts) >= 3:
        raise NumericalFailure(scan.message)
    return summary


def cmd_fit(cfg, args, out: Path) -> dict:
    if not args.input:
        raise config.ConfigError("fit needs --input CSV")
    try:
        data = np.genfromtxt(args.input, delimiter=",", names=True, dtype=float)
    except OSError as exc:
        raise config.ConfigError(f"cannot read fit input: {exc}") from None
    cols = data.dtype.names
    if cols is None or len(cols) < 2:
        raise config.ConfigError("fit input needs columns x, y[, sigma]")
    if not all(np.all(np.isfinite(data[c])) for c in cols):
        raise config.ConfigError(f"{args.input}: non-numeric or missing values")
    x, y = data[cols[0]], data[cols[1]]
    w = 1.0 / data[cols[2]] ** 2 if len(cols) > 2 else None
    kw = {}
    if args.model != "power_law":
        kw = {"decades": cfg.get("fit", "decades"), "stretch_starts": cfg.get("fit", "stretch_starts")}
    est = fitting.MODELS[args.model](**kw)
    res = est.fit(x, y, w).result_
    summary = res.to_dict()
    if args.bootstrap:
        seed = cfg.get("run", "seed") if args.seed is None else args.seed
        summary["bootstrap_std"] = fitting.bootstrap(est, x, y, cfg.get("fit", "bootstrap"), seed)
    write_json(out / "fit.json", summary)
    if not res.converged:
        raise NumericalFailure(f"fit did not converge: {res.message}")
    return summary


def cmd_calibrate(cfg, args, out: Path) -> dict:
    stages = args.stage or ["readout", "branching", "noise"]
    rep = calibration.CalibrationReport()
    r = cfg.section("readout")
    try:
        if "readout" in stages:
            rep = rep.merge(calibration.calibrate_readout(
                eta=r["detection_prob"], dark_rate=r["dark_rate_hz"], n_pulses=r["n_pulses"],
                threshold=r["threshold"]))
        if "branching" in stages:
            rep = rep.merge(calibration.calibrate_branching(
                target=args.pump_target, params=cfg.cavity_params(), repetitions=cfg.get("pump", "repetitions"),
                bulk_lifetime_ms=cfg.get("cavity", "bulk_lifetime_ms"), levels=cfg.level_kwargs()))
        if "noise" in stages:
            rep = rep.merge(calibration.calibrate_noise())
    except calibration.InfeasibleCalibration as exc:
        if exc.report is not None:
            rep = rep.merge(exc.report)
        rep.notes.append(f"infeasible: {exc}")
        (out / "calibrate.txt").write_text(rep.summary(), encoding="utf-8")
        (out / "calibrate.json").write_text(rep.to_json(), encoding="utf-8")
        raise
    (out / "calibrate.json").write_text(rep.to_json(), encoding="utf-8")
    (out / "calibrate.txt").write_text(rep.summary(), encoding="utf-8")
    sys.stdout.write(rep.summary())
    if args.write_config:
        target = args.write_config
        values = {k: v["value"] for k, v in rep.derived.items() if _config_key(k)}
        config.write_calibrated(target, values)
    return {"all_targets_met": rep.all_passed, "derived": sorted(rep.derived)}


def _config_key(name: str) -> bool:
    sec, _, key = name.partition(".")
    return sec in config.SCHEMA and key in config.SCHEMA[sec]


COMMANDS = {
    "spectrum": cmd_spectrum, "purcell": cmd_purcell, "pump": cmd_pump, "readout": cmd_readout,
    "readout-map": cmd_readout_map, "rabi": cmd_rabi, "ramsey": cmd_ramsey, "echo": cmd_echo,
    "dd": cmd_dd, "fit": cmd_fit, "calibrate": cmd_calibrate,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help=f"INI config (default: ${config.ENV_VAR} or built-in values)")
    common.add_argument("--seed", type=int, help="unsigned 64-bit seed (overrides [run] seed)")
    common.add_argument("--out", help="output directory (overrides [run] out)")
    common.add_argument("--threads", type=int, help="worker threads for Monte Carlo blocks")
    common.add_argument("--svg", action="store_true", help="also write an SVG figure")

    ap = argparse.ArgumentParser(prog="erspin", description="Er-167 nuclear-spin qubit simulator")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("spectrum", parents=[common], help="transition table and synthetic spectrum")
    p = sub.add_parser("purcell", parents=[common], help="Purcell factor and reflection vs detuning")
    p.add_argument("--span-min", type=float, default=-300.0)
    p.add_argument("--span-max", type=float, default=300.0)
    p.add_argument("--step", type=float, default=1.0)
    sub.add_parser("pump", parents=[common], help="optical pumping into the target level")
    p = sub.add_parser("readout", parents=[common], help="photon-count histograms and fidelity")
    p.add_argument("--analytic", action="store_true", help="skip the Monte Carlo shots")
    p.add_argument("--shots", type=int)
    sub.add_parser("readout-map", parents=[common], help="fidelity over (pulses, threshold)")
    sub.add_parser("rabi", parents=[common], help="Raman Rabi oscillation")
    for name in ("ramsey", "echo", "dd"):
        p = sub.add_parser(name, parents=[common], help=f"{name} coherence")
        p.add_argument("--mc", action="store_true", help="trajectory Monte Carlo instead of filter functions")
    p = sub.add_parser("fit", parents=[common], help="fit a CSV (x, y[, sigma])")
    p.add_argument("--input", required=True)
    p.add_argument("--model", choices=sorted(fitting.MODELS), default="stretched_exp")
    p.add_argument("--bootstrap", action="store_true")
    p = sub.add_parser("calibrate", parents=[common], help="derive hidden parameters from observables")
    p.add_argument("--stage", action="append", choices=["readout", "branching", "noise"])
    p.add_argument("--pump-target", type=float, default=0.973, help="initialization fidelity to reach")
    p.add_argument("--write-config", metavar="PATH", help="write derived values to [calibrated] of PATH")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    start = time.perf_counter()
    try:
        cfg = config.load(args.config)
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise config.ConfigError("--seed must be an unsigned 64-bit integer")
        if args.threads is None:
            args.threads = cfg.get("run", "threads")
        if args.threads < 1:
            raise config.ConfigError("--threads must be >= 1")
        out = Path(args.out or cfg.get("run", "out"))
        out.mkdir(parents=True, exist_ok=True)
    except config.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    seed = cfg.get("run", "seed") if args.seed is None else args.seed
    status, error = EXIT_OK, None
    try:
        summary = COMMANDS[args.command](cfg, args, out)
        if args.command not in ("fit", "calibrate"):
            write_json(out / f"{args.command}.json", summary)
    except config.ConfigError as exc:
        status, error = EXIT_CONFIG, f"config error: {exc}"
    except calibration.InfeasibleCalibration as exc:
        status, error = EXIT_INFEASIBLE, f"infeasible calibration: {exc}"
    except (NumericalFailure, IntegrationError, fitting.FitError, FloatingPointError, LevelSchemeError) as exc:
        status, error = EXIT_NUMERIC, f"numerical failure: {exc}"
    if error:
        print(error, file=sys.stderr)
    manifest = {
        "command": args.command, "argv": list(sys.argv[1:] if argv is None else argv),
        "config_path": cfg.path, "config_sha256": cfg.digest(), "seed": seed, "threads": args.threads,
        "versions": _versions(), "wall_time_s": time.perf_counter() - start, "exit_code": status,
        "error": error, "platform": platform.platform(),
    }
    write_json(out / f"{args.command}.manifest.json", manifest)
    return status


if __name__ == "__main__":
    sys.exit(main())
