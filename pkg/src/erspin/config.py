"""INI run configuration.

Grammar: ``[section]`` headers followed by ``key = value`` lines; ``#`` and
``;`` start comment lines. Sections and keys are listed in :data:`SCHEMA`;
anything else is rejected with its line number. Values keep their source
text, so loading and re-emitting a file preserves every value exactly.

The ``[calibrated]`` section holds ``section.key = value`` overrides written
by ``erspin calibrate --write-config``; they take precedence over the plain
sections.
"""
from __future__ import annotations

import configparser
import hashlib
import os
import re
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import cavity, readout
from .coherence.noise import NoiseModel, Sinusoid
from .coherence.raman import RamanConfig
from .levels import LevelSchemeError, SpinProjection, build_level_scheme

ENV_VAR = "ERSPIN_CONFIG"


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, key: str | None = None):
        where = f"line {line}: " if line else ""
        super().__init__(f"{where}{message}")
        self.line, self.key = line, key


def _opt_float(text: str):
    return None if text.strip().lower() in ("", "none", "random") else float(text)


def _spin(text: str) -> float:
    return float(Fraction(text.strip()))


def _floats(text: str) -> tuple:
    return tuple(float(x) for x in text.replace(",", " ").split())


def _ints(text: str) -> tuple:
    return tuple(int(x) for x in text.replace(",", " ").split())


# section -> key -> (parser, default text)
SCHEMA = {
    "run": {
        "seed": (int, "0"),
        "out": (str, "out"),
        "threads": (int, "1"),
    },
    "levels": {
        "a_g": (float, "870"), "a_e": (float, "950"), "q_g": (float, "5"), "q_e": (float, "2"),
    },
    "cavity": {
        "kappa_mhz": (float, "65"),
        "peak_purcell": (float, "95"),
        "detuning_mhz": (float, "0"),
        "eta_det": (float, "0.11"),
        "eta_out": (float, "0.76"),
        "min_reflection": (float, "0.2"),
        "preserving": (float, "0.979136"),
        "bulk_lifetime_ms": (float, "11.4"),
    },
    "pump": {
        "excitation_prob": (float, "0.020132"),
        "repetitions": (int, "500"),
        "target": (_spin, "-7/2"),
        "pulse_duration_us": (float, "20"),
        "chirp_span_mhz": (float, "10"),
    },
    "readout": {
        "n_pulses": (int, "110"),
        "pulse_duration_us": (float, "8"),
        "chirp_span_mhz": (float, "2"),
        "detection_window_us": (float, "487.8856906"),
        "dark_rate_hz": (float, "43.9"),
        "excitation_prob": (float, "0.818169"),
        "detection_prob": (float, "0.11"),
        "flip_prob": (float, "0.0039746"),
        "leakage_prob": (float, "0"),
        "threshold": (int, "5"),
        "shots": (int, "100000"),
        "pulse_range": (_ints, "10 200"),
        "threshold_range": (_ints, "1 10"),
        "dark_scale": (float, "1"),
    },
    "raman": {
        "rabi_1": (float, "6283185.307179586"),
        "rabi_2": (float, "6283185.307179586"),
        "one_photon_detuning_mhz": (float, "-90"),
        "two_photon_detuning_khz": (float, "0"),
        "cavity_detuning_control_mhz": (float, "-400"),
        "pulse_area_noise_sigma": (float, "0.05"),
        "drive_power_mw": (float, "10"),
        "trajectories": (int, "4000"),
        "max_duration_us": (float, "1000"),
        "points": (int, "81"),
    },
    "noise": {
        "ou_sigma": (float, "2275.89"),
        "ou_tau": (float, "55.68"),
        "sin_amplitude": (float, "162.56"),
        "sin_frequency": (float, "52.47"),
        "sin_phase": (_opt_float, "random"),
        "white_floor": (float, "6.4307"),
        "static_offset": (float, "0"),
        "trajectories": (int, "10000"),
        "pulse_counts": (_ints, "1 2 4 8 16 32 64"),
        "pulse_area_error": (float, "0"),
    },
    "fit": {
        "decades": (_floats, "-1.5 -1 -0.5 0 0.5 1"),
        "stretch_starts": (_floats, "1 2 3"),
        "bootstrap": (int, "200"),
    },
    "calibrated": {},
}

_SECTION_RE = re.compile(r"^\s*\[([^\]]+)\]\s*$")
_KEY_RE = re.compile(r"^\s*([^=:#;\s][^=:]*?)\s*[=:]")


@dataclass
class RunConfig:
    raw: dict = field(default_factory=dict)        # section -> key -> text (explicit only)
    path: str | None = None

    # --- access -----------------------------------------------------------
    def text(self, section: str, key: str) -> str:
        cal = self.raw.get("calibrated", {}).get(f"{section}.{key}")
        if cal is not None:
            return cal
        return self.raw.get(section, {}).get(key, SCHEMA[section][key][1])

    def get(self, section: str, key: str):
        parser = SCHEMA[section][key][0]
        return parser(self.text(section, key))

    def section(self, name: str) -> dict:
        return {k: self.get(name, k) for k in SCHEMA[name]}

    def set(self, section: str, key: str, value) -> None:
        if section not in SCHEMA or (section != "calibrated" and key not in SCHEMA[section]):
            raise ConfigError(f"unknown key {section}.{key}", key=key)
        self.raw.setdefault(section, {})[key] = value if isinstance(value, str) else repr(value)

    # --- module objects ---------------------------------------------------
    def level_kwargs(self) -> dict:
        return self.section("levels")

    def cavity_params(self) -> cavity.CavityParams:
        c = self.section("cavity")
        return cavity.CavityParams(c["kappa_mhz"], c["peak_purcell"], c["detuning_mhz"], c["eta_det"],
                                   c["eta_out"], c["min_reflection"])

    def branching(self) -> cavity.BranchingModel:
        c = self.section("cavity")
        return cavity.BranchingModel.symmetric(c["preserving"], c["bulk_lifetime_ms"])

    def pump_target(self) -> SpinProjection:
        return SpinProjection.from_m(self.get("pump", "target"))

    def readout_config(self) -> readout.ReadoutConfig:
        r = self.section("readout")
        return readout.ReadoutConfig(
            n_pulses=r["n_pulses"], pulse_duration_us=r["pulse_duration_us"], chirp_span_mhz=r["chirp_span_mhz"],
            detection_window_us=r["detection_window_us"], dark_rate_hz=r["dark_rate_hz"] * r["dark_scale"],
            excitation_prob=r["excitation_prob"], detection_prob=r["detection_prob"], flip_prob=r["flip_prob"],
            leakage_prob=r["leakage_prob"], threshold=r["threshold"])

    def raman_config(self) -> RamanConfig:
        r = self.section("raman")
        return RamanConfig(r["rabi_1"], r["rabi_2"], r["one_photon_detuning_mhz"], r["two_photon_detuning_khz"],
                           r["cavity_detuning_control_mhz"], r["pulse_area_noise_sigma"], r["drive_power_mw"])

    def noise_model(self) -> NoiseModel:
        n = self.section("noise")
        tones = (Sinusoid(n["sin_amplitude"], n["sin_frequency"], n["sin_phase"]),) if n["sin_amplitude"] else ()
        return NoiseModel(n["ou_sigma"], n["ou_tau"], tones, n["white_floor"], n["static_offset"])

    def validate(self) -> "RunConfig":
        """Parse every value and build every module object once."""
        for sec, keys in self.raw.items():
            for key, text in keys.items():
                if sec == "calibrated":
                    s, _, k = key.partition(".")
                    if s not in SCHEMA or s == "calibrated" or k not in SCHEMA[s]:
                        raise ConfigError(f"unknown calibrated key {key!r}", self._line(sec, key), key)
                    self._parse(s, k, text, sec, key)
                else:
                    self._parse(sec, key, text, sec, key)
        builders = [
            ("levels", lambda: build_level_scheme(**self.level_kwargs())),
            ("cavity", self.cavity_params), ("cavity", self.branching),
            ("pump", self.pump_target), ("readout", self.readout_config),
            ("raman", self.raman_config), ("noise", self.noise_model),
        ]
        for sec, build in builders:
            try:
                build()
            except (ValueError, LevelSchemeError) as exc:
                raise ConfigError(f"[{sec}] {exc}", self._line(sec, None)) from exc
        p = self.get("pump", "excitation_prob")
        if not 0 <= p <= 1:
            raise ConfigError("[pump] excitation_prob must lie in [0, 1]", self._line("pump", "excitation_prob"))
        seed = self.get("run", "seed")
        if not 0 <= seed < 2**64:
            raise ConfigError("[run] seed must be an unsigned 64-bit integer", self._line("run", "seed"))
        if self.get("run", "threads") < 1:
            raise ConfigError("[run] threads must be >= 1", self._line("run", "threads"))
        return self

    def _parse(self, section, key, text, src_section, src_key):
        try:
            return SCHEMA[section][key][0](text)
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"bad value for {section}.{key}: {text!r}",
                              self._line(src_section, src_key), src_key) from exc

    def _line(self, section: str, key: str | None) -> int | None:
        return getattr(self, "_lines", {}).get((section, key))

    # --- output -------------------------------------------------------------
    def dumps(self) -> str:
        """Explicit values only, in schema order, one ``key = value`` per line."""
        out = []
        for sec in SCHEMA:
            keys = self.raw.get(sec)
            if not keys:
                continue
            out.append(f"[{sec}]")
            order = list(SCHEMA[sec]) if sec != "calibrated" else sorted(keys)
            out += [f"{k} = {keys[k]}" for k in order if k in keys]
            out.append("")
        return "\n".join(out)

    def digest(self) -> str:
        """SHA-256 of the effective configuration (defaults included)."""
        lines = [f"{s}.{k}={self.text(s, k)}" for s in SCHEMA for k in SCHEMA[s]]
        return hashlib.sha256("\n".join(lines).encode()).hexdigest()


def _line_index(text: str) -> dict:
    lines, section = {}, None
    for no, line in enumerate(text.splitlines(), 1):
        m = _SECTION_RE.match(line)
        if m:
            section = m.group(1).strip()
            lines.setdefault((section, None), no)
            continue
        k = _KEY_RE.match(line)
        if k and section is not None and not line.lstrip().startswith(("#", ";")):
            lines.setdefault((section, k.group(1).strip()), no)
    return lines


def loads(text: str, path: str | None = None) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",), comment_prefixes=("#", ";"),
                                       inline_comment_prefixes=None, strict=True, empty_lines_in_values=False)
    parser.optionxform = str
    try:
        parser.read_string(text, source=path or "<config>")
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("key outside any [section]", exc.lineno) from exc
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"duplicate key {exc.option!r}", exc.lineno, exc.option) from exc
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"duplicate section [{exc.section}]", exc.lineno) from exc
    except configparser.Error as exc:
        raise ConfigError(str(exc).splitlines()[0], getattr(exc, "lineno", None)) from exc
    lines = _line_index(text)
    cfg = RunConfig({}, path)
    cfg._lines = lines
    for sec in parser.sections():
        if sec not in SCHEMA:
            raise ConfigError(f"unknown section [{sec}]", lines.get((sec, None)))
        for key, value in parser.items(sec):
            if sec != "calibrated" and key not in SCHEMA[sec]:
                raise ConfigError(f"unknown key {key!r} in [{sec}]", lines.get((sec, key)), key)
            cfg.raw.setdefault(sec, {})[key] = value.strip()
    return cfg.validate()


def load(path: str | os.PathLike | None = None) -> RunConfig:
    """Read ``path``, else ``$ERSPIN_CONFIG``, else use the built-in defaults."""
    path = path or os.environ.get(ENV_VAR)
    if not path:
        return RunConfig().validate()
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    return loads(text, str(path))


def write_calibrated(path: str | os.PathLike, values: dict) -> RunConfig:
    """Replace the ``[calibrated]`` section of ``path`` with ``values``."""
    cfg = load(path) if os.path.exists(path) else RunConfig()
    cfg.raw["calibrated"] = {k: _fmt(v) for k, v in sorted(values.items())}
    cfg.validate()
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(cfg.dumps())
    return cfg


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)
