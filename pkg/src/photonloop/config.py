"""Flat key=value experiment configuration.

A config document is UTF-8 text, one ``key = value`` pair per line; blank
lines and ``#`` comments are ignored.  Command-line flags override file keys.
All times are in units of 1/gamma and all rates in units of gamma.

Recognized keys:

===============  =======  =====================================================
key              type     meaning (default)
===============  =======  =====================================================
mode             str      population | hbt | hom | oracle | sweep (required)
gamma            float    waveguide emission rate (1.0)
gamma0           float    off-chip decay rate (0.0)
gamma_prime      float    pure dephasing rate (0.0)
delta            float    emitter-drive detuning (0.0)
tau              float    feedback round-trip delay (0.1)
N                int      time bins across tau; step dt = tau/N (20)
phi              float    feedback phase in radians (0.0)
t_p              float    pulse intensity FWHM (0.1)
pulse_area       float    pulse Rabi area (pi)
pulse_t0         float    pulse center; default 6 sigma after t=0
n_max            int      total photon-number cutoff (2)
T                float    period between pulses (20.0)
feedback         str      on | off (on)
M                int      trajectories per run (20000)
master_seed      int      seed of the per-trajectory stream family (2024)
parallelism      int      worker count, 0 = all cores (1)
output_dir       str      artifact directory (runs)
sweep_variable   str      t_p | gamma0 | gamma_prime | phi | tau
sweep_values     list     comma-separated floats; defaults depend on variable
sweep_feedback   str      on | off | both (both)
===============  =======  =====================================================

Default sweep grids are log-spaced at six points per decade over t_p in
[0.01, 0.5], gamma0 in [0.01, 0.5], gamma_prime in [0.01, 1]; the rate grids
are prepended with 0 so the no-noise endpoint is always included.  phi and
tau sweeps have no default grid and require explicit sweep_values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .params import PulseParams, SystemParams

MODES = ("population", "hbt", "hom", "oracle", "sweep")
SWEEP_VARIABLES = ("t_p", "gamma0", "gamma_prime", "phi", "tau")
FEEDBACK_SETTINGS = ("on", "off", "both")

_FLOAT_KEYS = ("gamma", "gamma0", "gamma_prime", "delta", "tau", "phi", "t_p",
               "pulse_area", "pulse_t0", "T")
_INT_KEYS = ("N", "n_max", "M", "master_seed", "parallelism")
_STR_KEYS = ("mode", "feedback", "output_dir", "sweep_variable", "sweep_feedback")
_LIST_KEYS = ("sweep_values",)
ALL_KEYS = _FLOAT_KEYS + _INT_KEYS + _STR_KEYS + _LIST_KEYS

_DEFAULTS = {
    "gamma": 1.0,
    "gamma0": 0.0,
    "gamma_prime": 0.0,
    "delta": 0.0,
    "tau": 0.1,
    "N": 20,
    "phi": 0.0,
    "t_p": 0.1,
    "pulse_area": math.pi,
    "pulse_t0": None,
    "n_max": 2,
    "T": 20.0,
    "feedback": "on",
    "M": 20000,
    "master_seed": 2024,
    "parallelism": 1,
    "output_dir": "runs",
    "sweep_variable": None,
    "sweep_values": None,
    "sweep_feedback": "both",
}


class ConfigError(ValueError):
    """Configuration parse or validation failure; message names key and line."""


def log_grid(lo: float, hi: float, per_decade: int = 6) -> list[float]:
    """Log-spaced grid including both endpoints, ~per_decade points per decade."""
    decades = math.log10(hi / lo)
    n = max(2, round(decades * per_decade) + 1)
    return [float(v) for v in np.logspace(math.log10(lo), math.log10(hi), n)]


def default_sweep_values(variable: str) -> list[float]:
    if variable == "t_p":
        return log_grid(0.01, 0.5)
    if variable == "gamma0":
        return [0.0] + log_grid(0.01, 0.5)
    if variable == "gamma_prime":
        return [0.0] + log_grid(0.01, 1.0)
    raise ConfigError(
        f"key 'sweep_values': no default grid for sweep_variable={variable}; "
        "provide explicit values"
    )


@dataclass
class ExperimentConfig:
    """Validated experiment description with every default materialized."""

    mode: str
    params: SystemParams
    M: int
    master_seed: int
    parallelism: int
    output_dir: str
    sweep_variable: str | None = None
    sweep_values: list[float] | None = None
    sweep_feedback: str = "both"
    raw: dict = field(default_factory=dict)

    def echo(self) -> str:
        """Canonical config text that reparses to this exact configuration."""
        p = self.params
        lines = [
            f"# photonloop {__version__} config echo",
            f"mode = {self.mode}",
            f"gamma = {p.gamma!r}",
            f"gamma0 = {p.gamma0!r}",
            f"gamma_prime = {p.gamma_prime!r}",
            f"delta = {p.delta!r}",
            f"tau = {p.tau!r}",
            f"N = {p.N}",
            f"phi = {p.phi!r}",
            f"t_p = {p.pulse.t_p!r}",
            f"pulse_area = {p.pulse.area!r}",
            f"pulse_t0 = {p.pulse.t0!r}",
            f"n_max = {p.n_max}",
            f"T = {p.T!r}",
            f"feedback = {'on' if p.feedback_enabled else 'off'}",
            f"M = {self.M}",
            f"master_seed = {self.master_seed}",
            f"parallelism = {self.parallelism}",
            f"output_dir = {self.output_dir}",
        ]
        if self.mode == "sweep":
            lines.append(f"sweep_variable = {self.sweep_variable}")
            lines.append(
                "sweep_values = " + ",".join(f"{v!r}" for v in self.sweep_values)
            )
            lines.append(f"sweep_feedback = {self.sweep_feedback}")
        return "\n".join(lines) + "\n"


def _convert(key: str, text: str, where: str):
    if key in _FLOAT_KEYS:
        if key == "pulse_t0" and text.lower() == "none":
            return None
        try:
            return float(text)
        except ValueError:
            raise ConfigError(f"key {key!r} ({where}): not a number: {text!r}") from None
    if key in _INT_KEYS:
        try:
            return int(text)
        except ValueError:
            raise ConfigError(
                f"key {key!r} ({where}): not an integer: {text!r}"
            ) from None
    if key in _LIST_KEYS:
        items = [s.strip() for s in text.split(",") if s.strip()]
        if not items:
            raise ConfigError(f"key {key!r} ({where}): empty value list")
        try:
            return [float(s) for s in items]
        except ValueError:
            raise ConfigError(
                f"key {key!r} ({where}): not a comma-separated number list: {text!r}"
            ) from None
    return text


def _check(cond: bool, key: str, where: str, msg: str):
    if not cond:
        raise ConfigError(f"key {key!r} ({where}): {msg}")


def parse_config(text: str, overrides: dict[str, str] | None = None) -> ExperimentConfig:
    """Parse a key=value document, apply overrides, validate, fill defaults.

    overrides maps key -> raw string value (from command-line flags) and wins
    over file content.  Every error message names the offending key and where
    it came from (file line number or 'override').
    """
    values: dict = {}
    where: dict[str, str] = {}
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw_line!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if key not in ALL_KEYS:
            raise ConfigError(f"key {key!r} (line {lineno}): unknown key")
        loc = f"line {lineno}"
        values[key] = _convert(key, val, loc)
        where[key] = loc

    for key, val in (overrides or {}).items():
        if key not in ALL_KEYS:
            raise ConfigError(f"key {key!r} (override): unknown key")
        values[key] = _convert(key, str(val), "override")
        where[key] = "override"

    if "mode" not in values:
        raise ConfigError("key 'mode': missing required key")

    cfg = dict(_DEFAULTS)
    cfg.update(values)

    def loc(key):
        return where.get(key, "default")

    _check(cfg["mode"] in MODES, "mode", loc("mode"),
           f"must be one of {'|'.join(MODES)}, got {cfg['mode']!r}")
    _check(cfg["feedback"] in ("on", "off"), "feedback", loc("feedback"),
           f"must be on or off, got {cfg['feedback']!r}")
    _check(cfg["gamma"] > 0, "gamma", loc("gamma"), "must be > 0")
    for key in ("gamma0", "gamma_prime"):
        _check(cfg[key] >= 0, key, loc(key), f"must be >= 0, got {cfg[key]}")
    _check(cfg["tau"] > 0, "tau", loc("tau"), "must be > 0")
    _check(cfg["N"] >= 1, "N", loc("N"), "must be >= 1")
    _check(cfg["t_p"] > 0, "t_p", loc("t_p"), "must be > 0")
    _check(cfg["pulse_area"] >= 0, "pulse_area", loc("pulse_area"), "must be >= 0")
    _check(cfg["n_max"] >= 1, "n_max", loc("n_max"), "must be >= 1")
    _check(cfg["T"] > 0, "T", loc("T"), "must be > 0")
    _check(cfg["M"] >= 1, "M", loc("M"), "must be >= 1")
    _check(cfg["master_seed"] >= 0, "master_seed", loc("master_seed"), "must be >= 0")
    _check(cfg["parallelism"] >= 0, "parallelism", loc("parallelism"),
           "must be >= 0 (0 = all cores)")

    sweep_variable = cfg["sweep_variable"]
    sweep_values = cfg["sweep_values"]
    sweep_feedback = cfg["sweep_feedback"]
    if cfg["mode"] == "sweep":
        _check(sweep_variable is not None, "sweep_variable", loc("sweep_variable"),
               "required in sweep mode")
        _check(sweep_variable in SWEEP_VARIABLES, "sweep_variable",
               loc("sweep_variable"),
               f"must be one of {'|'.join(SWEEP_VARIABLES)}, got {sweep_variable!r}")
        _check(sweep_feedback in FEEDBACK_SETTINGS, "sweep_feedback",
               loc("sweep_feedback"),
               f"must be one of {'|'.join(FEEDBACK_SETTINGS)}, got {sweep_feedback!r}")
        if sweep_values is None:
            sweep_values = default_sweep_values(sweep_variable)
        _check(len(sweep_values) > 0, "sweep_values", loc("sweep_values"),
               "must be nonempty")
        if sweep_variable in ("t_p", "tau"):
            _check(all(v > 0 for v in sweep_values), "sweep_values",
                   loc("sweep_values"), f"{sweep_variable} values must be > 0")
        elif sweep_variable in ("gamma0", "gamma_prime"):
            _check(all(v >= 0 for v in sweep_values), "sweep_values",
                   loc("sweep_values"), f"{sweep_variable} values must be >= 0")
    else:
        sweep_variable = None
        sweep_values = None

    try:
        pulse = PulseParams(t_p=cfg["t_p"], area=cfg["pulse_area"], t0=cfg["pulse_t0"])
        params = SystemParams(
            gamma=cfg["gamma"],
            gamma0=cfg["gamma0"],
            gamma_prime=cfg["gamma_prime"],
            delta=cfg["delta"],
            tau=cfg["tau"],
            N=cfg["N"],
            phi=cfg["phi"],
            pulse=pulse,
            n_max=cfg["n_max"],
            feedback_enabled=(cfg["feedback"] == "on"),
            T=cfg["T"],
        )
    except ValueError as e:
        raise ConfigError(f"invalid parameter combination: {e}") from e

    return ExperimentConfig(
        mode=cfg["mode"],
        params=params,
        M=cfg["M"],
        master_seed=cfg["master_seed"],
        parallelism=cfg["parallelism"],
        output_dir=cfg["output_dir"],
        sweep_variable=sweep_variable,
        sweep_values=sweep_values,
        sweep_feedback=cfg["sweep_feedback"],
        raw=cfg,
    )
