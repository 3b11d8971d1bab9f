"""INI-style run configuration.

Lengths are in the same units as ``drive.wavelength`` (1 by default, so
lengths are in wavelengths). Wavevectors (``k0``, ``k_a``, ``k1`` ...) are
given in units of ``2 pi / wavelength``. Rates in the ``rydberg`` section
are in units of the detuning unless stated otherwise.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from .errors import InvalidArgument


class ConfigError(InvalidArgument):
    def __init__(self, key: str, reason: str):
        super().__init__(f"{key}: {reason}")
        self.key = key


def _vec3(s):
    parts = [float(p) for p in s.replace(",", " ").split()]
    if len(parts) == 1:
        parts *= 3
    if len(parts) != 3:
        raise ValueError("expected 1 or 3 numbers")
    return tuple(parts)


def _ints3(s):
    parts = [int(p) for p in s.replace(",", " ").split()]
    if len(parts) != 3:
        raise ValueError("expected 3 integers")
    return tuple(parts)


def _floats(s):
    parts = [float(p) for p in s.replace(",", " ").split()]
    if not parts:
        raise ValueError("expected a list of numbers")
    return parts


def _bool(s):
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected a boolean")


def _choice(*options):
    def parse(s):
        v = s.strip()
        if v not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return v
    return parse


def _positive(cast):
    def parse(s):
        v = cast(s)
        if not v > 0:
            raise ValueError("must be > 0")
        return v
    return parse


# section -> key -> (parser, default); a default of None means "unset"
SCHEMA = {
    "geometry": {
        "kind": (_choice("lattice", "chain", "ring", "coulomb", "box", "file"), "chain"),
        "dims": (_ints3, None),
        "n": (_positive(int), None),
        "d0": (_positive(float), None),
        "path": (str, None),
    },
    "drive": {
        "wavelength": (_positive(float), 1.0),
        "direction": (_vec3, (0.0, 0.0, 1.0)),
        "k0": (_vec3, (0.0, 0.0, 0.0)),
        "n_eg": (_vec3, (1.0, 0.0, 0.0)),
        "gamma": (_positive(float), 1.0),
    },
    "fluctuation": {
        "model": (_choice("fixed", "thermal", "box"), "fixed"),
        "xi": (_vec3, (0.0, 0.0, 0.0)),
        "box": (_vec3, None),
        "method": (_choice("closed", "monte_carlo"), "closed"),
    },
    "grid": {
        "n_theta": (_positive(int), 200),
        "n_phi": (_positive(int), 200),
        "axis": (_vec3, None),
    },
    "sampling": {
        "seed": (int, 0),
        "n_samples": (_positive(int), 100_000),
    },
    "output": {
        "prefix": (str, None),
        "format": (_choice("csv", "json", "both"), "both"),
    },
    "sweep": {
        "variable": (_choice("N", "d0_over_lambda", "xi", "U"), None),
        "values": (_floats, None),
        "fit": (_choice("none", "powerlaw"), "none"),
        "exclude_smallest": (_bool, True),
    },
    "states": {
        "kind": (_choice("w", "spin_wave_pair", "fock"), "w"),
        "n": (_positive(int), 4),
        "d0": (_positive(float), 0.25),
        "n_a": (int, 1),
        "n_b": (int, 0),
        "k_a": (_vec3, (0.0, 0.0, 0.0)),
        "k_b": (_vec3, (0.0, 0.0, 0.0)),
        "relative_phase": (float, 0.0),
        "tolerance": (_positive(float), 1e-10),
    },
    "rydberg": {
        "n": (_positive(int), 4),
        "d0": (_positive(float), 0.3),
        "omega1": (float, 0.05),
        "omega2": (float, 0.05),
        "delta": (float, 1.0),
        "u_over_omega_eff": (float, 1000.0),
        "k1": (_vec3, (1.0, 0.0, 0.0)),
        "k2": (_vec3, (0.0, 1.0, 0.0)),
        "t_final": (_positive(float), None),
        "dt": (_positive(float), None),
        "model": (_choice("bare", "cross", "effective"), "bare"),
    },
}


@dataclass
class RunConfig:
    sections: dict = field(default_factory=dict)
    explicit: set = field(default_factory=set)

    def get(self, section: str, key: str):
        return self.sections[section][key]

    def has(self, section: str, key: str) -> bool:
        return (section, key) in self.explicit

    def set(self, section: str, key: str, value):
        self.sections[section][key] = value
        self.explicit.add((section, key))

    def require(self, section: str, key: str):
        v = self.sections[section][key]
        if v is None:
            raise ConfigError(f"{section}.{key}", "required but missing")
        return v

    def copy(self) -> "RunConfig":
        return RunConfig({s: dict(v) for s, v in self.sections.items()}, set(self.explicit))


def defaults() -> RunConfig:
    return RunConfig({s: {k: d for k, (_, d) in keys.items()} for s, keys in SCHEMA.items()})


def parse_config(text: str) -> RunConfig:
    """Parse config text, rejecting unknown sections and keys."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("config", str(exc).splitlines()[0]) from None
    cfg = defaults()
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(section, "unknown section")
        for key, raw in parser.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"{section}.{key}", "unknown key")
            try:
                cfg.set(section, key, SCHEMA[section][key][0](raw))
            except ValueError as exc:
                raise ConfigError(f"{section}.{key}", f"bad value {raw!r} ({exc})") from None
    return cfg


def load_config(path) -> RunConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError("--config", f"no such file {str(p)!r}")
    return parse_config(p.read_text())
