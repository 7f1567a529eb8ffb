"""Sectioned key-value run configs (INI syntax) and their validation.

A run manifest written by the CLI is also accepted as a config: its
``config`` object holds the resolved sections as strings.
"""
import configparser
import json
import re
from dataclasses import dataclass

from .errors import ConfigError

AUTO = "auto"
CENTER = "center"


def _int(v):
    return int(v)


def _pos_int(v):
    n = int(v)
    if n < 1:
        raise ValueError("must be >= 1")
    return n


def _float(v):
    x = float(v)
    if x != x or x in (float("inf"), float("-inf")):
        raise ValueError("must be finite")
    return x


def _pos_float(v):
    x = _float(v)
    if x <= 0:
        raise ValueError("must be positive")
    return x


def _float_list(v):
    vals = [_float(p) for p in re.split(r"[,\s]+", v.strip()) if p]
    if not vals:
        raise ValueError("empty list")
    return vals


def _auto_or_float(v):
    return None if v.strip().lower() == AUTO else _pos_float(v)


def _center_or_float(v):
    return None if v.strip().lower() == CENTER else _float(v)


def _sector(v):
    return None if v.strip().lower() == "full" else int(v)


def _choice(*options):
    def parse(v):
        v = v.strip()
        if v not in options:
            raise ValueError(f"must be one of {', '.join(options)}")
        return v

    return parse


def _seed(v):
    n = int(v)
    if not 0 <= n < 2 ** 64:
        raise ValueError("must be an unsigned 64-bit integer")
    return n


REQ = object()

# section -> key -> (parser, default); REQ marks required keys, None optional ones
SCHEMA = {
    "model": {
        "L": (_int, REQ),
        "delta": (_float, "1.0"),
        "j2": (_float, "0.0"),
        "delta2": (_float, "0.0"),
        "w": (_float_list, REQ),
        "law": (_choice("uniform", "normal"), "uniform"),
        "sector": (_sector, "0"),
    },
    "floquet": {
        "model": (_choice("floquet-heisenberg", "kicked-ising-2", "kicked-ising-3"), REQ),
        "L": (_int, REQ),
        "theta": (_float_list, REQ),
        "sampling": (_choice("eigenbasis", "product"), "eigenbasis"),
    },
    "prep": {
        "M": (_int, "3"),
        "t0": (_auto_or_float, AUTO),
        "delta": (_center_or_float, CENTER),
    },
    "plan": {
        "N": (_pos_int, REQ),
        "n_disorder": (_pos_int, "1"),
        "n_reuse": (_pos_int, "1"),
        "master_seed": (_seed, "0"),
    },
    "grid": {
        "t_min": (_float, REQ),
        "t_max": (_float, REQ),
        "points": (_pos_int, "50"),
        "spacing": (_choice("log", "linear", "integer"), "log"),
    },
    "rmt": {
        "ensemble": (_choice("GOE", "GUE", "COE", "CUE"), REQ),
        "tau_h": (_pos_float, None),
        "k_inf": (_pos_float, None),
        "dim": (_pos_int, None),
        "manifest": (str, ""),
    },
    "thouless": {
        "eps": (_pos_float, "0.3"),
        "sustain": (_pos_int, "5"),
    },
    "rydberg": {
        "C6": (_float, REQ),
        "C6_tilde": (_float, REQ),
        "C6_prime": (_float, REQ),
        "delta": (_float, REQ),
        "xi": (_float, REQ),
        "delta_B": (_float, "0"),
        "gamma_d": (_float, "0"),
        "gamma_dp": (_float, "0"),
        "electronic_offset": (_float, "0"),
        "kappa1_reference": (_pos_float, None),
    },
    "geometry": {
        "L": (_int, REQ),
        "R": (_pos_float, REQ),
        "r_c": (_pos_float, "2.4"),
        "r_c_prime": (_pos_float, None),
        "R_max": (_pos_float, None),
    },
    "output": {
        "prefix": (str, ""),
        "coherence_time": (_pos_float, None),
    },
}

# sections each command requires / accepts
COMMANDS = {
    "sff-exact": ({"model", "plan", "grid"}, {"prep", "output"}),
    "sff-measure": ({"model", "plan", "grid"}, {"prep", "output", "thouless"}),
    "floquet": ({"floquet", "plan"}, {"grid", "output"}),
    "rmt": ({"rmt", "grid"}, {"output"}),
    "rydberg-couplings": ({"rydberg", "geometry"}, {"output"}),
    "budget": ({"rydberg", "geometry"}, {"output"}),
}

@dataclass
class RunConfig:
    command: str
    raw: dict
    values: dict
    source: str = "<string>"

    def section(self, name):
        return self.values.get(name, {})

    def get(self, section, key, default=None):
        v = self.values.get(section, {}).get(key)
        return default if v is None else v

    def to_manifest(self):
        """Resolved sections as strings, accepted back by :func:`load_config`."""
        return {"command": self.command, "config": self.raw}


def _line_of(text, section, key):
    if not text:
        return None
    in_sec = False
    for n, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            in_sec = s[1:-1].strip() == section
        elif in_sec and re.match(rf"{re.escape(key)}\s*[=:]", s):
            return n
    return None


def _where(source, text, section, key=None):
    line = _line_of(text, section, key) if key else None
    loc = f"{source}:{line}" if line else source
    return f"{loc}: [{section}]" + (f" {key}" if key else "")


def parse_sections(command, sections, source="<string>", text=None, seed=None):
    """Validate ``{section: {key: str}}`` for ``command`` into a :class:`RunConfig`."""
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    required, optional = COMMANDS[command]
    allowed = required | optional
    for sec in sections:
        if sec not in allowed:
            raise ConfigError(f"{_where(source, text, sec)}: section not used by {command}")
    for sec in sorted(required):
        if sec not in sections:
            raise ConfigError(f"{source}: missing section [{sec}] required by {command}")
    raw, values = {}, {}
    for sec in sorted(allowed):
        given = dict(sections.get(sec, {}))
        if sec not in sections and sec not in required:
            continue
        schema = SCHEMA[sec]
        for key in given:
            if key not in schema:
                raise ConfigError(
                    f"{_where(source, text, sec, key)}: unknown key "
                    f"(allowed: {', '.join(schema)})"
                )
        if sec == "plan" and seed is not None:
            given["master_seed"] = str(seed)
        raw[sec], values[sec] = {}, {}
        for key, (parser, default) in schema.items():
            if key in given:
                text_val = str(given[key]).strip()
            elif default is REQ:
                raise ConfigError(f"{_where(source, text, sec)}: missing required key {key!r}")
            elif default is None:
                values[sec][key] = None
                continue
            else:
                text_val = default
            try:
                values[sec][key] = parser(text_val)
            except (TypeError, ValueError) as exc:
                raise ConfigError(
                    f"{_where(source, text, sec, key)} = {text_val!r}: {exc}"
                ) from None
            raw[sec][key] = text_val
    return RunConfig(command, raw, values, source)


def load_config(path, command, seed=None):
    """Read an INI config or a JSON manifest from ``path``."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return loads_config(text, command, source=str(path), seed=seed)


def loads_config(text, command, source="<string>", seed=None):
    if text.lstrip().startswith("{"):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{source}:{exc.lineno}: invalid JSON: {exc.msg}") from None
        if not isinstance(doc, dict) or not isinstance(doc.get("config"), dict):
            raise ConfigError(f"{source}: JSON config must carry a 'config' object")
        if doc.get("command") not in (None, command):
            raise ConfigError(f"{source}: manifest was written by {doc['command']!r}, not {command!r}")
        sections = {s: {k: str(v) for k, v in kv.items()} for s, kv in doc["config"].items()}
        return parse_sections(command, sections, source, None, seed)
    cp = configparser.ConfigParser(interpolation=None, strict=True)
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    sections = {s: dict(cp.items(s)) for s in cp.sections()}
    return parse_sections(command, sections, source, text, seed)
