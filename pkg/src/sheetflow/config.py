"""Scenario files: INI sections of key = value pairs, validated against a fixed schema.

See docs/config.md for the grammar.  Unknown sections or keys, malformed values
and out-of-range numbers raise SchemaError naming the offending ``section.key``.
"""
import configparser
from dataclasses import dataclass

from .errors import SchemaError


def _modes(text):
    """'2:0.01, 5:-0.002' -> {2: 0.01, 5: -0.002}"""
    out = {}
    text = text.strip()
    if not text or text.lower() == "none":
        return out
    for item in text.split(","):
        k, _, a = item.partition(":")
        if not _:
            raise ValueError(f"mode entry {item.strip()!r} is not k:amplitude")
        out[int(k)] = float(a)
    return out


def _pair(text):
    parts = [float(p) for p in text.split(",")]
    if len(parts) != 2:
        raise ValueError("expected two comma-separated numbers")
    return tuple(parts)


def _ints(text):
    return [int(p) for p in text.split(",") if p.strip()]


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "yes", "true", "on"):
        return True
    if t in ("0", "no", "false", "off"):
        return False
    raise ValueError("expected yes or no")


def _optional_float(text):
    return None if text.strip().lower() in ("none", "off", "") else float(text)


def _choice(*options):
    def parse(text):
        t = text.strip().lower()
        if t not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return t
    return parse


# section -> key -> (parser, default, check)
SCHEMA = {
    "geometry": {
        "topology": (_choice("contractible", "looppair"), "contractible", None),
        "n": (int, 256, lambda v: v >= 16),
        "radius": (float, 0.2, lambda v: 0 < v < 0.5),
        "center": (_pair, (0.5, 0.5), None),
        "modes": (_modes, {}, None),
        "heights": (_pair, (0.25, 0.75), lambda v: 0 <= v[0] < v[1] < 1),
        "modes0": (_modes, {}, None),
        "modes1": (_modes, {}, None),
        "phase0": (float, 0.0, None),
        "phase1": (float, 0.0, None),
    },
    "momentum": {
        "modes": (_modes, {}, None),
        "modes0": (_modes, {}, None),
        "modes1": (_modes, {}, None),
        "theta": (_pair, (0.0, 0.0), None),
    },
    "run": {
        "dt": (float, 1e-3, lambda v: v > 0),
        "steps": (int, 100, lambda v: v >= 0),
        "scheme": (_choice("rk4", "implicit-midpoint"), "rk4", None),
        "filter": (float, 1e-12, lambda v: v >= 0),
        "resample": (_optional_float, None, lambda v: v is None or v > 0),
        "force": (_choice("analytic", "oracle", "gated"), "gated", None),
        "gate_modes": (int, 4, lambda v: v >= 1),
        "green_cutoff": (int, 128, lambda v: v >= 8),
    },
    "diagnostics": {
        "every": (int, 10, lambda v: v >= 1),
        "curl": (_bool, True, None),
        "pressure": (_bool, True, None),
        "weak": (_bool, False, None),
        "weak_tests": (int, 3, lambda v: v >= 1),
        "weak_radial": (int, 12, lambda v: v >= 4),
    },
    "output": {
        "snapshots": (int, 0, lambda v: v >= 0),
        "frames": (int, 0, lambda v: v >= 0),
        "arrows": (int, 16, lambda v: v >= 0),
    },
    "metric": {
        "modes": (_ints, [1, 2, 4, 8], lambda v: all(k >= 1 for k in v)),
        "loop": (int, 0, lambda v: v in (0, 1)),
        "energy": (_bool, False, None),
        "radial": (int, 16, lambda v: v >= 4),
    },
}


@dataclass
class Scenario:
    sections: dict
    source: str = "<defaults>"

    def __getitem__(self, section):
        return self.sections[section]


def defaults():
    return Scenario({s: {k: entry[1] for k, entry in keys.items()} for s, keys in SCHEMA.items()})


def parse_text(text, source="<string>"):
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    try:
        cp.read_string(text, source=source)
    except configparser.Error as err:
        raise SchemaError(f"{source}: {err}") from None
    scen = defaults()
    scen.source = source
    for section in cp.sections():
        if section not in SCHEMA:
            raise SchemaError(f"unknown section [{section}]", key=section)
        for key, raw in cp.items(section):
            where = f"{section}.{key}"
            if key not in SCHEMA[section]:
                raise SchemaError(f"unknown key {where}", key=where)
            parse, _, check = SCHEMA[section][key]
            try:
                value = parse(raw)
            except (TypeError, ValueError) as err:
                raise SchemaError(f"bad value for {where}: {raw!r} ({err})", key=where) from None
            if check is not None and not check(value):
                raise SchemaError(f"value out of range for {where}: {raw!r}", key=where)
            scen.sections[section][key] = value
    return scen


def load(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as err:
        raise SchemaError(f"cannot read config {path}: {err.strerror}") from None
    return parse_text(text, str(path))
