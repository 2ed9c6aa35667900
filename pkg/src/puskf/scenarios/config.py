"""Flat ``key = value`` scenario configuration files.

Keys are ``<section>.<field>`` where the section is the scenario name with
underscores (``falling_body``, ``imu_cam``, ``tumbler``) and the field is a
parameter name. Vectors are comma lists. A few scalar aliases address single
vector components, e.g. ``falling_body.sigma0_position = 300``.
Lines starting with ``#`` and trailing ``# ...`` comments are ignored.
"""
import dataclasses

import numpy as np

from ..errors import ConfigError

#: per-section aliases: key -> (field, index)
ALIASES = {
    "falling_body": {
        "sigma0_position": ("sigma0", 0), "sigma0_velocity": ("sigma0", 1),
        "sigma0_ballistic": ("sigma0", 2),
        "x0_position": ("initial_truth", 0), "x0_velocity": ("initial_truth", 1),
        "x0_ballistic": ("initial_truth", 2),
    },
}


def section_name(scenario_name):
    return scenario_name.replace("-", "_")


def parse_config(text):
    """Parse config text into ``{section: {key: raw string}}``.

    Examples
    --------
    >>> parse_config("falling_body.R = 300  # variance")
    {'falling_body': {'R': '300'}}
    """
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key or not value:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        section, dot, name = key.partition(".")
        if not dot or not name:
            raise ConfigError(f"line {lineno}: key {key!r} needs a '<scenario>.' prefix")
        if name in out.setdefault(section, {}):
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[section][name] = value
    return out


def load_config(path):
    """Read and parse a UTF-8 config file."""
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None


def _convert(value, current, key):
    try:
        if isinstance(current, np.ndarray):
            vals = [v.strip() for v in value.split(",") if v.strip()]
            if current.dtype == bool:
                arr = np.array([_bool(v) for v in vals])
            else:
                arr = np.array([float(v) for v in vals])
            if current.ndim == 2:
                arr = arr.reshape(-1, current.shape[1])
            return arr
        if isinstance(current, bool):
            return _bool(value)
        if isinstance(current, int):
            return int(value)
        if current is None and value.lower() == "none":
            return None
        if isinstance(current, str):
            return value
        return float(value)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {value!r} ({exc})") from None


def _bool(v):
    low = v.strip().lower()
    if low in ("true", "yes", "1"):
        return True
    if low in ("false", "no", "0"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def apply_config(params, section, entries):
    """Return a copy of the params dataclass with ``entries`` applied."""
    fields = {f.name for f in dataclasses.fields(params)}
    updates = {}
    aliases = ALIASES.get(section, {})
    for key, value in entries.items():
        if key in aliases:
            field, idx = aliases[key]
            arr = np.array(updates.get(field, getattr(params, field)), dtype=float)
            arr[idx] = _convert(value, 0.0, f"{section}.{key}")
            updates[field] = arr
        elif key in fields:
            updates[key] = _convert(value, getattr(params, key), f"{section}.{key}")
        else:
            raise ConfigError(f"unknown key {section}.{key}")
    try:
        return dataclasses.replace(params, **updates)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def _format(value):
    if isinstance(value, np.ndarray):
        if value.dtype == bool:
            return ", ".join("true" if v else "false" for v in value.ravel())
        return ", ".join(f"{v:.17g}" for v in value.ravel())
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def export_config(params, section):
    """Render every parameter of a params dataclass as config text."""
    lines = [f"# {section} parameters"]
    for f in dataclasses.fields(params):
        lines.append(f"{section}.{f.name} = {_format(getattr(params, f.name))}")
    return "\n".join(lines) + "\n"
