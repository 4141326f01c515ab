"""Experiment configuration files.

A config is INI-style text: ``[section]`` headers and ``key = value``
lines, ``#`` comments.  Spec values are tagged records such as
``IID(dist=Uniform01())`` or ``FiniteStateMarkov(states=[0, 1],
matrix=[[0.9, 0.1], [0.2, 0.8]])``; numbers and ``[a, b]`` lists use the
same syntax.  See ``docs/config.md`` for every section and key.
"""
import configparser
import re

from . import records
from . import conditions, measures, mixing, processes, quantiles  # noqa: F401  (record types)

__all__ = ["ConfigError", "Config", "SCHEMA", "parse_config", "load_config", "dump_config"]


class ConfigError(ValueError):
    """Bad config, with the offending line and field when known."""

    def __init__(self, message, path=None, line=None, field=None):
        self.path, self.line, self.field = path, line, field
        where = ":".join(str(x) for x in (path, line) if x is not None)
        tag = f" [{field}]" if field else ""
        super().__init__(f"{where}{tag}: {message}" if where or tag else message)


def _text(v):
    return v.strip()


def _word(*choices):
    def conv(v):
        v = v.strip()
        if v not in choices:
            raise ValueError(f"expected one of {', '.join(choices)}, got {v!r}")
        return v
    conv.kind = "word"
    return conv


def _num(kind):
    def conv(v):
        x = records.loads(v)
        if isinstance(x, bool) or not isinstance(x, (int, float)):
            raise ValueError(f"expected a number, got {v.strip()!r}")
        if kind is int:
            if isinstance(x, float) and not x.is_integer():
                raise ValueError(f"expected an integer, got {v.strip()!r}")
            return int(x)
        return float(x)
    return conv


def _list(kind):
    def conv(v):
        x = records.loads(v)
        if not isinstance(x, tuple):
            raise ValueError(f"expected a [..] list, got {v.strip()!r}")
        return tuple(kind(e) for e in x)
    return conv


def _record(v):
    return records.loads(v)


def _bool(v):
    s = v.strip().lower()
    if s in ("true", "yes", "1"):
        return True
    if s in ("false", "no", "0"):
        return False
    raise ValueError(f"expected true/false, got {v.strip()!r}")


_int, _float = _num(int), _num(float)

# section -> key -> converter; order here is the canonical order
SCHEMA = {
    "experiment": {"name": _text, "seed": _int},
    "process": {"spec": _record},
    "measure": {"spec": _record, "grid_size": _int, "truncation": _list(float), "p": _float},
    "clt": {"n_schedule": _list(int), "replicates": _int, "max_lag": _int,
            "cov_budget": _int, "levels": _list(int)},
    "simulate": {"n": _int, "replicates": _int},
    "mixing": {"method": _word("exact", "exact_tv", "empirical", "theoretical"),
               "k_max": _int, "family": _record, "replicates": _int,
               "thresholds": _int, "bins": _int, "bootstrap": _int},
    "check": {"condition": _word("series", "gamma", "rate", "iid", "threshold",
                                 "optimality"),
              "dist": _record, "profile": _record, "gammas": _record, "N_max": _int,
              "start": _int, "variant": _record, "law": _text, "law_args": _list(float),
              "p": _float, "gamma": _float, "kind": _word("inv_pow", "inv_pow_right"),
              "a": _float},
    "diagnose": {"n_schedule": _list(int), "mc_paths": _int, "levels": _list(int),
                 "audit_n_max": _int},
    "probe": {"gamma": _float, "p": _float, "alpha": _float,
              "kind": _word("inv_pow", "inv_pow_right"), "n_schedule": _list(int),
              "replicates": _int, "truncation": _float, "grid_size": _int,
              "ks_tol": _float},
}


class Config:
    """Parsed config: ``cfg[section][key]`` plus the raw text per field."""

    def __init__(self, values, raw, path=None, lines=None):
        self.values, self.raw, self.path = values, raw, path
        self.lines = lines or {}

    def __contains__(self, section):
        return section in self.values

    def section(self, name):
        return self.values.get(name, {})

    def get(self, section, key, default=None):
        return self.values.get(section, {}).get(key, default)

    def require(self, section, key):
        try:
            return self.values[section][key]
        except KeyError:
            raise ConfigError("required field missing", self.path,
                              self.lines.get((section, None)), f"{section}.{key}") from None

    def error(self, section, key, message):
        return ConfigError(message, self.path, self.lines.get((section, key)),
                           f"{section}.{key}")


_SECTION_RE = re.compile(r"^\s*\[([^\]]+)\]")
_KEY_RE = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_]*)\s*[=:]")


def _line_index(text):
    lines, section = {}, None
    for i, line in enumerate(text.splitlines(), 1):
        m = _SECTION_RE.match(line)
        if m:
            section = m.group(1).strip()
            lines.setdefault((section, None), i)
            continue
        m = _KEY_RE.match(line)
        if m and section is not None:
            lines.setdefault((section, m.group(1)), i)
    return lines


def parse_config(text, path=None):
    """Parse and validate config text; raises :class:`ConfigError`."""
    lines = _line_index(text)
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",),
                                   strict=True)
    cp.optionxform = str
    try:
        cp.read_string(text, source=str(path or "<config>"))
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        msg = getattr(exc, "message", str(exc)).splitlines()[0]
        raise ConfigError(msg, path, line) from None
    values, raw = {}, {}
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]", path,
                              lines.get((section, None)), section)
        values[section], raw[section] = {}, {}
        for key, text_v in cp.items(section):
            conv = SCHEMA[section].get(key)
            where = lines.get((section, key))
            if conv is None:
                raise ConfigError("unknown key", path, where, f"{section}.{key}")
            try:
                values[section][key] = conv(text_v)
            except (ValueError, TypeError) as exc:
                raise ConfigError(str(exc), path, where, f"{section}.{key}") from None
            raw[section][key] = text_v
    return Config(values, raw, path, lines)


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc.strerror}", path) from None
    return parse_config(text, path)


def _canonical(conv, v):
    if conv is _text or getattr(conv, "kind", None) == "word":
        return str(v)
    if isinstance(v, bool):
        return "true" if v else "false"
    return records.dumps(v)


def dump_config(cfg):
    """Canonical text: schema order, records in canonical form."""
    out = []
    for section, keys in SCHEMA.items():
        if section not in cfg.values:
            continue
        out.append(f"[{section}]")
        for key, conv in keys.items():
            if key in cfg.values[section]:
                out.append(f"{key} = {_canonical(conv, cfg.values[section][key])}")
        out.append("")
    return "\n".join(out)
