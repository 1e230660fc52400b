"""INI-style experiment configuration.

Sections mirror :class:`~distfield.harness.ExperimentConfig`::

    [field]       mu, xc, yc, spread
    [region]      x_min, x_max, y_min, y_max
    [quantizer]   levels, step, offset
    [noise]       snr_o_db, snr_c_db, sigma2, eta2
    [network]     K, K_values, fixed_grid
    [experiment]  trials, master_seed, init, init_offset, resolution, outlier_tau
    [em]          max_em_iters, em_tol, max_newton_iters, newton_tol, damping, jacobian_ridge

Every key is optional. Unknown sections or keys are errors.
"""

from __future__ import annotations

import configparser
import dataclasses
import re

from .estimator import EmConfig
from .exceptions import ConfigError
from .field import FieldParams, Region
from .harness import ExperimentConfig


def _floats(text):
    return tuple(float(v) for v in re.split(r"[,\s]+", text.strip()) if v)


def _ints(text):
    out = []
    for v in re.split(r"[,\s]+", text.strip()):
        if not v:
            continue
        if ":" in v:  # start:stop:step, stop inclusive
            a, b, s = (int(p) for p in v.split(":"))
            out.extend(range(a, b + 1, s))
        else:
            out.append(int(v))
    return tuple(out)


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _int(text):
    v = float(text)
    if v != int(v):
        raise ValueError(f"not an integer: {text!r}")
    return int(v)


SCHEMA = {
    "field": {"mu": float, "xc": float, "yc": float, "spread": float},
    "region": {"x_min": float, "x_max": float, "y_min": float, "y_max": float},
    "quantizer": {"levels": _int, "step": float, "offset": float},
    "noise": {"snr_o_db": float, "snr_c_db": float, "sigma2": float, "eta2": float},
    "network": {"K": _int, "K_values": _ints, "fixed_grid": _bool},
    "experiment": {"trials": _int, "master_seed": _int, "init": _floats,
                   "init_offset": _floats, "resolution": _int, "outlier_tau": float},
    "em": {"max_em_iters": _int, "em_tol": float, "max_newton_iters": _int,
           "newton_tol": float, "damping": _int, "jacobian_ridge": float},
}

_HEADER = re.compile(r"^\s*\[([^\]]+)\]")
_KEY = re.compile(r"^\s*([^=:#;\s][^=:]*?)\s*[=:]")


def _line_index(text):
    """Map ``(section, key)`` to 1-based line numbers."""
    where = {}
    section = None
    for n, line in enumerate(text.splitlines(), start=1):
        m = _HEADER.match(line)
        if m:
            section = m.group(1).strip()
            where.setdefault((section, None), n)
            continue
        m = _KEY.match(line)
        if m and section is not None:
            where.setdefault((section, m.group(1).strip()), n)
    return where


def _locate(lines, name):
    for (section, key), n in lines.items():
        if key == name:
            return f"{section}.{key}", n
    return name, None


def parse_config(text, source="<config>") -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"),
                                       interpolation=None)
    parser.optionxform = str  # keys are case-sensitive (K vs k)
    try:
        parser.read_string(text, source=source)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("malformed config: key outside any [section]",
                          line=exc.lineno) from None
    except configparser.ParsingError as exc:
        line = exc.errors[0][0] if exc.errors else None
        raise ConfigError(f"malformed config: {exc.message.splitlines()[0]}",
                          line=line) from None
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        raise ConfigError(f"malformed config: {exc.message}", line=line) from None
    lines = _line_index(text)

    values = {}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]", field=section,
                              line=lines.get((section, None)))
        for key, raw in parser.items(section):
            conv = SCHEMA[section].get(key)
            name = f"{section}.{key}"
            if conv is None:
                raise ConfigError("unknown key", field=name, line=lines.get((section, key)))
            try:
                values[(section, key)] = conv(raw)
            except ValueError as exc:
                raise ConfigError(f"bad value {raw!r} ({exc})", field=name,
                                  line=lines.get((section, key))) from None

    def get(section, key, default):
        return values.get((section, key), default)

    base = ExperimentConfig.__dataclass_fields__
    defaults_theta = base["theta_true"].default
    defaults_region = base["region"].default
    try:
        theta = FieldParams(get("field", "mu", defaults_theta.mu),
                            get("field", "xc", defaults_theta.xc),
                            get("field", "yc", defaults_theta.yc))
        region = Region(*(get("region", k, getattr(defaults_region, k))
                          for k in ("x_min", "x_max", "y_min", "y_max")))
        em_defaults = EmConfig()
        em = EmConfig(**{k: get("em", k, getattr(em_defaults, k)) for k in SCHEMA["em"]})
        flat = {}
        for section, key in values:
            if section in ("field", "region", "em") and key != "spread":
                continue
            flat[key] = values[(section, key)]
        return ExperimentConfig(theta_true=theta, region=region, em=em, **flat)
    except ConfigError as exc:
        field, line = _locate(lines, exc.field) if exc.field else (None, None)
        msg = str(exc).split(": ", 1)[-1] if exc.field else str(exc)
        raise ConfigError(msg, field=field, line=line) from None


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        text = fh.read()
    return parse_config(text, source=str(path))


def config_to_dict(config: ExperimentConfig) -> dict:
    """Nested ``{section: {key: value}}`` view, the inverse of :func:`parse_config`."""
    em = dataclasses.asdict(config.em)
    out = {
        "field": {"mu": config.theta_true.mu, "xc": config.theta_true.xc,
                  "yc": config.theta_true.yc, "spread": config.spread},
        "region": dataclasses.asdict(config.region),
        "quantizer": {"levels": config.levels, "step": config.step, "offset": config.offset},
        "noise": {"snr_o_db": config.snr_o_db, "snr_c_db": config.snr_c_db},
        "network": {"K": config.K, "K_values": list(config.K_values),
                    "fixed_grid": config.fixed_grid},
        "experiment": {"trials": config.trials, "master_seed": config.master_seed,
                       "init_offset": list(config.init_offset),
                       "resolution": config.resolution, "outlier_tau": config.outlier_tau},
        "em": em,
    }
    if config.sigma2 is not None:
        out["noise"].update(sigma2=config.sigma2, eta2=config.eta2)
    if config.init is not None:
        out["experiment"]["init"] = list(config.init)
    return out


def dump_config(config: ExperimentConfig) -> str:
    def fmt(v):
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, (list, tuple)):
            return ", ".join(fmt(x) for x in v)
        if isinstance(v, float):
            return repr(v)
        return str(v)

    chunks = []
    for section, kv in config_to_dict(config).items():
        chunks.append(f"[{section}]")
        chunks.extend(f"{k} = {fmt(v)}" for k, v in kv.items())
        chunks.append("")
    return "\n".join(chunks)
