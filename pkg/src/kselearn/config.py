"""Experiment configuration files.

Plain ``key = value`` lines grouped into sections::

    [grid]
    L = 16
    N = 512

    [truth]
    lambda = 0, 1, 0, 1, 1
    unknown = 2
    initial_guess = 2

    [estimator]
    mu = 1.8/dt
    alpha = 1
    p = 3

    [observation]
    kind = fourier
    K = 21

    [run]
    dt = 1e-3
    t_final = 50

    [output]
    path = out

Every key is optional; an empty file reproduces the baseline experiment.
Overrides use dotted keys (``estimator.alpha=10``) or bare field names.
"""
from __future__ import annotations

import configparser
import dataclasses
from pathlib import Path
from typing import Dict, Iterable, Optional, Tuple

from .harness import ExperimentSpec

__all__ = ["SECTIONS", "load_spec", "parse_spec", "apply_overrides", "spec_to_config"]

# section -> {config key: spec field}
SECTIONS: Dict[str, Dict[str, str]] = {
    "grid": {"L": "L", "N": "N"},
    "truth": {"lambda": "truth", "unknown": "unknown", "initial_guess": "initial_guess"},
    "estimator": {"mu": "mu", "alpha": "alpha", "p": "p", "sigma_min": "sigma_min",
                  "e1_min": "e1_min"},
    "observation": {"kind": "observation", "K": "K", "m": "m",
                    "interp_order": "interp_order"},
    "run": {"dt": "dt", "t_final": "t_final", "warmup": "warmup", "t_warmup": "t_warmup",
            "converge_tol": "converge_tol", "seed": "seed"},
    "output": {"path": "output", "cache_dir": "cache_dir"},
}

_FIELD_TO_KEY = {fld: (sec, key) for sec, keys in SECTIONS.items() for key, fld in keys.items()}


def _floats(text: str) -> Tuple[float, ...]:
    return tuple(float(v) for v in text.replace(";", ",").split(",") if v.strip())


def _convert(field: str, text: str):
    text = text.strip()
    if field == "truth":
        return _floats(text)
    if field == "unknown":
        return tuple(int(v) for v in text.replace(";", ",").split(",") if v.strip())
    if field == "initial_guess":
        vals = _floats(text)
        return vals[0] if len(vals) == 1 else vals
    if field == "mu":
        if text.lower() in ("", "none", "default") or text.replace(" ", "") == "1.8/dt":
            return None
        if text.endswith("/dt"):
            return ("per_dt", float(text[:-3]))
        return float(text)
    if field in ("N", "K", "m", "p", "seed"):
        return int(text)
    if field == "warmup":
        lowered = text.lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if field in ("observation", "interp_order"):
        return text.lower()
    if field in ("output", "cache_dir"):
        return text or None
    return float(text)


def _resolve(values: dict) -> dict:
    mu = values.get("mu")
    if isinstance(mu, tuple):
        dt = values.get("dt", ExperimentSpec.dt)
        values["mu"] = mu[1] / dt
    return values


def _lookup(key: str) -> str:
    if "." in key:
        section, name = key.split(".", 1)
        try:
            return SECTIONS[section][name]
        except KeyError:
            raise KeyError(f"unknown config key {key!r}") from None
    if key in _FIELD_TO_KEY:
        return key
    for keys in SECTIONS.values():
        if key in keys:
            return keys[key]
    raise KeyError(f"unknown config key {key!r}")


def parse_spec(text: str, base: Optional[ExperimentSpec] = None) -> ExperimentSpec:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    parser.read_string(text)
    values = {}
    for section in parser.sections():
        if section not in SECTIONS:
            if section in ("sweep", "order_study"):
                continue
            raise KeyError(f"unknown config section [{section}]")
        for key, raw in parser.items(section):
            if key not in SECTIONS[section]:
                raise KeyError(f"unknown key {key!r} in [{section}]")
            field = SECTIONS[section][key]
            values[field] = _convert(field, raw)
    return dataclasses.replace(base or ExperimentSpec(), **_resolve(values))


def load_spec(path, overrides: Iterable[str] = ()) -> ExperimentSpec:
    text = Path(path).read_text() if path else ""
    return apply_overrides(parse_spec(text), overrides)


def section_values(path, section: str) -> Dict[str, str]:
    """Raw values of an auxiliary section such as ``[sweep]``."""
    if not path:
        return {}
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    parser.read_string(Path(path).read_text())
    return dict(parser.items(section)) if parser.has_section(section) else {}


def apply_overrides(spec: ExperimentSpec, overrides: Iterable[str]) -> ExperimentSpec:
    values = {}
    for item in overrides:
        if "=" not in item:
            raise ValueError(f"override must look like key=value, got {item!r}")
        key, raw = item.split("=", 1)
        field = _lookup(key.strip())
        values[field] = _convert(field, raw)
    if "mu" in values and isinstance(values["mu"], tuple):
        values.setdefault("dt", spec.dt)
    return dataclasses.replace(spec, **_resolve(values))


def spec_to_config(spec: ExperimentSpec) -> str:
    """Render ``spec`` in the config file format."""
    lines = []
    for section, keys in SECTIONS.items():
        lines.append(f"[{section}]")
        for key, field in keys.items():
            value = getattr(spec, field)
            if value is None:
                text = "1.8/dt" if field == "mu" else ""
            elif isinstance(value, tuple):
                text = ", ".join(repr(v) for v in value)
            elif isinstance(value, bool):
                text = "true" if value else "false"
            else:
                text = repr(value) if isinstance(value, float) else str(value)
            lines.append(f"{key} = {text}")
        lines.append("")
    return "\n".join(lines)
