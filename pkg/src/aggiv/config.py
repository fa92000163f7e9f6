"""TOML model configurations.

An SCM config looks like::

    k = 2
    m = 1
    alpha = [1.0, 1.0]
    beta = [1.0, 2.0]
    delta = [[1.0, 1.0]]
    gamma_a = [1.0, 1.0]
    gamma_y = 1.0
    var_u = 1.0
    var_i = [1.0]
    var_a = [1.0, 1.0]
    var_y = 1.0

    [acid]                 # optional
    kind = "gaussian"      # gaussian | natural | instrument_tuned | partial | counterexample
    c = [0.0, 0.0]
    d = [2.0, -1.0]
    sigma = [[0.0, 0.0], [0.0, 0.0]]

``k`` and ``m`` are optional and, when present, must agree with the array
shapes.  An exclusion-violating model is written with
``model = "exclusion_violation"`` and the primed parameter names.
"""

from __future__ import annotations

import sys
from dataclasses import fields
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .acid import (
    GaussianAcid,
    UniformCounterexampleAcid,
    instrument_tuned_acid,
    natural_acid_from_scm,
    partially_instrument_tuned_acid,
)
from .equivalence import ExclusionViolationScm
from .errors import ConfigError, InvalidModelError
from .scm import AggregateIvScm

SCM_KEYS = ("alpha", "beta", "delta", "gamma_a", "gamma_y", "var_u", "var_i", "var_a", "var_y")
ACID_KINDS = ("gaussian", "natural", "instrument_tuned", "partial", "counterexample")


def load_config(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from None


def parse_config(text: str) -> dict:
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse config: {exc}") from None


def _numeric(cfg, key, required=False):
    if key not in cfg:
        if required:
            raise ConfigError(f"missing required key {key!r}")
        return None
    try:
        return np.asarray(cfg[key], dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"key {key!r} must be numeric (scalar or nested arrays)") from None


def scm_from_config(cfg: Mapping[str, Any]) -> AggregateIvScm:
    """Build the aggregate model; declared ``k``/``m`` are checked against the arrays."""
    kwargs = {}
    for key in SCM_KEYS:
        value = _numeric(cfg, key, required=key in ("alpha", "beta", "delta"))
        if value is not None:
            kwargs[key] = float(value) if key in ("gamma_y", "var_u", "var_y") else value
    try:
        scm = AggregateIvScm(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"malformed SCM parameters: {exc}") from None
    problems = []
    if "k" in cfg and int(cfg["k"]) != scm.k:
        problems.append(f"dimension: declared k={cfg['k']} but alpha has length {scm.k}")
    if "m" in cfg and int(cfg["m"]) != scm.m:
        problems.append(f"dimension: declared m={cfg['m']} but delta has {scm.m} rows")
    if problems:
        raise InvalidModelError("; ".join(problems), problems)
    return scm


def scm_to_config(scm: AggregateIvScm) -> dict:
    cfg = {"k": scm.k, "m": scm.m}
    for key in SCM_KEYS:
        value = getattr(scm, key)
        cfg[key] = value.tolist() if isinstance(value, np.ndarray) else float(value)
    return cfg


def exclusion_violation_from_config(cfg: Mapping[str, Any]) -> ExclusionViolationScm:
    names = [f.name for f in fields(ExclusionViolationScm)]
    missing = [name for name in names if name not in cfg]
    if missing:
        raise ConfigError(f"missing required keys {missing}")
    return ExclusionViolationScm(**{name: float(cfg[name]) for name in names})


def exclusion_violation_to_config(eq: ExclusionViolationScm) -> dict:
    cfg = {"model": "exclusion_violation"}
    cfg.update({f.name: float(getattr(eq, f.name)) for f in fields(ExclusionViolationScm)})
    return cfg


def is_exclusion_violation(cfg: Mapping[str, Any]) -> bool:
    return cfg.get("model") == "exclusion_violation"


def acid_from_config(cfg: Mapping[str, Any], scm: AggregateIvScm):
    """Build the ACID described by the ``[acid]`` table of ``cfg``."""
    table = cfg.get("acid")
    if not isinstance(table, Mapping):
        raise ConfigError("config has no [acid] table")
    kind = table.get("kind")
    if kind not in ACID_KINDS:
        raise ConfigError(f"acid.kind must be one of {ACID_KINDS}, got {kind!r}")
    instrument = int(table.get("instrument", 0))
    scale = float(table.get("scale", 1.0))
    if kind == "gaussian":
        d = _numeric(table, "d", required=True)
        c = _numeric(table, "c")
        sigma = _numeric(table, "sigma")
        k = d.size
        return GaussianAcid(
            np.zeros(k) if c is None else c,
            d,
            np.zeros((k, k)) if sigma is None else sigma,
            scm.alpha,
        )
    if kind == "natural":
        return natural_acid_from_scm(scm)
    if kind == "instrument_tuned":
        return instrument_tuned_acid(scm, instrument, scale)
    if kind == "partial":
        members = table.get("proportional_set")
        if members is None:
            raise ConfigError("acid.kind = 'partial' needs acid.proportional_set")
        return partially_instrument_tuned_acid(scm, members, instrument, scale)
    return UniformCounterexampleAcid()


def dump_config(cfg: Mapping[str, Any]) -> str:
    return tomli_w.dumps(dict(cfg))


def write_config(cfg: Mapping[str, Any], path) -> None:
    Path(path).write_text(dump_config(cfg))
