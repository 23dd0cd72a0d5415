"""Experiment configuration files.

A configuration is an INI file with three stanzas::

    [law]
    family = IidScaledUniform
    b = 2

    [experiment]
    p = 2
    a = 0.1
    reps = 10000

    [output]
    report = report.json

List-valued keys (``r_set``, ``outcomes``) are written as JSON.  Every key
is checked against the tables below; unknown keys and out-of-range values
raise :class:`~brwrate.errors.ConfigError` before any simulation starts.
"""

from __future__ import annotations

import configparser
import json
import math
from dataclasses import dataclass, field

from .errors import BranchingError, ConfigError
from .model import law_from_dict

__all__ = ["ExperimentConfig", "load_config", "parse_config", "LAW_KEYS", "EXPERIMENT_KEYS",
           "OUTPUT_KEYS", "config_from_resolved"]

MASK64 = (1 << 64) - 1

LAW_KEYS = {
    "IidScaledUniform": {"b": int},
    "LogNormalWeights": {"b": int, "sigma2": float},
    "PoissonGW": {"lam": float},
    "DiscreteTable": {"outcomes": json.loads},
}


def _float_list(text):
    return [float(x) for x in json.loads(text)]


def _mode(text):
    if text not in ("auto", "direct", "rejection", "importance"):
        raise ValueError("mode must be auto, direct, rejection or importance")
    return text


def _quantity(text):
    if text not in ("increment", "s_n"):
        raise ValueError("quantity must be increment or s_n")
    return text


# key -> (parser, default, validity check or None)
EXPERIMENT_KEYS = {
    "p": (float, 2.0, lambda v: v > 1),
    "a": (float, None, lambda v: v is None or v > 0),
    "r": (float, 2.0, lambda v: 1 <= v <= 2),
    "r_set": (_float_list, [], lambda v: all(x > 0 for x in v)),
    "n_max": (int, 10, lambda v: 0 <= v <= 60),
    "horizon": (int, None, lambda v: v is None or 2 <= v <= 60),
    "reps": (int, 10_000, lambda v: v >= 1),
    "cap": (int, 10**7, lambda v: v >= 1),
    "seed": (int, 0, lambda v: 0 <= v <= MASK64),
    "workers": (int, 1, lambda v: v >= 1),
    "quantity": (_quantity, "increment", None),
    "fit_min": (int, 0, lambda v: v >= 0),
    "fit_max": (int, None, lambda v: v is None or v >= 3),
    "slope_tol": (float, 0.05, lambda v: v > 0),
    "mode": (_mode, "auto", None),
    "scale": (float, 1.0, lambda v: 0 < v <= 10),
}

OUTPUT_KEYS = {
    "trajectory": "trajectory.csv",
    "rates": "rates.csv",
    "spine": "spine.csv",
    "report": "report.json",
}


@dataclass
class ExperimentConfig:
    law: dict | None
    experiment: dict
    output: dict = field(default_factory=lambda: dict(OUTPUT_KEYS))

    def build_law(self):
        if self.law is None:
            raise ConfigError("this command needs a [law] stanza")
        try:
            return law_from_dict(self.law)
        except (BranchingError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid [law] stanza: {exc}") from None

    def resolved(self):
        """The configuration with defaults filled in, as embedded in reports.

        ``workers`` is left out: it never changes results.
        """
        exp = {k: v for k, v in self.experiment.items() if k != "workers"}
        return {"law": self.law, "experiment": exp, "output": dict(self.output)}

    def __getitem__(self, key):
        return self.experiment[key]


def _parse_value(key, parser, text):
    try:
        return parser(text)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"cannot parse {key} = {text!r}: {exc}") from None


def _parse_law(section):
    items = dict(section)
    family = items.pop("family", None)
    if family is None:
        raise ConfigError("[law] needs a family key")
    if family not in LAW_KEYS:
        raise ConfigError(f"unknown law family {family!r}; known: {sorted(LAW_KEYS)}")
    keys = LAW_KEYS[family]
    unknown = set(items) - set(keys)
    if unknown:
        raise ConfigError(f"unknown [law] keys for {family}: {sorted(unknown)}")
    law = {"family": family}
    for k, text in items.items():
        law[k] = _parse_value(k, keys[k], text)
    return law


def parse_config(text, overrides=None) -> ExperimentConfig:
    """Parse configuration text; ``overrides`` replace experiment keys."""
    cp = configparser.ConfigParser(interpolation=None, default_section="__none__")
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    unknown = set(cp.sections()) - {"law", "experiment", "output"}
    if unknown:
        raise ConfigError(f"unknown stanzas: {sorted(unknown)}")

    law = _parse_law(cp["law"]) if cp.has_section("law") else None

    given = dict(cp["experiment"]) if cp.has_section("experiment") else {}
    unknown = set(given) - set(EXPERIMENT_KEYS)
    if unknown:
        raise ConfigError(f"unknown [experiment] keys: {sorted(unknown)}")
    exp = {}
    for key, (parser, default, _) in EXPERIMENT_KEYS.items():
        exp[key] = _parse_value(key, parser, given[key]) if key in given else default
    exp.update({k: v for k, v in (overrides or {}).items() if v is not None})
    for key, (_, _, ok) in EXPERIMENT_KEYS.items():
        value = exp[key]
        if isinstance(value, float) and not math.isfinite(value):
            raise ConfigError(f"{key} must be finite")
        if ok is not None and not ok(value):
            raise ConfigError(f"{key} = {value!r} is out of range")

    out = dict(OUTPUT_KEYS)
    if cp.has_section("output"):
        given = dict(cp["output"])
        unknown = set(given) - set(OUTPUT_KEYS)
        if unknown:
            raise ConfigError(f"unknown [output] keys: {sorted(unknown)}")
        out.update(given)
    return ExperimentConfig(law, exp, out)


def load_config(path, overrides=None) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, overrides)


def config_from_resolved(resolved, workers=1) -> ExperimentConfig:
    """Rebuild a configuration from the ``config`` block of a report."""
    lines = []
    if resolved.get("law"):
        lines.append("[law]")
        for k, v in resolved["law"].items():
            lines.append(f"{k} = {json.dumps(v) if isinstance(v, list) else v}")
    lines.append("[experiment]")
    for k, v in resolved["experiment"].items():
        if v is None:
            continue
        lines.append(f"{k} = {json.dumps(v) if isinstance(v, list) else v}")
    lines.append("[output]")
    lines.extend(f"{k} = {v}" for k, v in resolved["output"].items())
    return parse_config("\n".join(lines), {"workers": workers})
