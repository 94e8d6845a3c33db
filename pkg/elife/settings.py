"""Resolves the run configuration from command-line flags and an optional
JSON config file."""

import collections
import json
import os


class ArgumentError(Exception):
    pass


RunConfig = collections.namedtuple("RunConfig", [
    "command", "data", "columns", "unit", "family", "null", "alt",
    "thresh", "thresholds", "params", "n", "scheme", "lower", "upper",
    "lower2", "upper2", "B", "seed", "psi_grid", "level", "kind", "method",
    "times", "pool_min", "granularity", "jobs", "output", "svg", "csv",
])

DEFAULTS = {
    "data": None,
    "columns": None,
    "unit": "years",
    "family": None,
    "null": None,
    "alt": None,
    "thresh": 0.0,
    "thresholds": None,
    "params": None,
    "n": None,
    "scheme": "none",
    "lower": None,
    "upper": None,
    "lower2": None,
    "upper2": None,
    "B": 999,
    "seed": None,
    "psi_grid": None,
    "level": 0.95,
    "kind": "pp",
    "method": "wald",
    "times": None,
    "pool_min": 5.0,
    "granularity": 1.0,
    "jobs": 1,
    "output": None,
    "svg": None,
    "csv": None,
}

PARAM_FLAGS = ("scale", "shape", "beta", "alpha", "nu", "lambda")

REQUIRED = {
    "fit": ("data", "family"),
    "npmle": ("data",),
    "anova": ("data", "null", "alt"),
    "tstab": ("data", "thresholds"),
    "ncscore": ("data", "thresholds"),
    "profile-endpoint": ("data",),
    "hazard": ("data", "family", "times"),
    "sample": ("family", "n", "params"),
    "boot-lrt": ("data", "null", "alt"),
    "gof": ("data", "family"),
    "strata": ("data", "family"),
    "chisq-gof": ("data", "family"),
}

STOCHASTIC = ("sample", "boot-lrt", "chisq-gof")


def _read_config(path):
    if not os.path.isfile(path):
        raise ArgumentError("Missing config file {}".format(path))
    try:
        with open(path, encoding="utf-8") as f:
            values = json.load(f)
    except (OSError, ValueError) as e:
        raise ArgumentError("Cannot read config file {}: {}".format(path, e))
    if not isinstance(values, dict):
        raise ArgumentError("Config file {} must hold a JSON object"
                            .format(path))
    unknown = sorted(set(values) - set(DEFAULTS))
    if unknown:
        raise ArgumentError("Unknown config keys: {}".format(
            ", ".join(unknown)))
    return values


def _columns(pairs):
    if pairs is None or isinstance(pairs, dict):
        return pairs
    columns = {}
    for pair in pairs:
        field, sep, column = pair.partition("=")
        if not sep or not field or not column:
            raise ArgumentError(
                "Column mappings look like FIELD=COLUMN, got {!r}"
                .format(pair)
            )
        columns[field] = column
    return columns


def _params(parsed):
    given = {name: parsed.get(name) for name in PARAM_FLAGS}
    given = {k: v for k, v in given.items() if v is not None}
    return given or None


def build(parsed, config_path=None):
    """Merge the config file with the flags; flags that were given win."""
    parsed = dict(vars(parsed)) if not isinstance(parsed, dict) else parsed
    command = parsed.get("command")
    if command not in REQUIRED:
        raise ArgumentError("Unknown command {!r}".format(command))
    values = dict(DEFAULTS)
    if config_path:
        values.update(_read_config(config_path))
    flags = {k: parsed.get(k) for k in DEFAULTS}
    flags["params"] = _params(parsed)
    values.update({k: v for k, v in flags.items() if v is not None})
    values["columns"] = _columns(values["columns"])

    missing = [k for k in REQUIRED[command] if values.get(k) is None]
    if missing:
        raise ArgumentError(
            "Command {} needs {}".format(
                command, ", ".join("--" + k.replace("_", "-")
                                   for k in missing))
        )
    if command in STOCHASTIC and values["seed"] is None:
        raise ArgumentError(
            "Command {} is stochastic and needs --seed".format(command)
        )
    if not 0 < float(values["level"]) < 1:
        raise ArgumentError("--level must lie in (0, 1)")
    if int(values["jobs"]) < 1:
        raise ArgumentError("--jobs must be at least 1")

    return RunConfig(command=command, **values)
