"""Experiment configuration: flat INI files with strict validation.

Every run is driven by a config file; unknown sections or keys are
rejected outright so typos cannot silently change an experiment.  Seeds
are mandatory -- nothing draws entropy from the environment.  The
resolved configuration (after command-line overrides) is written into
every output directory together with the tool version, and re-running
from that file reproduces the outputs byte for byte.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError

REQUIRED = object()

# section -> key -> (type, default); REQUIRED means the command must set it
SCHEMA = {
    "meta": {
        "version": (str, ""),
        "command": (str, ""),
    },
    "process": {
        "kind": (str, "frozen_brownian"),       # frozen_brownian | kunita
        "variance": (float, 1.0),
        "lengthscale": (float, 1.0),
    },
    "grid": {
        "t0": (float, 0.0),
        "t1": (float, 1.0),
        "steps": (int, 100),
    },
    "sampler": {
        "n_paths": (int, 100),
        "seed": (int, REQUIRED),
    },
    "shapes": {
        "start": (str, REQUIRED),
        "end": (str, ""),
    },
    "likelihood": {
        "mode": (str, "variance_profile"),      # full_gaussian | variance_profile
        "proposal": (str, "reverse_analytic"),  # reverse_analytic | forward_analytic | reverse_learned
        "guard_steps": (int, 2),
        "checkpoint": (str, ""),
    },
    "train": {
        "iterations": (int, 1500),
        "paths_per_iter": (int, 8),
        "learning_rate": (float, 1e-3),
        "v_min": (float, 0.0),                  # 0 means: use process variance
        "v_max": (float, 0.0),
        "guard_steps": (int, 2),
    },
    "sweep": {
        "v_min": (float, REQUIRED),
        "v_max": (float, REQUIRED),
        "v_count": (int, 25),
        "spacing": (str, "linear"),             # linear | log
        "methods": (str, "is_profile"),         # comma list: is_profile,is_full,analytic,stable_analytic
    },
    "infer_variance": {
        "init_v": (float, REQUIRED),
        "tolerance": (float, 1e-4),
        "max_iterations": (int, 60),
    },
    "diffusion_mean": {
        "observations": (str, REQUIRED),        # semicolon-separated shape specs
        "variance": (float, 1.0),
        "tolerance": (float, 1e-3),
        "max_iterations": (int, 80),
        "fresh_noise": (bool, False),
    },
    "align": {
        "reference": (str, REQUIRED),
        "targets": (str, REQUIRED),             # semicolon-separated CSV paths
    },
    "resample": {
        "input": (str, REQUIRED),
        "count": (int, REQUIRED),
    },
}

COMMAND_SECTIONS = {
    "simulate": ["process", "grid", "sampler", "shapes"],
    "train-score": ["process", "grid", "sampler", "shapes", "train"],
    "sample-bridge": ["process", "grid", "sampler", "shapes", "likelihood"],
    "loglik-sweep": ["process", "grid", "sampler", "shapes", "likelihood", "sweep"],
    "infer-variance": ["process", "grid", "sampler", "shapes", "likelihood",
                       "infer_variance"],
    "diffusion-mean": ["process", "grid", "sampler", "shapes", "likelihood",
                       "diffusion_mean"],
    "align": ["align"],
    "resample": ["resample"],
}


@dataclass
class ExperimentConfig:
    """Typed view of one experiment's settings."""

    command: str
    values: dict     # section -> key -> typed value

    def __getitem__(self, section: str) -> dict:
        return self.values[section]

    def get(self, section: str, key: str):
        return self.values[section][key]


def _coerce(raw: str, typ, where: str):
    try:
        if typ is bool:
            lowered = raw.strip().lower()
            if lowered in ("true", "yes", "1"):
                return True
            if lowered in ("false", "no", "0"):
                return False
            raise ValueError(raw)
        return typ(raw)
    except ValueError as exc:
        raise ConfigError(f"{where}: cannot parse {raw!r} as {typ.__name__}") from exc


def load_config(path, command: str, overrides: dict | None = None) -> ExperimentConfig:
    """Parse and validate an INI config for one command.

    `overrides` maps (section, key) to replacement values (already typed);
    used for the --seed/--mode/--threads command-line flags.
    """
    if command not in COMMAND_SECTIONS:
        raise ConfigError(f"unknown command {command!r}")
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc

    allowed = set(COMMAND_SECTIONS[command]) | {"meta"}
    values: dict = {}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        if section not in allowed:
            raise ConfigError(f"section [{section}] does not apply to {command}")
        values[section] = {}
        for key, raw in parser.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            typ, _default = SCHEMA[section][key]
            values[section][key] = _coerce(raw, typ, f"[{section}] {key}")

    for section in COMMAND_SECTIONS[command]:
        values.setdefault(section, {})
        for key, (typ, default) in SCHEMA[section].items():
            if key in values[section]:
                continue
            if default is REQUIRED:
                raise ConfigError(f"{command} requires [{section}] {key}")
            values[section][key] = default

    for (section, key), val in (overrides or {}).items():
        if section in values:
            values[section][key] = val

    meta = values.setdefault("meta", {})
    meta["command"] = command
    from . import __version__
    meta["version"] = __version__
    return ExperimentConfig(command=command, values=values)


def write_config(config: ExperimentConfig, path) -> None:
    """Emit the resolved config; stable key order for byte-identical reruns."""
    parser = configparser.ConfigParser(interpolation=None)
    for section in SCHEMA:
        if section not in config.values:
            continue
        parser.add_section(section)
        for key in SCHEMA[section]:
            if key in config.values[section]:
                value = config.values[section][key]
                if isinstance(value, float):
                    parser.set(section, key, format(value, ".17g"))
                else:
                    parser.set(section, key, str(value))
    with open(path, "w") as fh:
        parser.write(fh)


def parse_shape_spec(spec: str):
    """Shape sources: a landmark CSV path or 'synth:<kind>:<n>[:k=v...]'.

    Example: synth:blob:20:seed=3:amplitude=0.2
    """
    from .shapes import load_landmarks_csv, synth_shape

    if not spec:
        raise ConfigError("empty shape specification")
    if not spec.startswith("synth:"):
        if not Path(spec).exists():
            raise ConfigError(f"landmark CSV not found: {spec}")
        return load_landmarks_csv(spec)
    parts = spec.split(":")
    if len(parts) < 3:
        raise ConfigError(f"malformed synth shape spec {spec!r}")
    kind = parts[1]
    try:
        n = int(parts[2])
    except ValueError as exc:
        raise ConfigError(f"synth shape count must be an integer in {spec!r}") from exc
    params: dict = {}
    seed = 0
    for item in parts[3:]:
        if "=" not in item:
            raise ConfigError(f"malformed synth parameter {item!r} in {spec!r}")
        key, _, raw = item.partition("=")
        if key == "seed":
            seed = int(raw)
        elif key in ("radius", "a", "b", "amplitude"):
            params[key] = float(raw)
        else:
            raise ConfigError(f"unknown synth parameter {key!r} in {spec!r}")
    try:
        return synth_shape(kind, n, params, seed)
    except Exception as exc:
        raise ConfigError(f"cannot build synth shape {spec!r}: {exc}") from exc
