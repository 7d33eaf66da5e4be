"""JSON run configuration for the simulation CLI."""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field

from .mrp import MrpModelSpec
from .simstudy import (
    KnownProportionsSettings, PopulationSettings, SamplingSettings, SimGrid, WeightingSettings,
)

SEED_ENV = "PH_SEED"


class ConfigError(ValueError):
    pass


def _build(cls, data, where, skip=()):
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be a JSON object")
    names = {f.name for f in dataclasses.fields(cls)} - set(skip)
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")
    kwargs = {k: tuple(v) if isinstance(v, list) else v for k, v in data.items()}
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"{where}: {err}") from None


def _plain(obj):
    if isinstance(obj, tuple):
        return [_plain(v) for v in obj]
    if hasattr(obj, "value"):
        return obj.value
    return obj


def _dump(dc, skip=()):
    return {f.name: _plain(getattr(dc, f.name)) for f in dataclasses.fields(dc)
            if f.name not in skip}


_GRID_KEYS = ("conditions", "p_nb_male_values", "representations", "methods", "estimators",
              "replicates", "base_seed")


@dataclass(frozen=True)
class RunConfig:
    grid: SimGrid = field(default_factory=SimGrid)
    output_dir: str = "results"
    workers: int | None = None

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        sections = {
            "population": PopulationSettings, "sampling": SamplingSettings,
            "weighting": WeightingSettings, "known_proportions": KnownProportionsSettings,
        }
        unknown = sorted(set(data) - set(sections) - {"grid", "mrp", "output_dir", "workers"})
        if unknown:
            raise ConfigError(f"unknown key(s) in config: {', '.join(unknown)}")
        parts = {name: _build(kind, data.get(name, {}), name) for name, kind in sections.items()}
        parts["mrp"] = _build(MrpModelSpec, data.get("mrp", {}), "mrp", skip=("seed",))
        grid_data = data.get("grid", {})
        if not isinstance(grid_data, dict):
            raise ConfigError("grid must be a JSON object")
        unknown = sorted(set(grid_data) - set(_GRID_KEYS))
        if unknown:
            raise ConfigError(f"unknown key(s) in grid: {', '.join(unknown)}")
        grid = _build(SimGrid, {**grid_data, **parts}, "grid")
        workers = data.get("workers")
        if workers is not None and (not isinstance(workers, int) or workers < 1):
            raise ConfigError("workers must be a positive integer or null")
        out = data.get("output_dir", "results")
        if not isinstance(out, str) or not out:
            raise ConfigError("output_dir must be a nonempty string")
        return cls(grid, out, workers)

    @classmethod
    def load(cls, path, env=None) -> "RunConfig":
        """Read a JSON config; ``PH_SEED`` in ``env`` overrides the base seed.

        Raises ``OSError`` when the file cannot be read and ``ConfigError``
        when it does not validate.
        """
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
        try:
            data = json.loads(text)
        except json.JSONDecodeError as err:
            raise ConfigError(f"{path}: invalid JSON at line {err.lineno}: {err.msg}") from None
        cfg = cls.from_dict(data)
        env = os.environ if env is None else env
        if env.get(SEED_ENV):
            try:
                seed = int(env[SEED_ENV])
            except ValueError:
                raise ConfigError(f"{SEED_ENV} must be an integer, got {env[SEED_ENV]!r}") from None
            cfg = dataclasses.replace(cfg, grid=dataclasses.replace(cfg.grid, base_seed=seed))
        return cfg

    def to_dict(self) -> dict:
        g = self.grid
        return {
            "grid": {k: _plain(getattr(g, k)) for k in _GRID_KEYS},
            "population": _dump(g.population),
            "sampling": _dump(g.sampling),
            "weighting": _dump(g.weighting),
            "mrp": _dump(g.mrp, skip=("seed",)),
            "known_proportions": _dump(g.known_proportions),
            "output_dir": self.output_dir,
            "workers": self.workers,
        }
