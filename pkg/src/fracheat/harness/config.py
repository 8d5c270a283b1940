"""Experiment configuration: one JSON document, top-level fields overridable from the CLI."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

from ..gridfn import GridSpec, make_grid

KINDS = ("norms", "semigroup-rates", "kernel-check", "interp-check", "hardy-check", "solve",
         "threshold", "acceptance")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    kind: str
    grid: Mapping[str, Any] = field(default_factory=lambda: {"dim": 1, "L": 16.0, "M": 1024})
    params: Mapping[str, Any] = field(default_factory=dict)
    seed: int = 0
    output_dir: str = "out"

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ConfigError(f"unknown kind {self.kind!r}; expected one of {', '.join(KINDS)}")
        if not isinstance(self.name, str) or not self.name:
            raise ConfigError("name must be a non-empty string")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool):
            raise ConfigError("seed must be an integer")
        missing = {"dim", "L", "M"} - set(self.grid)
        if missing:
            raise ConfigError(f"grid is missing {', '.join(sorted(missing))}")

    def grid_spec(self) -> GridSpec:
        try:
            return make_grid(int(self.grid["dim"]), float(self.grid["L"]), int(self.grid["M"]))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid grid: {exc}") from exc

    def param(self, key: str, default: Any = None) -> Any:
        return self.params.get(key, default)

    def with_overrides(self, output_dir: str | None = None, seed: int | None = None,
                       grid_M: int | None = None, grid_L: float | None = None) -> ExperimentConfig:
        grid = dict(self.grid)
        if grid_M is not None:
            grid["M"] = grid_M
        if grid_L is not None:
            grid["L"] = grid_L
        return replace(self, grid=grid,
                       output_dir=self.output_dir if output_dir is None else output_dir,
                       seed=self.seed if seed is None else seed)


def parse_config(doc: Mapping[str, Any], kind: str | None = None) -> ExperimentConfig:
    if not isinstance(doc, Mapping):
        raise ConfigError("config must be a JSON object")
    known = {"name", "kind", "grid", "params", "seed", "output_dir"}
    extra = set(doc) - known
    if extra:
        raise ConfigError(f"unknown config fields: {', '.join(sorted(extra))}")
    k = doc.get("kind", kind)
    if kind is not None and k != kind:
        raise ConfigError(f"config kind {k!r} does not match command {kind!r}")
    if k is None:
        raise ConfigError("config has no kind")
    kw = {key: doc[key] for key in ("grid", "params", "seed", "output_dir") if key in doc}
    if "params" in kw and not isinstance(kw["params"], Mapping):
        raise ConfigError("params must be an object")
    if "grid" in kw and not isinstance(kw["grid"], Mapping):
        raise ConfigError("grid must be an object")
    return ExperimentConfig(name=doc.get("name", k), kind=k, **kw)


def load_config(path: str | Path, kind: str | None = None) -> ExperimentConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return parse_config(doc, kind)
