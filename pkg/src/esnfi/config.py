"""JSON experiment configuration. Unknown keys are rejected at every level."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from esnfi.importance import METHODS, METRIC_KINDS, WEIGHTED_SPATIAL_RMSE
from esnfi.reservoir import EsnHyperparams
from esnfi.simulator import SimConfig, StudyGrid

WORKFLOWS = ("simulate", "study", "fit", "importance", "evaluate", "plot")
PREPROCESS = ("climatology", "standardize", "none")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DataSource:
    name: str
    path: str


@dataclass(frozen=True)
class DataConfig:
    """Input variables and the response, each a gridded CSV.

    The response may also appear among the inputs, in which case its own
    lagged values feed the forecast.
    """

    inputs: tuple
    response: DataSource
    preprocess: str = "climatology"


@dataclass(frozen=True)
class PlotConfig:
    input: Optional[str] = None
    markers: tuple = ()
    title: str = ""


@dataclass
class ExperimentConfig:
    workflow: Optional[str] = None
    seed: int = 0
    threads: int = 1
    output: str = "output"
    esn: EsnHyperparams = field(default_factory=EsnHyperparams)
    sim: Optional[SimConfig] = None
    study: Optional[StudyGrid] = None
    data: Optional[DataConfig] = None
    retained: Any = 5
    metric: str = WEIGHTED_SPATIAL_RMSE
    block_sizes: tuple = (3,)
    methods: tuple = METHODS
    replications: int = 10
    split_years: tuple = ()
    plot: PlotConfig = field(default_factory=PlotConfig)
    base_dir: str = "."

    def retained_for(self, name: str) -> int:
        if isinstance(self.retained, dict):
            if name not in self.retained:
                raise ConfigError(f"retained has no entry for variable {name!r}")
            return int(self.retained[name])
        return int(self.retained)

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else Path(self.base_dir) / p


def _build(cls, doc, where: str, **overrides):
    if not isinstance(doc, dict):
        raise ConfigError(f"{where} must be a JSON object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(doc) - names)
    if unknown:
        raise ConfigError(f"unknown key {unknown[0]!r} in {where}")
    kwargs = dict(doc)
    for k, v in overrides.items():
        kwargs.setdefault(k, v)
    for k, v in list(kwargs.items()):
        if isinstance(v, list):
            kwargs[k] = tuple(v)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _source(doc, where):
    return _build(DataSource, doc, where)


def config_from_dict(doc: dict, base_dir=".", seed: Optional[int] = None) -> ExperimentConfig:
    """Validate a config document. ``seed`` overrides the document's seed."""
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    top = {f.name for f in dataclasses.fields(ExperimentConfig)} - {"base_dir"}
    unknown = sorted(set(doc) - top)
    if unknown:
        raise ConfigError(f"unknown key {unknown[0]!r} in config")
    d = dict(doc)
    if seed is not None:
        d["seed"] = seed
    s = int(d.get("seed", 0))
    if s < 0:
        raise ConfigError("seed must be nonnegative")
    kwargs: dict = {"seed": s, "base_dir": str(base_dir)}
    if "workflow" in d:
        if d["workflow"] not in WORKFLOWS:
            raise ConfigError(f"workflow must be one of {WORKFLOWS}")
        kwargs["workflow"] = d["workflow"]
    for key in ("threads", "replications"):
        if key in d:
            kwargs[key] = int(d[key])
            if kwargs[key] < 1:
                raise ConfigError(f"{key} must be at least 1")
    if "output" in d:
        kwargs["output"] = str(d["output"])
    kwargs["esn"] = _build(EsnHyperparams, d.get("esn", {}), "esn", seed=s)
    if "sim" in d:
        kwargs["sim"] = _build(SimConfig, d["sim"], "sim", seed=s)
    if "study" in d:
        kwargs["study"] = _build(StudyGrid, d["study"], "study", seed=s)
    if "data" in d:
        data = d["data"]
        if not isinstance(data, dict):
            raise ConfigError("data must be a JSON object")
        unknown = sorted(set(data) - {"inputs", "response", "preprocess"})
        if unknown:
            raise ConfigError(f"unknown key {unknown[0]!r} in data")
        if "inputs" not in data or "response" not in data:
            raise ConfigError("data needs 'inputs' and 'response'")
        inputs = tuple(_source(x, f"data.inputs[{i}]") for i, x in enumerate(data["inputs"]))
        if not inputs:
            raise ConfigError("data.inputs must list at least one variable")
        names = [x.name for x in inputs]
        if len(set(names)) != len(names):
            raise ConfigError("data.inputs names must be unique")
        pre = data.get("preprocess", "climatology")
        if pre not in PREPROCESS:
            raise ConfigError(f"data.preprocess must be one of {PREPROCESS}")
        kwargs["data"] = DataConfig(inputs, _source(data["response"], "data.response"), pre)
    if "retained" in d:
        r = d["retained"]
        vals = r.values() if isinstance(r, dict) else [r]
        if any(not isinstance(v, int) or v < 1 for v in vals):
            raise ConfigError("retained PCs must be integers >= 1")
        kwargs["retained"] = r
    if "metric" in d:
        if d["metric"] not in METRIC_KINDS:
            raise ConfigError(f"metric must be one of {METRIC_KINDS}")
        kwargs["metric"] = d["metric"]
    if "block_sizes" in d:
        bs = tuple(int(b) for b in d["block_sizes"])
        if not bs or min(bs) < 1:
            raise ConfigError("block_sizes must be a nonempty list of integers >= 1")
        kwargs["block_sizes"] = bs
    if "methods" in d:
        ms = tuple(d["methods"])
        if not ms or any(m not in METHODS for m in ms):
            raise ConfigError(f"methods must be drawn from {METHODS}")
        kwargs["methods"] = ms
    if "split_years" in d:
        kwargs["split_years"] = tuple(int(y) for y in d["split_years"])
    if "plot" in d:
        kwargs["plot"] = _build(PlotConfig, d["plot"], "plot")
    return ExperimentConfig(**kwargs)


def load_config(path, seed: Optional[int] = None) -> ExperimentConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return config_from_dict(doc, base_dir=path.parent, seed=seed)
