"""End-to-end workflows behind the command line.

Each workflow takes an ``ExperimentConfig`` and writes its outputs (CSV,
JSON, SVG) into ``output_dir``. Outputs depend only on the config and seed.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from esnfi import io
from esnfi.basis import BasisDecomposition, fit_pca, project
from esnfi.config import ConfigError, ExperimentConfig
from esnfi.fields import (
    SpatioTemporalField,
    apply_climatology,
    apply_standardization,
    compute_climatology,
    parse_month,
    standardize,
)
from esnfi.importance import (
    PC_RMSE,
    SPATIAL_RMSE,
    WEIGHTED_SPATIAL_RMSE,
    ImportanceQuery,
    MetricSpec,
    compute_importance,
    latitude_weights,
    metric_columns,
)
from esnfi.plotting import export_plot, lines_from_importance_rows
from esnfi.reservoir import EsnModel, fit, forecast, model_to_dict, save_model
from esnfi.simulator import run_study, simulate_dataset

log = logging.getLogger(__name__)


class WorkflowError(ValueError):
    pass


@dataclass
class PreparedData:
    names: list            # input variable names, in input-row order
    response_name: str
    fields: dict           # preprocessed fields by name
    bases: dict            # BasisDecomposition by name
    X: np.ndarray          # P x T inputs
    Y: np.ndarray          # Q x T response coefficients
    input_sizes: tuple
    times: tuple


def _stage(name):
    def wrap(fn):
        def inner(*args, **kwargs):
            try:
                return fn(*args, **kwargs)
            except (ValueError, KeyError) as exc:
                if isinstance(exc, WorkflowError):
                    raise
                raise WorkflowError(f"{name}: {exc}") from exc
        inner.__name__ = fn.__name__
        inner.__doc__ = fn.__doc__
        return inner
    return wrap


@_stage("ingest")
def load_fields(cfg: ExperimentConfig) -> dict:
    if cfg.data is None:
        raise ConfigError("this workflow needs a 'data' section")
    raw = {}
    for src in list(cfg.data.inputs) + [cfg.data.response]:
        if src.name in raw:
            continue
        raw[src.name] = io.ingest_gridded_csv(cfg.resolve(src.path), src.name)
    first = next(iter(raw.values()))
    for name, f in raw.items():
        if f.times != first.times or not np.array_equal(f.locations, first.locations):
            raise WorkflowError(f"ingest: variable {name!r} is not on the same grid/times as the others")
    return raw


def _year_or_time(label) -> int:
    return parse_month(label)[0] if isinstance(label, str) else int(label)


def _fit_preprocess(kind: str, field: SpatioTemporalField):
    if kind == "climatology":
        return compute_climatology(field)
    if kind == "standardize":
        return standardize(field)
    return field, None


def _apply_preprocess(kind: str, field: SpatioTemporalField, stats):
    if kind == "climatology":
        return apply_climatology(field, stats)
    if kind == "standardize":
        return apply_standardization(field, stats)
    return field


@_stage("preprocess")
def prepare(cfg: ExperimentConfig, raw: dict, train_index: Optional[np.ndarray] = None) -> PreparedData:
    """Preprocess every variable, reduce to PCs and stack model inputs.

    With ``train_index`` the preprocessing statistics and PCA bases are
    estimated on those time columns only and applied to the full record.
    """
    kind = cfg.data.preprocess
    fields, bases = {}, {}
    for name, f in raw.items():
        fit_on = f if train_index is None else f.subset_times(train_index)
        pre_train, stats = _fit_preprocess(kind, fit_on)
        full = pre_train if train_index is None else _apply_preprocess(kind, f, stats)
        fields[name] = full
        basis = fit_pca(pre_train, cfg.retained_for(name))
        bases[name] = basis
    names = [s.name for s in cfg.data.inputs]
    X = np.vstack([project(bases[n], fields[n]) for n in names])
    rname = cfg.data.response.name
    Y = project(bases[rname], fields[rname])
    sizes = tuple(bases[n].retained for n in names)
    return PreparedData(names, rname, fields, bases, X, Y, sizes, fields[rname].times)


def metric_for(cfg: ExperimentConfig, data: PreparedData) -> MetricSpec:
    basis = data.bases[data.response_name]
    if cfg.metric == PC_RMSE:
        return MetricSpec(PC_RMSE)
    if cfg.metric == SPATIAL_RMSE:
        return MetricSpec(SPATIAL_RMSE, basis=basis)
    lats = data.fields[data.response_name].locations[:, 0]
    return MetricSpec(WEIGHTED_SPATIAL_RMSE, basis=basis, weights=latitude_weights(lats))


def _observed(metric: MetricSpec, data: PreparedData) -> np.ndarray:
    if metric.kind == PC_RMSE:
        return data.Y
    return data.fields[data.response_name].values


def _metadata(cfg: ExperimentConfig, data: Optional[PreparedData] = None, **extra) -> dict:
    meta = {f"esn.{k}": v for k, v in asdict(cfg.esn).items()}
    meta["seed"] = cfg.seed
    if data is not None:
        meta["inputs"] = ";".join(data.names)
        meta["response"] = data.response_name
        for n, b in data.bases.items():
            meta[f"retained.{n}"] = b.retained
        meta["preprocess"] = cfg.data.preprocess
    meta.update(extra)
    return meta


@_stage("fit")
def fit_model(cfg: ExperimentConfig, data: PreparedData, train_cols: Optional[np.ndarray] = None) -> EsnModel:
    X, Y = data.X, data.Y
    if train_cols is not None:
        X, Y = X[:, train_cols], Y[:, train_cols]
    return fit(cfg.esn, X, Y, input_sizes=data.input_sizes)


def run_fit(cfg: ExperimentConfig, output_dir) -> Path:
    raw = load_fields(cfg)
    data = prepare(cfg, raw)
    model = fit_model(cfg, data)
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_model(model, out / "model.json")
    log.info("fitted ESN: sigma2=%.6g", model.sigma2)
    return out / "model.json"


@_stage("importance")
def importance_entries(cfg: ExperimentConfig, model: EsnModel, data: PreparedData) -> list:
    metric = metric_for(cfg, data)
    observed = _observed(metric, data)
    ss = np.random.SeedSequence(cfg.seed)
    entries = []
    for k, name in enumerate(data.names):
        for method in cfg.methods:
            for b in cfg.block_sizes:
                child = np.random.SeedSequence(ss.entropy, spawn_key=(k, b))
                q = ImportanceQuery(k, b, method, cfg.replications, int(child.generate_state(1)[0]))
                entries.append((name, compute_importance(model, data.X, observed, q, metric)))
    return entries


def run_climate_workflow(cfg: ExperimentConfig, output_dir, plot: bool = True) -> dict:
    """Preprocess, reduce, fit on the full record and compute FI for every input.

    Writes ``importance.csv`` and, with ``plot``, ``importance.svg``.
    """
    raw = load_fields(cfg)
    data = prepare(cfg, raw)
    model = fit_model(cfg, data)
    entries = importance_entries(cfg, model, data)
    out = Path(output_dir)
    meta = _metadata(cfg, data, metric=cfg.metric, replications=cfg.replications,
                     sigma2=model.sigma2)
    csv_path = io.write_importance_csv(out / "importance.csv", entries, meta, time_labels=data.times)
    written = {"importance": csv_path}
    if plot:
        m, header, rows = io.read_csv_with_metadata(csv_path)
        written["plot"] = _plot_rows(header, rows, out / "importance.svg", cfg.plot.markers,
                                     cfg.plot.title or "feature importance")
    return written


def _plot_rows(header, rows, path, markers, title, ylabel="importance"):
    lines, labels, numeric = lines_from_importance_rows(header, rows)
    if numeric:
        mk = [float(m) for m in markers]
    else:
        pos = {lab: i + 1 for i, lab in enumerate(labels)}
        missing = [m for m in markers if str(m) not in pos]
        if missing:
            raise WorkflowError(f"plot marker {missing[0]!r} is not a forecast time label")
        mk = [pos[str(m)] for m in markers]
    return export_plot(lines, path, mk, title=title, ylabel=ylabel)


@dataclass
class RmseReport:
    split: int
    times: list
    sets: list
    rmse: np.ndarray


@_stage("evaluate")
def evaluate_split(cfg: ExperimentConfig, raw: dict, split: int) -> RmseReport:
    """Fit on times up to ``split`` (a year for monthly data), forecast everything."""
    first = next(iter(raw.values()))
    periods = np.array([_year_or_time(t) for t in first.times])
    if not periods.min() <= split <= periods.max():
        raise WorkflowError(f"split {split} outside the data span {periods.min()}..{periods.max()}")
    train = np.flatnonzero(periods <= split)
    data = prepare(cfg, raw, train_index=train)
    model = fit_model(cfg, data, train_cols=train)
    yhat = forecast(model, data.X)
    ff = model.first_forecast_time
    cols = np.arange(ff - 1, data.X.shape[1])
    metric = MetricSpec(SPATIAL_RMSE, basis=data.bases[data.response_name])
    rmse = metric_columns(metric, data.fields[data.response_name].values[:, cols], yhat)
    sets = ["train" if periods[c] <= split else "test" for c in cols]
    return RmseReport(split, [data.times[c] for c in cols], sets, rmse)


def run_evaluation(cfg: ExperimentConfig, output_dir) -> list:
    if not cfg.split_years:
        raise ConfigError("evaluate needs a nonempty 'split_years' list")
    raw = load_fields(cfg)
    reports = [evaluate_split(cfg, raw, s) for s in cfg.split_years]
    out = Path(output_dir)
    io.write_rmse_csv(out / "rmse.csv", reports, _metadata(cfg))
    return reports


def run_simulate(cfg: ExperimentConfig, output_dir) -> list:
    if cfg.sim is None:
        raise ConfigError("simulate needs a 'sim' section")
    out = Path(output_dir)
    written = []
    for i in range(cfg.sim.n_datasets):
        d = simulate_dataset(cfg.sim, i)
        sub = out / f"dataset_{i:03d}"
        for f in (d.Z1, d.Z2, d.ZY):
            p = sub / f"{f.variable_name}.csv"
            io.export_gridded_csv(f, p)
            written.append(p)
    return written


def run_study_workflow(cfg: ExperimentConfig, output_dir) -> list:
    if cfg.study is None:
        raise ConfigError("study needs a 'study' section")
    Path(output_dir).mkdir(parents=True, exist_ok=True)
    results = run_study(cfg.study, cfg.esn, threads=cfg.threads, output_dir=output_dir)
    return [Path(output_dir) / io.study_filename(r.config) for r in results]


def run_plot(cfg: ExperimentConfig, output_dir, input_path=None) -> Path:
    src = input_path or cfg.plot.input
    if src is None:
        raise ConfigError("plot needs an input CSV (--input or plot.input)")
    src = cfg.resolve(src) if input_path is None else Path(src)
    _, header, rows = io.read_csv_with_metadata(src)
    if not rows:
        raise WorkflowError(f"{src}: no rows to plot")
    out = Path(output_dir) / (Path(src).stem + ".svg")
    if header[:4] == io.RMSE_HEADER:
        lines = {}
        for split, t, tag, v in rows:
            lines.setdefault(f"split {split}", ([], []))
            lines[f"split {split}"][0].append(t)
            lines[f"split {split}"][1].append(float(v))
        labels = sorted({t for _, (ts, _) in lines.items() for t in ts},
                        key=lambda s: (0, int(s), "") if s.isdigit() else (1, 0, s))
        pos = {lab: i + 1 for i, lab in enumerate(labels)}
        series = [(k, [pos[t] for t in ts], ys) for k, (ts, ys) in lines.items()]
        return export_plot(series, out, title=cfg.plot.title or "RMSE", ylabel="RMSE")
    return _plot_rows(header, rows, out, cfg.plot.markers, cfg.plot.title or "feature importance")


def model_summary(model: EsnModel) -> dict:
    doc = model_to_dict(model)
    return {k: doc[k] for k in ("hyperparams", "input_dim", "output_dim", "input_sizes",
                                "lambda_w", "sigma2")}
