"""Block-wise feature importance for ESN forecasts of spatio-temporal data.

For an input variable ``k``, a block size ``b`` and a forecast time ``s``,
the inputs ``x_k`` at times ``s - tau - b + 1 .. s - tau`` are either
shuffled within each time (stPFI) or set to zero (stZFI). The importance is
the increase of a forecast error metric at time ``s`` relative to the
unadjusted forecast. Values are signed; an adjustment can improve the fit.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from esnfi.basis import BasisDecomposition
from esnfi.kernels import recur_batch
from esnfi.reservoir import (
    EsnModel,
    ReservoirError,
    embedding_columns,
    readout,
    run_hidden_states,
)

PC_RMSE = "pc_rmse"
SPATIAL_RMSE = "spatial_rmse"
WEIGHTED_SPATIAL_RMSE = "weighted_spatial_rmse"
METRIC_KINDS = (PC_RMSE, SPATIAL_RMSE, WEIGHTED_SPATIAL_RMSE)

STPFI = "stPFI"
STZFI = "stZFI"
METHODS = (STPFI, STZFI)


class ImportanceError(ValueError):
    pass


@dataclass(frozen=True)
class MetricSpec:
    """Forecast error metric; smaller is better.

    ``pc_rmse`` compares coefficient vectors directly. The spatial kinds
    first map the predicted coefficients back to locations with ``basis``
    and compare against the observed field column.
    """

    kind: str = PC_RMSE
    basis: Optional[BasisDecomposition] = None
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in METRIC_KINDS:
            raise ImportanceError(f"unknown metric kind {self.kind!r}")
        if self.kind != PC_RMSE and self.basis is None:
            raise ImportanceError(f"{self.kind} needs a basis for back-transformation")
        if self.kind == WEIGHTED_SPATIAL_RMSE:
            if self.weights is None:
                raise ImportanceError("weighted_spatial_rmse needs weights")
            w = np.asarray(self.weights, dtype=np.float64)
            if w.shape != (self.basis.n_locations,):
                raise ImportanceError("weights must have one entry per location")
            if np.any(w < 0) or not np.any(w > 0):
                raise ImportanceError("weights must be nonnegative with a positive entry")
            object.__setattr__(self, "weights", w)


@dataclass(frozen=True)
class ImportanceQuery:
    """Which importance to compute.

    ``variable_index`` is 0-based. ``tau`` defaults to the model's lead.
    ``replications`` only matters for stPFI.
    """

    variable_index: int
    block_size: int = 1
    method: str = STZFI
    replications: int = 10
    rng_seed: int = 0
    tau: Optional[int] = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ImportanceError(f"unknown method {self.method!r}; use stPFI or stZFI")
        if self.block_size < 1:
            raise ImportanceError("block_size must be at least 1")
        if self.replications < 1:
            raise ImportanceError("replications must be at least 1")


@dataclass(frozen=True)
class ImportanceSeries:
    forecast_times: np.ndarray
    values: np.ndarray
    query: ImportanceQuery
    baseline: np.ndarray
    skipped_times: tuple = field(default=())

    def __post_init__(self):
        if not len(self.forecast_times) == len(self.values) == len(self.baseline):
            raise ImportanceError("forecast_times, values and baseline lengths differ")


# -- metrics ---------------------------------------------------------------

def latitude_weights(latitudes) -> np.ndarray:
    """``sqrt(cos(latitude))`` with latitudes in degrees; exactly 0 at the poles."""
    lat = np.asarray(latitudes, dtype=np.float64)
    if np.any(np.abs(lat) > 90) or not np.all(np.isfinite(lat)):
        raise ImportanceError("latitudes must lie in [-90, 90]")
    c = np.cos(lat * np.pi / 180.0)
    c[np.abs(lat) == 90] = 0.0
    return np.sqrt(np.clip(c, 0.0, None))


def weighted_error(observed, predicted, weights) -> float:
    """Weighted mean of per-location root squared errors (i.e. absolute errors)."""
    obs = np.asarray(observed, dtype=np.float64)
    pred = np.asarray(predicted, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if not obs.shape == pred.shape == w.shape:
        raise ImportanceError("observed, predicted and weights must have equal length")
    total = w.sum()
    if not total > 0:
        raise ImportanceError("weights sum to zero")
    rse = np.sqrt((obs - pred) ** 2)
    return float(np.sum(w * rse) / total)


def metric_columns(spec: MetricSpec, observed: np.ndarray, predicted: np.ndarray) -> np.ndarray:
    """Metric for each column pair. ``predicted`` is always on coefficient scale."""
    observed = np.asarray(observed, dtype=np.float64)
    predicted = np.asarray(predicted, dtype=np.float64)
    if spec.kind == PC_RMSE:
        if observed.shape != predicted.shape:
            raise ImportanceError(
                f"observed {observed.shape} and predicted {predicted.shape} differ"
            )
        return np.linalg.norm(observed - predicted, axis=0) / np.sqrt(observed.shape[0])
    basis = spec.basis
    if predicted.shape[0] != basis.retained:
        raise ImportanceError(f"predicted needs {basis.retained} coefficient rows")
    if observed.shape[0] != basis.n_locations or observed.shape[1:] != predicted.shape[1:]:
        raise ImportanceError("observed field column does not match the basis")
    recon = basis.basis @ predicted + basis.column_mean[:, None]
    if spec.kind == SPATIAL_RMSE:
        return np.linalg.norm(observed - recon, axis=0) / np.sqrt(observed.shape[0])
    w = spec.weights
    return (w @ np.sqrt((observed - recon) ** 2)) / w.sum()


def evaluate_metric(spec: MetricSpec, observed, predicted) -> float:
    """Metric between one observed vector and one predicted coefficient vector."""
    obs = np.asarray(observed, dtype=np.float64)
    pred = np.asarray(predicted, dtype=np.float64)
    if obs.ndim != 1 or pred.ndim != 1:
        raise ImportanceError("evaluate_metric takes two vectors")
    return float(metric_columns(spec, obs[:, None], pred[:, None])[0])


# -- input adjustments -----------------------------------------------------

def _variable_rows(k: int, n_rows: int, sizes: Sequence[int] | None) -> slice:
    sizes = tuple(sizes) if sizes else (n_rows,)
    if sum(sizes) != n_rows:
        raise ImportanceError(f"variable sizes {sizes} do not sum to {n_rows}")
    if not 0 <= k < len(sizes):
        raise ImportanceError(f"variable index {k} outside 0..{len(sizes) - 1}")
    start = sum(sizes[:k])
    return slice(start, start + sizes[k])


def _check_times(times, T: int) -> list:
    times = [int(t) for t in times]
    bad = [t for t in times if not 1 <= t <= T]
    if bad:
        raise ImportanceError(f"block time {bad[0]} outside 1..{T}")
    return times


def permute_block(inputs, k: int, times, rng: np.random.Generator,
                  sizes: Sequence[int] | None = None) -> np.ndarray:
    """Shuffle variable ``k``'s coefficients within each listed (1-based) time.

    Each time gets its own independent shuffle, drawn in the order given.
    """
    X = np.array(inputs, dtype=np.float64)
    rows = _variable_rows(k, X.shape[0], sizes)
    for t in _check_times(times, X.shape[1]):
        X[rows, t - 1] = rng.permutation(X[rows, t - 1])
    return X


def zero_block(inputs, k: int, times, sizes: Sequence[int] | None = None) -> np.ndarray:
    """Set variable ``k``'s coefficients to zero at each listed (1-based) time."""
    X = np.array(inputs, dtype=np.float64)
    rows = _variable_rows(k, X.shape[0], sizes)
    for t in _check_times(times, X.shape[1]):
        X[rows, t - 1] = 0.0
    return X


def replicate_rng(seed: int, forecast_time: int, replicate: int) -> np.random.Generator:
    """Independent stream for one (forecast time, replicate) pair."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(forecast_time), int(replicate)))
    return np.random.default_rng(ss)


def block_times(forecast_time: int, tau: int, block_size: int) -> list:
    """Input times adjusted for a forecast at ``forecast_time``, latest first."""
    t = forecast_time - tau
    return list(range(t, t - block_size, -1))


# -- importance ------------------------------------------------------------

def _adjusted_final_states(model: EsnModel, X: np.ndarray, H: np.ndarray,
                           Xadj: np.ndarray, starts: np.ndarray, steps: int) -> np.ndarray:
    """Hidden state at the end of each scenario's rerun.

    Scenario ``i`` reruns the recursion for times ``starts[i] .. starts[i] +
    steps - 1`` on ``Xadj[i]`` (``T x P``), starting from the unadjusted
    state just before ``starts[i]``. Earlier states cannot depend on the
    adjusted block, so this equals a rerun from the initial state.
    """
    hp = model.hyperparams
    ff = hp.first_forecast_time
    B = len(starts)
    u = starts[:, None] + np.arange(steps)[None, :]
    cols = embedding_columns(u.ravel(), hp.tau, hp.tau_star, hp.m).reshape(B, steps, hp.n_lags)
    live = u >= ff
    cols = np.where(live[:, :, None], cols, 0)
    E = Xadj[np.arange(B)[:, None, None], cols]          # (B, L, m+1, P)
    drive = E.reshape(B, steps, -1) @ model.reservoir.U.T
    drive[~live] = 0.0
    h0 = np.zeros((B, hp.n_h))
    prior = starts - 1 >= ff
    h0[prior] = H[:, starts[prior] - 1 - ff].T
    W = model.reservoir.scaled_w(hp.nu)
    states = recur_batch(W, np.ascontiguousarray(drive), h0)
    return states[:, -1, :]


def compute_importance(model: EsnModel, inputs, outputs, query: ImportanceQuery,
                       metric: MetricSpec) -> ImportanceSeries:
    """stPFI or stZFI for every forecast time with a complete block.

    Args:
        model: fitted ESN.
        inputs: ``P x T`` input coefficients used to drive the model.
        outputs: observed targets, ``Q x T`` coefficients for ``pc_rmse`` or
            an ``N x T`` field for the spatial metrics.
        query: variable, block size, method and RNG seed.
        metric: error metric.

    Forecast times whose block would reach before time 1 are skipped and
    listed in ``skipped_times``.
    """
    X = np.asarray(inputs, dtype=np.float64)
    Yobs = np.asarray(outputs, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != model.input_dim:
        raise ImportanceError(f"inputs must have {model.input_dim} rows")
    if Yobs.ndim != 2 or Yobs.shape[1] != X.shape[1]:
        raise ImportanceError("outputs must be 2-D with the same number of times as inputs")
    hp = model.hyperparams
    tau = hp.tau if query.tau is None else query.tau
    if tau != hp.tau:
        raise ImportanceError(f"query lead {tau} differs from the model lead {hp.tau}")
    try:
        rows = model.variable_slice(query.variable_index)
    except ReservoirError as exc:
        raise ImportanceError(str(exc)) from None
    T = X.shape[1]
    b = query.block_size
    ff = hp.first_forecast_time

    H = run_hidden_states(model.reservoir, hp, X)
    all_s = np.arange(ff, T + 1)
    ok = all_s - tau - b + 1 >= 1
    targets = all_s[ok]
    skipped = tuple(int(s) for s in all_s[~ok])
    if targets.size == 0:
        raise ImportanceError(f"block size {b} leaves no feasible forecast time")

    # baseline through the same truncated path, so a no-op adjustment gives exactly 0
    Xt = X.T
    h_base = _adjusted_final_states(model, X, H, np.broadcast_to(Xt, (targets.size,) + Xt.shape),
                                    targets - b + 1, b)
    baseline = metric_columns(metric, Yobs[:, targets - 1], readout(model, h_base.T))

    R = query.replications if query.method == STPFI else 1
    s_rep = np.repeat(targets, R)
    r_rep = np.tile(np.arange(R), targets.size)
    Xadj = np.broadcast_to(Xt, (s_rep.size,) + Xt.shape).copy()
    if query.method == STZFI:
        tt = np.arange(1, T + 1)
        last = s_rep - tau
        mask = (tt[None, :] <= last[:, None]) & (tt[None, :] > (last - b)[:, None])
        sub = Xadj[:, :, rows]
        sub[mask] = 0.0
        Xadj[:, :, rows] = sub
    else:
        for i, (s, r) in enumerate(zip(s_rep, r_rep)):
            rng = replicate_rng(query.rng_seed, s, r)
            for t in block_times(int(s), tau, b):
                Xadj[i, t - 1, rows] = rng.permutation(Xt[t - 1, rows])

    starts = s_rep - b + 1
    hfinal = _adjusted_final_states(model, X, H, Xadj, starts, b)
    yadj = readout(model, hfinal.T)
    adj_metric = metric_columns(metric, Yobs[:, s_rep - 1], yadj)
    # mean of differences rather than difference of means: exact 0 for no-op adjustments
    diffs = adj_metric.reshape(targets.size, R) - baseline[:, None]
    return ImportanceSeries(targets, diffs.mean(axis=1), query, baseline, skipped)


def average_importance(series: Sequence[ImportanceSeries]) -> ImportanceSeries:
    """Pointwise mean of series sharing a query (up to seed) and time axis."""
    series = list(series)
    if not series:
        raise ImportanceError("nothing to average")
    first = series[0]
    key = replace(first.query, rng_seed=0)
    for s in series[1:]:
        if replace(s.query, rng_seed=0) != key:
            raise ImportanceError("series have different queries")
        if not np.array_equal(s.forecast_times, first.forecast_times):
            raise ImportanceError("series have different forecast times")
    values = np.mean([s.values for s in series], axis=0)
    baseline = np.mean([s.baseline for s in series], axis=0)
    return ImportanceSeries(first.forecast_times.copy(), values, first.query, baseline,
                            first.skipped_times)
