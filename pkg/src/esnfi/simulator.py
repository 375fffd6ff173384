"""Synthetic spatio-temporal data with a known input-response relationship.

Two covariates follow a spatially correlated AR(1) recursion with Gaussian
bump means peaking at t=20 and t=45. The response is
``ZY = beta * Z2 + delta + eps`` where ``delta`` is a zero-mean AR(1) random
effect and ``eps`` is white noise, so ``Z1`` has no effect on the response.

``run_study`` fits an ESN to each simulated dataset and averages stPFI and
stZFI over datasets for every parameter combination.
"""

from __future__ import annotations

import itertools
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from esnfi.basis import fit_pca
from esnfi.fields import SpatioTemporalField, standardize
from esnfi.importance import (
    METHODS,
    SPATIAL_RMSE,
    ImportanceQuery,
    ImportanceSeries,
    MetricSpec,
    average_importance,
    compute_importance,
)
from esnfi.reservoir import EsnHyperparams, fit

log = logging.getLogger(__name__)

MEAN_CENTERS = {1: 20.0, 2: 45.0}
MEAN_WIDTH = 6.0
VARIABLES = ("Z1", "Z2")

# spawn-key tags for the per-dataset random streams
_TAG_Z1, _TAG_Z2, _TAG_DELTA, _TAG_EPS, _TAG_ESN, _TAG_FI = range(1, 7)


class SimulationError(ValueError):
    pass


@dataclass(frozen=True)
class SimConfig:
    """Parameters of the data-generating mechanism.

    The three standard deviations, the spatial ranges and the AR coefficients
    have no universal defaults and must be given.
    """

    sigma_z: float
    sigma_delta: float
    sigma_eps: float
    phi_z: float
    phi_delta: float
    rho_z: float
    rho_delta: float
    grid_side: int = 10
    T: int = 70
    beta: float = 1.0
    n_datasets: int = 50
    seed: int = 0

    def __post_init__(self):
        for name in ("sigma_z", "sigma_delta", "sigma_eps", "phi_z", "phi_delta"):
            if not getattr(self, name) > 0:
                raise SimulationError(f"{name} must be positive")
        if self.grid_side < 2:
            raise SimulationError("grid_side must be at least 2")
        if self.T < 1 or self.n_datasets < 1:
            raise SimulationError("T and n_datasets must be at least 1")

    @property
    def n_locations(self) -> int:
        return self.grid_side**2


@dataclass(frozen=True)
class SimDataset:
    Z1: SpatioTemporalField
    Z2: SpatioTemporalField
    ZY: SpatioTemporalField
    config: SimConfig
    dataset_index: int
    delta: np.ndarray
    eps: np.ndarray


def lattice_locations(grid_side: int) -> np.ndarray:
    """Equally spaced ``grid_side x grid_side`` lattice on the unit square, row-major."""
    if grid_side < 2:
        raise SimulationError("grid_side must be at least 2")
    g = np.linspace(0.0, 1.0, grid_side)
    xx, yy = np.meshgrid(g, g, indexing="ij")
    return np.column_stack([xx.ravel(), yy.ravel()])


def sq_exp_covariance(locations, phi: float, sigma: float) -> np.ndarray:
    """``sigma**2 * exp(-|s_i - s_j|**2 / (2 phi**2))``."""
    if not (phi > 0 and sigma > 0):
        raise SimulationError("phi and sigma must be positive")
    s = np.asarray(locations, dtype=np.float64)
    d2 = np.sum((s[:, None, :] - s[None, :, :]) ** 2, axis=-1)
    return sigma**2 * np.exp(-d2 / (2.0 * phi**2))


def mean_function(k: int, t):
    """Gaussian bump mean of covariate ``k`` (1 or 2) at time ``t``."""
    if k not in MEAN_CENTERS:
        raise SimulationError(f"covariate index must be 1 or 2, got {k}")
    t = np.asarray(t, dtype=np.float64)
    c = MEAN_CENTERS[k]
    out = np.exp(-((t - c) ** 2) / (2 * MEAN_WIDTH**2)) / (np.sqrt(2 * np.pi) * MEAN_WIDTH)
    return float(out) if out.ndim == 0 else out


def covariance_factor(cov) -> np.ndarray:
    """Factor ``L`` with ``L @ L.T ~= cov``.

    Cholesky after adding a relative jitter of 1e-10 on the diagonal; falls
    back to a clipped eigendecomposition for near-singular kernels.
    """
    C = np.asarray(cov, dtype=np.float64)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise SimulationError("covariance must be square")
    if not np.allclose(C, C.T, rtol=0, atol=1e-12 * max(1.0, np.abs(C).max())):
        raise SimulationError("covariance is not symmetric")
    scale = float(np.max(np.diag(C))) if C.size else 0.0
    try:
        return np.linalg.cholesky(C + 1e-10 * scale * np.eye(len(C)))
    except np.linalg.LinAlgError:
        pass
    evals, evecs = np.linalg.eigh(C)
    if evals.min() < -1e-8 * max(scale, np.finfo(float).tiny):
        raise SimulationError(f"covariance is not positive semidefinite (min eigenvalue {evals.min():.3g})")
    return evecs * np.sqrt(np.clip(evals, 0.0, None))


def sample_mvn(mean, cov, rng: np.random.Generator, factor: Optional[np.ndarray] = None) -> np.ndarray:
    """One draw ``mean + L z`` with ``z`` standard normal."""
    mean = np.asarray(mean, dtype=np.float64)
    L = covariance_factor(cov) if factor is None else factor
    z = rng.standard_normal(len(mean))
    return mean + L @ z


def simulate_ar_process(mean_series, rho: float, cov, T: int, rng: np.random.Generator,
                        factor: Optional[np.ndarray] = None, return_innovations: bool = False):
    """Spatial AR(1): ``Z_t = mu_t + rho Z_{t-1} + eta_t`` with ``Z_1 ~ N(mu_1, cov)``.

    ``mean_series`` gives the scalar mean at each time (``None`` for zero).
    Returns an ``N x T`` array, plus the ``N x T`` innovations (column 0 is
    the initial deviation) when ``return_innovations`` is set.
    """
    if T < 1:
        raise SimulationError("T must be at least 1")
    L = covariance_factor(cov) if factor is None else factor
    n = L.shape[0]
    mu = np.zeros(T) if mean_series is None else np.asarray(mean_series, dtype=np.float64)
    if mu.shape != (T,):
        raise SimulationError(f"mean_series must have length {T}")
    Z = np.empty((n, T))
    eta = np.empty((n, T))
    for t in range(T):
        eta[:, t] = sample_mvn(np.zeros(n), None, rng, factor=L)
        prev = rho * Z[:, t - 1] if t > 0 else 0.0
        Z[:, t] = mu[t] + prev + eta[:, t]
    if return_innovations:
        return Z, eta
    return Z


def dataset_stream(config: SimConfig, dataset_index: int, *tags: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=config.seed, spawn_key=(int(dataset_index),) + tags)


@lru_cache(maxsize=32)
def _factors(config: SimConfig):
    locs = lattice_locations(config.grid_side)
    fz = covariance_factor(sq_exp_covariance(locs, config.phi_z, config.sigma_z))
    fd = covariance_factor(sq_exp_covariance(locs, config.phi_delta, config.sigma_delta))
    return locs, fz, fd


def simulate_dataset(config: SimConfig, dataset_index: int = 0) -> SimDataset:
    """Draw ``Z1``, ``Z2`` and the response for one dataset.

    Every component uses its own stream derived from ``(seed, dataset_index)``,
    so datasets can be generated in any order.
    """
    locs, fz, fd = _factors(config)
    T = config.T
    times = tuple(range(1, T + 1))
    tgrid = np.arange(1, T + 1)

    def rng(tag):
        return np.random.default_rng(dataset_stream(config, dataset_index, tag))

    z1 = simulate_ar_process(mean_function(1, tgrid), config.rho_z, None, T, rng(_TAG_Z1), factor=fz)
    z2 = simulate_ar_process(mean_function(2, tgrid), config.rho_z, None, T, rng(_TAG_Z2), factor=fz)
    delta = simulate_ar_process(None, config.rho_delta, None, T, rng(_TAG_DELTA), factor=fd)
    eps = config.sigma_eps * rng(_TAG_EPS).standard_normal((config.n_locations, T))
    zy = z2 * config.beta + delta + eps
    return SimDataset(
        SpatioTemporalField(locs, times, z1, "Z1"),
        SpatioTemporalField(locs, times, z2, "Z2"),
        SpatioTemporalField(locs, times, zy, "ZY"),
        config,
        dataset_index,
        delta,
        eps,
    )


# -- study -----------------------------------------------------------------

@dataclass(frozen=True)
class StudyGrid:
    """Parameter lists swept by ``run_study``; one study per Cartesian combination."""

    phi_z: Sequence[float]
    phi_delta: Sequence[float]
    rho_z: Sequence[float]
    rho_delta: Sequence[float]
    sigma_z: Sequence[float] = (0.2, 4.0)
    sigma_delta: Sequence[float] = (0.2, 4.0)
    sigma_eps: Sequence[float] = (0.2, 4.0)
    block_sizes: Sequence[int] = (1, 2, 3)
    methods: Sequence[str] = METHODS
    grid_side: int = 10
    T: int = 70
    beta: float = 1.0
    n_datasets: int = 50
    replications: int = 10
    retained: int = 5
    seed: int = 0

    def configs(self):
        for sz, sd, se, pz, pd, rz, rd in itertools.product(
            self.sigma_z, self.sigma_delta, self.sigma_eps,
            self.phi_z, self.phi_delta, self.rho_z, self.rho_delta,
        ):
            yield SimConfig(
                sigma_z=sz, sigma_delta=sd, sigma_eps=se, phi_z=pz, phi_delta=pd,
                rho_z=rz, rho_delta=rd, grid_side=self.grid_side, T=self.T,
                beta=self.beta, n_datasets=self.n_datasets, seed=self.seed,
            )


@dataclass
class StudyResult:
    config: SimConfig
    esn: EsnHyperparams
    replications: int
    retained: int
    series: dict = field(default_factory=dict)  # (variable, method, block_size) -> series

    def metadata(self) -> dict:
        meta = {f"esn.{k}": v for k, v in asdict(self.esn).items() if k != "seed"}
        meta.update({f"sim.{k}": v for k, v in asdict(self.config).items()})
        meta["replications"] = self.replications
        meta["retained_pcs"] = self.retained
        meta["metric"] = SPATIAL_RMSE
        return meta


def analyze_dataset(data: SimDataset, esn: EsnHyperparams, block_sizes: Sequence[int],
                    methods: Sequence[str] = METHODS, replications: int = 10,
                    retained: int = 5) -> dict:
    """Standardize, reduce, fit an ESN and compute FI for one dataset.

    The ESN seed and the FI seeds are derived from the dataset's stream, so
    ``esn.seed`` is ignored.
    """
    config, idx = data.config, data.dataset_index
    z1, _ = standardize(data.Z1)
    z2, _ = standardize(data.Z2)
    zy, _ = standardize(data.ZY)
    b1, b2, by = (fit_pca(f, retained) for f in (z1, z2, zy))
    X = np.vstack([b1.coefficients, b2.coefficients])
    Y = by.coefficients
    esn_seed = int(dataset_stream(config, idx, _TAG_ESN).generate_state(1)[0])
    model = fit(replace(esn, seed=esn_seed), X, Y, input_sizes=(retained, retained))
    metric = MetricSpec(SPATIAL_RMSE, basis=by)
    out = {}
    for k, name in enumerate(VARIABLES):
        for method in methods:
            for b in block_sizes:
                seed = int(dataset_stream(config, idx, _TAG_FI, k, b).generate_state(1)[0])
                q = ImportanceQuery(k, b, method, replications, seed)
                out[(name, method, b)] = compute_importance(model, X, zy.values, q, metric)
    return out


def _analyze_task(args):
    config, idx, esn, block_sizes, methods, replications, retained = args
    data = simulate_dataset(config, idx)
    return analyze_dataset(data, esn, block_sizes, methods, replications, retained)


def run_config(config: SimConfig, esn: EsnHyperparams = EsnHyperparams(),
               block_sizes: Sequence[int] = (1, 2, 3), methods: Sequence[str] = METHODS,
               replications: int = 10, retained: int = 5, threads: int = 1) -> StudyResult:
    """Average FI over ``config.n_datasets`` datasets for one parameter combination."""
    tasks = [(config, i, esn, tuple(block_sizes), tuple(methods), replications, retained)
             for i in range(config.n_datasets)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            per_dataset = list(pool.map(_analyze_task, tasks))
    else:
        per_dataset = [_analyze_task(t) for t in tasks]
    result = StudyResult(config, esn, replications, retained)
    for key in per_dataset[0]:
        result.series[key] = average_importance([d[key] for d in per_dataset])
    return result


def run_study(grid: StudyGrid, esn: EsnHyperparams = EsnHyperparams(), threads: int = 1,
              output_dir=None) -> list:
    """Run every combination in ``grid``; optionally write one CSV per combination."""
    from esnfi import io  # local import: io depends on this module's result type

    results = []
    for config in grid.configs():
        log.info("study combination %s", config)
        res = run_config(config, esn, grid.block_sizes, grid.methods, grid.replications,
                         grid.retained, threads)
        if output_dir is not None:
            io.write_study_csv(res, output_dir)
        results.append(res)
    return results
