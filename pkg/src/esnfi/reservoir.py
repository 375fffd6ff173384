"""Single-layer echo state network with an embedding-vector input stage.

Hidden stage::

    h_t = tanh((nu / lambda_w) W h_{t-1} + U xemb_{t-tau})

where ``xemb_{t-tau}`` stacks ``x_{t-tau}, x_{t-tau-tau*}, ..., x_{t-tau-m tau*}``.
The output stage ``y_t = V h_t`` (or ``V1 h_t + V2 h_t**2``) is fitted by
ridge regression. Times are 1-indexed throughout: column ``j`` of an input
matrix holds time ``j + 1``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from esnfi.kernels import recur_batch

MAX_RESAMPLES = 10
MAX_CONDITION = 1e12
# Dense eigendecomposition is used up to this reservoir size.
DENSE_EIG_LIMIT = 200


class ReservoirError(ValueError):
    pass


@dataclass(frozen=True)
class EsnHyperparams:
    """Tuning parameters of the ESN. Defaults follow the simulation setup."""

    n_h: int = 50
    a_w: float = 0.1
    a_u: float = 0.1
    pi_w: float = 0.1
    pi_u: float = 0.1
    nu: float = 0.35
    lambda_r: float = 0.1
    tau: int = 1
    tau_star: int = 1
    m: int = 1
    quadratic: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.n_h < 1:
            raise ReservoirError("n_h must be at least 1")
        if self.a_w < 0 or self.a_u < 0:
            raise ReservoirError("a_w and a_u must be nonnegative")
        for name in ("pi_w", "pi_u"):
            p = getattr(self, name)
            if not 0 < p <= 1:
                raise ReservoirError(f"{name} must lie in (0, 1], got {p}")
        if not 0 <= self.nu <= 1:
            raise ReservoirError(f"nu must lie in [0, 1], got {self.nu}")
        if not self.lambda_r > 0:
            raise ReservoirError("lambda_r must be positive")
        if self.tau < 1 or self.tau_star < 1:
            raise ReservoirError("tau and tau_star must be at least 1")
        if self.m < 0:
            raise ReservoirError("m must be nonnegative")

    @property
    def first_forecast_time(self) -> int:
        """Earliest time whose embedding vector is fully observed."""
        return 1 + self.tau + self.m * self.tau_star

    @property
    def n_lags(self) -> int:
        return self.m + 1


@dataclass(frozen=True)
class Reservoir:
    W: np.ndarray
    U: np.ndarray
    lambda_w: float

    def scaled_w(self, nu: float) -> np.ndarray:
        """Recurrent matrix rescaled to spectral radius ``nu``."""
        return (nu / abs(self.lambda_w)) * self.W


@dataclass(frozen=True)
class EsnModel:
    """A fitted ESN.

    ``V`` holds the stacked readout: ``Q x n_h`` for the linear model and
    ``Q x 2 n_h`` (``[V1, V2]``) for the quadratic one. ``input_sizes`` gives
    the number of input rows contributed by each input variable.
    """

    hyperparams: EsnHyperparams
    reservoir: Reservoir
    V: np.ndarray
    input_dim: int
    output_dim: int
    hidden_states: np.ndarray
    sigma2: float
    input_sizes: tuple = field(default=())

    @property
    def first_forecast_time(self) -> int:
        return self.hyperparams.first_forecast_time

    @property
    def V1(self) -> np.ndarray:
        return self.V[:, : self.hyperparams.n_h]

    @property
    def V2(self) -> Optional[np.ndarray]:
        if not self.hyperparams.quadratic:
            return None
        return self.V[:, self.hyperparams.n_h :]

    def variable_slice(self, k: int) -> slice:
        """Rows of the input matrix belonging to variable ``k`` (0-based)."""
        sizes = self.input_sizes or (self.input_dim,)
        if not 0 <= k < len(sizes):
            raise ReservoirError(f"variable index {k} outside 0..{len(sizes) - 1}")
        start = int(sum(sizes[:k]))
        return slice(start, start + sizes[k])


def _sparse_uniform(rng: np.random.Generator, shape, a: float, pi: float) -> np.ndarray:
    keep = rng.random(shape) < pi
    vals = rng.uniform(-a, a, shape)
    return np.where(keep, vals, 0.0)


def spectral_radius(M) -> float:
    """Largest absolute eigenvalue of a square matrix.

    Dense eigendecomposition for small matrices, ARPACK on the sparse
    matrix otherwise.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ReservoirError(f"spectral_radius needs a square matrix, got {M.shape}")
    n = M.shape[0]
    if n == 0:
        return 0.0
    if n <= DENSE_EIG_LIMIT:
        return float(np.max(np.abs(np.linalg.eigvals(M))))
    sp = scipy.sparse.csr_matrix(M)
    if sp.nnz == 0:
        return 0.0
    try:
        # several eigenvalues and a wide Krylov space: with k=1 ARPACK can settle
        # on one of a cluster of near-equal conjugate pairs and miss the largest
        k = min(6, n - 2)
        vals = scipy.sparse.linalg.eigs(sp, k=k, which="LM", ncv=min(n, max(2 * k + 1, 60)),
                                        tol=1e-13, maxiter=10_000, return_eigenvectors=False)
        return float(np.max(np.abs(vals)))
    except scipy.sparse.linalg.ArpackNoConvergence:
        return float(np.max(np.abs(np.linalg.eigvals(M))))


def sample_reservoir(hyperparams: EsnHyperparams, input_dim: int) -> Reservoir:
    """Draw sparse uniform ``W`` and ``U`` and record the spectral radius of ``W``.

    Each entry is zero with probability ``1 - pi`` and ``Uniform(-a, a)``
    otherwise. Draws that give ``W`` a zero spectral radius are repeated up
    to ``MAX_RESAMPLES`` times.
    """
    hp = hyperparams
    if input_dim < 1:
        raise ReservoirError("input_dim must be at least 1")
    rng = np.random.default_rng(hp.seed)
    for _ in range(MAX_RESAMPLES):
        W = _sparse_uniform(rng, (hp.n_h, hp.n_h), hp.a_w, hp.pi_w)
        U = _sparse_uniform(rng, (hp.n_h, input_dim * hp.n_lags), hp.a_u, hp.pi_u)
        lam = spectral_radius(W)
        if lam > 0:
            return Reservoir(W, U, lam)
    raise ReservoirError(
        f"degenerate reservoir: W had zero spectral radius in {MAX_RESAMPLES} draws"
    )


def embedding_columns(times, tau: int, tau_star: int, m: int) -> np.ndarray:
    """0-based input columns feeding the embedding at each (1-based) time.

    Returns an ``(len(times), m + 1)`` integer array; entries may be negative
    for times without a full history.
    """
    times = np.asarray(times, dtype=int)
    lags = tau + tau_star * np.arange(m + 1)
    return times[:, None] - lags[None, :] - 1


def build_embedding(inputs, t: int, tau: int, tau_star: int, m: int) -> np.ndarray:
    """Embedding vector ``[x_{t-tau}; x_{t-tau-tau*}; ...; x_{t-tau-m tau*}]``."""
    X = np.asarray(inputs, dtype=np.float64)
    earliest = 1 + tau + m * tau_star
    if t - tau - m * tau_star < 1:
        raise ReservoirError(f"insufficient history at t={t}; earliest feasible t is {earliest}")
    if t - tau > X.shape[1]:
        raise ReservoirError(f"t={t} needs input time {t - tau} beyond T={X.shape[1]}")
    cols = embedding_columns([t], tau, tau_star, m)[0]
    return X[:, cols].T.reshape(-1)


def embedding_matrix(inputs, hyperparams: EsnHyperparams) -> np.ndarray:
    """Embedding vectors for every feasible time as columns, ``P(m+1) x T'``."""
    X = np.asarray(inputs, dtype=np.float64)
    hp = hyperparams
    T = X.shape[1]
    ff = hp.first_forecast_time
    if T < ff:
        raise ReservoirError(f"need at least {ff} times for the embedding, got {T}")
    cols = embedding_columns(np.arange(ff, T + 1), hp.tau, hp.tau_star, hp.m)
    # (T', m+1, P) -> (T', (m+1) P) with lag blocks in order
    return X.T[cols].reshape(len(cols), -1).T


def run_hidden_states(reservoir: Reservoir, hyperparams: EsnHyperparams, inputs) -> np.ndarray:
    """Hidden states ``h_t`` for ``t = first_forecast_time .. T`` as columns.

    The state preceding the first feasible time is the zero vector.
    """
    E = embedding_matrix(inputs, hyperparams)
    if E.shape[0] != reservoir.U.shape[1]:
        raise ReservoirError(
            f"embedding has {E.shape[0]} rows but U has {reservoir.U.shape[1]} columns"
        )
    drive = np.ascontiguousarray((reservoir.U @ E).T[None])
    h0 = np.zeros((1, hyperparams.n_h))
    states = recur_batch(reservoir.scaled_w(hyperparams.nu), drive, h0)
    return states[0].T


def regressors(H: np.ndarray, quadratic: bool) -> np.ndarray:
    """Readout design matrix: ``h`` or ``[h; h**2]`` per column."""
    if quadratic:
        return np.vstack([H, H * H])
    return H


def ridge_solve(R: np.ndarray, Y: np.ndarray, lambda_r: float) -> np.ndarray:
    """``V = Y R^T (R R^T + lambda I)^{-1}`` via a Cholesky factorization."""
    G = R @ R.T + lambda_r * np.eye(R.shape[0])
    cond = np.linalg.cond(G)
    if not cond <= MAX_CONDITION:
        raise ReservoirError(
            f"ridge system is ill-conditioned (condition {cond:.3g}); increase lambda_r"
        )
    factor = scipy.linalg.cho_factor(G)
    return scipy.linalg.cho_solve(factor, R @ Y.T).T


def fit(hyperparams: EsnHyperparams, inputs, outputs,
        input_sizes: Sequence[int] | None = None) -> EsnModel:
    """Sample a reservoir and fit the ridge readout.

    Args:
        hyperparams: ESN settings, including the RNG seed.
        inputs: ``P x T`` input coefficients.
        outputs: ``Q x T`` response coefficients. Only times from
            ``first_forecast_time`` to ``T`` enter the fit.
        input_sizes: rows per input variable, summing to ``P``.
    """
    X = np.asarray(inputs, dtype=np.float64)
    Y = np.asarray(outputs, dtype=np.float64)
    if X.ndim != 2 or Y.ndim != 2:
        raise ReservoirError("inputs and outputs must be 2-D")
    if X.shape[1] != Y.shape[1]:
        raise ReservoirError(f"inputs have {X.shape[1]} times, outputs {Y.shape[1]}")
    P, T = X.shape
    Q = Y.shape[0]
    ff = hyperparams.first_forecast_time
    if T < ff + Q:
        raise ReservoirError(f"need T >= {ff + Q} to fit, got {T}")
    sizes = tuple(int(s) for s in input_sizes) if input_sizes is not None else (P,)
    if sum(sizes) != P or any(s < 1 for s in sizes):
        raise ReservoirError(f"input_sizes {sizes} do not partition {P} rows")

    res = sample_reservoir(hyperparams, P)
    H = run_hidden_states(res, hyperparams, X)
    R = regressors(H, hyperparams.quadratic)
    Yfit = Y[:, ff - 1 :]
    V = ridge_solve(R, Yfit, hyperparams.lambda_r)
    resid = Yfit - V @ R
    sigma2 = float(np.mean(resid**2))
    return EsnModel(hyperparams, res, V, P, Q, H, sigma2, sizes)


def readout(model: EsnModel, H: np.ndarray) -> np.ndarray:
    """Apply the fitted output stage to hidden states (columns or last axis)."""
    if H.ndim == 1:
        return model.V @ regressors(H[:, None], model.hyperparams.quadratic)[:, 0]
    return model.V @ regressors(H, model.hyperparams.quadratic)


def forecast_times(model: EsnModel, T: int) -> np.ndarray:
    return np.arange(model.first_forecast_time, T + 1)


def _check_inputs(model: EsnModel, inputs) -> np.ndarray:
    X = np.asarray(inputs, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != model.input_dim:
        raise ReservoirError(f"inputs must have {model.input_dim} rows, got shape {X.shape}")
    return X


def forecast(model: EsnModel, inputs) -> np.ndarray:
    """Point forecasts for ``t = first_forecast_time .. T`` as columns."""
    X = _check_inputs(model, inputs)
    H = run_hidden_states(model.reservoir, model.hyperparams, X)
    return readout(model, H)


def adjusted_inputs(model: EsnModel, inputs, replacements: Iterable) -> np.ndarray:
    """Copy of ``inputs`` with ``(time, row_slice, vector)`` overwrites applied."""
    X = _check_inputs(model, inputs).copy()
    T = X.shape[1]
    for time, rows, vec in replacements:
        if not 1 <= time <= T:
            raise ReservoirError(f"replacement time {time} outside 1..{T}")
        if isinstance(rows, tuple):
            rows = slice(*rows)
        start, stop, step = rows.indices(model.input_dim)
        if rows.start is not None and not 0 <= rows.start < model.input_dim:
            raise ReservoirError(f"replacement rows {rows} outside 0..{model.input_dim - 1}")
        if rows.stop is not None and rows.stop > model.input_dim:
            raise ReservoirError(f"replacement rows {rows} outside 0..{model.input_dim - 1}")
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (len(range(start, stop, step)),):
            raise ReservoirError("replacement vector length does not match its row slice")
        X[rows, time - 1] = vec
    return X


def forecast_with_adjusted_inputs(model: EsnModel, inputs, replacements) -> np.ndarray:
    """Forecasts after overwriting input slices; the recursion is rerun from the start."""
    return forecast(model, adjusted_inputs(model, inputs, replacements))


# -- serialization ---------------------------------------------------------

def model_to_dict(model: EsnModel) -> dict:
    W = model.reservoir.W
    U = model.reservoir.U
    return {
        "format": "esnfi-model",
        "version": 1,
        "hyperparams": asdict(model.hyperparams),
        "input_dim": model.input_dim,
        "output_dim": model.output_dim,
        "input_sizes": list(model.input_sizes),
        "lambda_w": model.reservoir.lambda_w,
        "W": W.tolist(),
        "W_mask": (W != 0).astype(int).tolist(),
        "U": U.tolist(),
        "U_mask": (U != 0).astype(int).tolist(),
        "V": model.V.tolist(),
        "hidden_states": model.hidden_states.tolist(),
        "sigma2": model.sigma2,
    }


def model_from_dict(doc: dict) -> EsnModel:
    if doc.get("format") != "esnfi-model":
        raise ReservoirError("not an esnfi model document")
    hp = EsnHyperparams(**doc["hyperparams"])
    W = np.array(doc["W"], dtype=np.float64).reshape(hp.n_h, hp.n_h)
    U = np.array(doc["U"], dtype=np.float64).reshape(hp.n_h, -1)
    W[np.array(doc["W_mask"]) == 0] = 0.0
    U[np.array(doc["U_mask"]) == 0] = 0.0
    res = Reservoir(W, U, float(doc["lambda_w"]))
    V = np.array(doc["V"], dtype=np.float64).reshape(doc["output_dim"], -1)
    H = np.array(doc["hidden_states"], dtype=np.float64).reshape(hp.n_h, -1)
    return EsnModel(hp, res, V, int(doc["input_dim"]), int(doc["output_dim"]), H,
                    float(doc["sigma2"]), tuple(doc["input_sizes"]))


def save_model(model: EsnModel, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model)))


def load_model(path) -> EsnModel:
    return model_from_dict(json.loads(Path(path).read_text()))
