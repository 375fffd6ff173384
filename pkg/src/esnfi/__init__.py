"""Echo state network forecasting with block-wise spatio-temporal feature importance."""

from esnfi.basis import BasisDecomposition, fit_pca, project, reconstruct
from esnfi.fields import SpatioTemporalField, compute_climatology, standardize
from esnfi.importance import (
    STPFI,
    STZFI,
    ImportanceQuery,
    ImportanceSeries,
    MetricSpec,
    compute_importance,
)
from esnfi.kernels import BACKEND
from esnfi.reservoir import EsnHyperparams, EsnModel, fit, forecast, load_model, save_model
from esnfi.simulator import SimConfig, StudyGrid, run_study, simulate_dataset

__version__ = "0.1.0"
