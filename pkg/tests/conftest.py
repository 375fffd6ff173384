import numpy as np
import pytest

from esnfi.fields import SpatioTemporalField
from esnfi.reservoir import EsnHyperparams, fit


def monthly_labels(start_year, n_years):
    return tuple(f"{y}-{m:02d}" for y in range(start_year, start_year + n_years) for m in range(1, 13))


def make_field(values, times=None, locations=None, name="z"):
    values = np.asarray(values, dtype=float)
    N, T = values.shape
    if times is None:
        times = tuple(range(1, T + 1))
    if locations is None:
        locations = np.column_stack([np.arange(N, dtype=float), np.zeros(N)])
    return SpatioTemporalField(np.asarray(locations, float), tuple(times), values, name)


def small_model(seed=0, P=(2, 3), Q=2, T=40, **hp):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(sum(P), T))
    Y = rng.normal(size=(Q, T))
    params = dict(n_h=12, pi_w=0.5, pi_u=0.5, a_w=0.5, a_u=0.5, seed=seed)
    params.update(hp)
    model = fit(EsnHyperparams(**params), X, Y, input_sizes=P)
    return model, X, Y


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


EVENT_START = 60  # 0-based column of 2005-01 in a 2000-2009 monthly record


def write_climate_pair(directory, seed=1, event=True):
    """Source/response gridded CSVs where the response follows the source one month later.

    The coupling is active only during a six-month event starting 2005-01.
    """
    from esnfi.io import export_gridded_csv

    g = np.random.default_rng(seed)
    lats = np.array([-60.0, -20.0, 20.0, 60.0])
    lons = np.array([-120.0, -60.0, 0.0, 60.0, 120.0, 170.0])
    locs = np.array([(a, b) for a in lats for b in lons])
    N = len(locs)
    times = monthly_labels(2000, 10)
    T = len(times)
    season = np.cos(2 * np.pi * np.arange(T) / 12)
    src = g.normal(size=(N, T)) + 3 * season
    resp = g.normal(scale=0.3, size=(N, T)) + season
    if event:
        e = slice(EVENT_START, EVENT_START + 6)
        src[:, e] += 8 * np.cos(np.deg2rad(locs[:, 0]))[:, None]
        resp[:, EVENT_START + 1: EVENT_START + 7] += 0.8 * (src[:, e] - 3 * season[e])
    directory.mkdir(parents=True, exist_ok=True)
    export_gridded_csv(SpatioTemporalField(locs, times, src, "aod"), directory / "aod.csv")
    export_gridded_csv(SpatioTemporalField(locs, times, resp, "temp"), directory / "temp.csv")
    return times


def climate_config_doc(**overrides):
    doc = {
        "seed": 3,
        "esn": {"m": 5},
        "retained": 3,
        "block_sizes": [3],
        "replications": 5,
        "data": {
            "inputs": [{"name": "aod", "path": "aod.csv"}, {"name": "temp", "path": "temp.csv"}],
            "response": {"name": "temp", "path": "temp.csv"},
        },
        "split_years": [2007, 2009],
        "plot": {"markers": ["2005-01"], "title": "synthetic"},
    }
    doc.update(overrides)
    return doc


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
