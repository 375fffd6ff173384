"""Gridded spatio-temporal fields and their preprocessing transforms.

A field stores one variable at ``N`` locations and ``T`` times as an ``N x T``
matrix (column ``t`` is the spatial snapshot at time ``t``). Two transforms
are provided: per-location standardization across time, and monthly
climatologies (per-location, per-calendar-month standardized anomalies).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field as dc_field
from typing import Sequence, Union

import numpy as np

TimeLabel = Union[int, str]

_MONTH_RE = re.compile(r"^(\d{4})-(\d{2})$")


class FieldError(ValueError):
    """Raised when a field or its statistics are malformed."""


def parse_month(label: TimeLabel) -> tuple[int, int]:
    """Return ``(year, month)`` for a ``YYYY-MM`` label."""
    if not isinstance(label, str):
        raise FieldError(f"time label {label!r} is not a YYYY-MM string")
    m = _MONTH_RE.match(label)
    if m is None:
        raise FieldError(f"time label {label!r} is not a YYYY-MM string")
    year, month = int(m.group(1)), int(m.group(2))
    if not 1 <= month <= 12:
        raise FieldError(f"time label {label!r} has month outside 1..12")
    return year, month


def _time_key(label: TimeLabel):
    if isinstance(label, str):
        return parse_month(label)
    return label


@dataclass(frozen=True)
class SpatioTemporalField:
    """Values of one variable on a fixed set of locations over ordered times.

    Attributes:
        locations: ``(N, 2)`` array of ``(x, y)`` coordinates. For gridded
            climate data these are ``(lat, lon)`` in degrees.
        times: length-``T`` tuple of integer indices or ``YYYY-MM`` strings.
        values: ``(N, T)`` array, column ``t`` holds the snapshot at ``times[t]``.
        variable_name: free-form label used in outputs.
    """

    locations: np.ndarray
    times: tuple
    values: np.ndarray
    variable_name: str = "Z"

    def __post_init__(self):
        locs = np.array(self.locations, dtype=np.float64)
        vals = np.array(self.values, dtype=np.float64)
        times = tuple(self.times)
        if locs.ndim != 2 or locs.shape[1] != 2:
            raise FieldError("locations must be an (N, 2) array")
        if vals.ndim != 2:
            raise FieldError("values must be a 2-D (N, T) array")
        n, t = vals.shape
        if n < 1 or t < 1:
            raise FieldError("field needs at least one location and one time")
        if locs.shape[0] != n:
            raise FieldError(f"{locs.shape[0]} locations but values have {n} rows")
        if len(times) != t:
            raise FieldError(f"{len(times)} time labels but values have {t} columns")
        if not np.all(np.isfinite(vals)):
            i, j = np.argwhere(~np.isfinite(vals))[0]
            raise FieldError(f"non-finite value at location {i}, time {times[j]!r}")
        if len({type(x) for x in times}) > 1:
            raise FieldError("time labels mix integers and strings")
        keys = [_time_key(x) for x in times]
        if any(b <= a for a, b in zip(keys, keys[1:])):
            raise FieldError("time labels must be strictly increasing")
        if len({tuple(p) for p in locs.tolist()}) != n:
            raise FieldError("locations must be pairwise distinct")
        locs.setflags(write=False)
        vals.setflags(write=False)
        object.__setattr__(self, "locations", locs)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "times", times)

    @property
    def n_locations(self) -> int:
        return self.values.shape[0]

    @property
    def n_times(self) -> int:
        return self.values.shape[1]

    def with_values(self, values: np.ndarray, variable_name: str | None = None):
        """Copy of this field with new values on the same grid."""
        return SpatioTemporalField(
            self.locations,
            self.times,
            values,
            self.variable_name if variable_name is None else variable_name,
        )

    def subset_times(self, index: Sequence[int] | np.ndarray) -> "SpatioTemporalField":
        """Field restricted to the given (0-based) time columns."""
        index = np.asarray(index, dtype=int)
        return SpatioTemporalField(
            self.locations,
            tuple(self.times[i] for i in index),
            self.values[:, index],
            self.variable_name,
        )


@dataclass(frozen=True)
class StandardizationStats:
    mean: np.ndarray
    sd: np.ndarray

    def __post_init__(self):
        if self.mean.shape != self.sd.shape or self.mean.ndim != 1:
            raise FieldError("mean and sd must be equal-length vectors")
        if np.any(self.sd <= 0):
            raise FieldError("standard deviations must be positive")


@dataclass(frozen=True)
class ClimatologyStats:
    """Per-location, per-calendar-month mean and sd, each ``(N, 12)``."""

    mean: np.ndarray
    sd: np.ndarray
    months_present: tuple = dc_field(default=tuple(range(1, 13)))


def standardize(field: SpatioTemporalField):
    """Remove each location's temporal mean and divide by its temporal sd.

    Uses the sample sd (denominator ``T - 1``). Returns the standardized
    field and the statistics needed to invert the transform.
    """
    if field.n_times < 2:
        raise FieldError("standardize needs at least two times")
    vals = field.values
    mean = vals.mean(axis=1)
    sd = vals.std(axis=1, ddof=1)
    bad = np.flatnonzero(~(sd > 0))
    if bad.size:
        raise FieldError(f"zero standard deviation at location {int(bad[0])}")
    z = (vals - mean[:, None]) / sd[:, None]
    return field.with_values(z), StandardizationStats(mean, sd)


def apply_standardization(field: SpatioTemporalField, stats: StandardizationStats):
    """Standardize ``field`` with statistics estimated elsewhere."""
    _check_len(field, stats.mean)
    return field.with_values((field.values - stats.mean[:, None]) / stats.sd[:, None])


def destandardize(field: SpatioTemporalField, stats: StandardizationStats):
    _check_len(field, stats.mean)
    return field.with_values(field.values * stats.sd[:, None] + stats.mean[:, None])


def _check_len(field, vec):
    if len(vec) != field.n_locations:
        raise FieldError(
            f"statistics cover {len(vec)} locations, field has {field.n_locations}"
        )


def month_index(field: SpatioTemporalField) -> np.ndarray:
    """Calendar month (1..12) of every time column."""
    return np.array([parse_month(t)[1] for t in field.times], dtype=int)


def compute_climatology(field: SpatioTemporalField):
    """Monthly climatologies: subtract the location-month mean, divide by its sd.

    Every (location, month) group needs at least two observations and a
    nonzero sample sd (denominator ``n - 1``).
    """
    months = month_index(field)
    n = field.n_locations
    mean = np.full((n, 12), np.nan)
    sd = np.full((n, 12), np.nan)
    present = []
    for mth in range(1, 13):
        cols = months == mth
        if not cols.any():
            continue
        if cols.sum() < 2:
            raise FieldError(f"month {mth} has fewer than two observations")
        block = field.values[:, cols]
        mean[:, mth - 1] = block.mean(axis=1)
        sd[:, mth - 1] = block.std(axis=1, ddof=1)
        bad = np.flatnonzero(~(sd[:, mth - 1] > 0))
        if bad.size:
            raise FieldError(
                f"zero standard deviation at location {int(bad[0])}, month {mth}"
            )
        present.append(mth)
    stats = ClimatologyStats(mean, sd, tuple(present))
    return apply_climatology(field, stats), stats


def _month_stats(field, stats):
    months = month_index(field)
    _check_len(field, stats.mean[:, 0])
    missing = sorted(set(months.tolist()) - set(stats.months_present))
    if missing:
        raise FieldError(f"no climatology statistics for month {missing[0]}")
    return stats.mean[:, months - 1], stats.sd[:, months - 1]


def apply_climatology(field: SpatioTemporalField, stats: ClimatologyStats):
    """Climatologies of ``field`` using precomputed monthly statistics."""
    mu, sd = _month_stats(field, stats)
    return field.with_values((field.values - mu) / sd)


def invert_climatology(field: SpatioTemporalField, stats: ClimatologyStats):
    mu, sd = _month_stats(field, stats)
    return field.with_values(field.values * sd + mu)
