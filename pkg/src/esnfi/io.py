"""CSV formats: gridded fields, importance series and study outputs.

Every output CSV starts with ``# key=value`` metadata lines followed by a
regular header row. Floats are written with 17 significant digits so a
write/read cycle is lossless.
"""

from __future__ import annotations

import csv
import math
import re
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from esnfi.fields import FieldError, SpatioTemporalField, parse_month

GRID_HEADER = ["lat", "lon", "time", "value"]
IMPORTANCE_HEADER = ["variable", "method", "block_size", "forecast_time", "importance",
                     "baseline_metric"]
STUDY_EXTRA = ["sigma_z", "sigma_delta", "sigma_eps", "phi_z", "phi_delta", "rho_z",
               "rho_delta", "n_datasets"]
RMSE_HEADER = ["split", "time", "set", "rmse"]

_INT_RE = re.compile(r"^\d+$")


class IngestError(ValueError):
    pass


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def _parse_time(text: str, row: int):
    text = text.strip()
    if _INT_RE.match(text):
        return int(text)
    try:
        parse_month(text)
    except FieldError:
        raise IngestError(f"row {row}: time {text!r} is neither YYYY-MM nor a nonnegative integer") from None
    return text


def _parse_float(text: str, what: str, row: int) -> float:
    try:
        v = float(text)
    except ValueError:
        raise IngestError(f"row {row}: {what} {text!r} is not a number") from None
    if not math.isfinite(v):
        raise IngestError(f"row {row}: {what} {text!r} is not finite")
    return v


def ingest_gridded_csv(path, variable_name: str | None = None) -> SpatioTemporalField:
    """Read a ``lat,lon,time,value`` CSV into a complete-lattice field.

    Locations are ordered by latitude then longitude, times ascending. The
    field's location columns are ``(lat, lon)``.
    """
    path = Path(path)
    cells = {}
    with path.open(newline="") as fh:
        reader = csv.reader(row for row in fh if not row.startswith("#"))
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != GRID_HEADER:
            raise IngestError(f"{path}: header must be {','.join(GRID_HEADER)}, got {header}")
        kinds = set()
        for rownum, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise IngestError(f"row {rownum}: expected 4 columns, got {len(row)}")
            lat = _parse_float(row[0], "lat", rownum)
            lon = _parse_float(row[1], "lon", rownum)
            if not -90 <= lat <= 90:
                raise IngestError(f"row {rownum}: lat {lat} outside [-90, 90]")
            if not -180 <= lon < 180:
                raise IngestError(f"row {rownum}: lon {lon} outside [-180, 180)")
            t = _parse_time(row[2], rownum)
            kinds.add(type(t))
            if len(kinds) > 1:
                raise IngestError(f"row {rownum}: time labels mix integers and YYYY-MM")
            value = _parse_float(row[3], "value", rownum)
            key = (lat, lon, t)
            if key in cells:
                raise IngestError(f"row {rownum}: duplicate cell lat={lat}, lon={lon}, time={t}")
            cells[key] = value
    if not cells:
        raise IngestError(f"{path}: no data rows")
    lats = sorted({k[0] for k in cells})
    lons = sorted({k[1] for k in cells})
    times = sorted({k[2] for k in cells}, key=lambda t: parse_month(t) if isinstance(t, str) else t)
    values = np.empty((len(lats) * len(lons), len(times)))
    locs = []
    i = 0
    for lat in lats:
        for lon in lons:
            locs.append((lat, lon))
            for j, t in enumerate(times):
                try:
                    values[i, j] = cells[(lat, lon, t)]
                except KeyError:
                    raise IngestError(
                        f"{path}: incomplete lattice, missing cell lat={fmt(lat)}, lon={fmt(lon)}, time={t}"
                    ) from None
            i += 1
    name = variable_name if variable_name is not None else path.stem
    return SpatioTemporalField(np.array(locs), tuple(times), values, name)


def export_gridded_csv(field: SpatioTemporalField, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(GRID_HEADER)
        for (lat, lon), row in zip(field.locations, field.values):
            for t, v in zip(field.times, row):
                w.writerow([fmt(float(lat)), fmt(float(lon)), fmt(t), fmt(float(v))])


def _write_metadata(fh, metadata: Mapping) -> None:
    for key in sorted(metadata):
        v = metadata[key]
        # shortest round-trip form keeps the header readable
        text = repr(float(v)) if isinstance(v, (float, np.floating)) else fmt(v)
        fh.write(f"# {key}={text}\n")


def importance_rows(entries: Iterable, time_labels: Sequence | None = None) -> list:
    """Rows for ``(variable_name, series)`` pairs in deterministic order.

    Order: variable (as first seen), method, block size, forecast time.
    ``time_labels`` maps 1-based forecast times to printed labels.
    """
    entries = list(entries)
    var_order = {}
    for name, _ in entries:
        var_order.setdefault(name, len(var_order))
    rows = []
    for name, s in entries:
        for t, v, base in zip(s.forecast_times, s.values, s.baseline):
            label = time_labels[int(t) - 1] if time_labels is not None else int(t)
            key = (var_order[name], s.query.method, s.query.block_size, int(t))
            rows.append((key, [name, s.query.method, s.query.block_size, label, float(v), float(base)]))
    rows.sort(key=lambda r: r[0])
    return [r[1] for r in rows]


def write_importance_csv(path, entries, metadata: Mapping | None = None,
                         time_labels: Sequence | None = None, extra: Mapping | None = None) -> Path:
    """Write an importance CSV. ``extra`` adds constant trailing columns."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    extra = dict(extra or {})
    with path.open("w", newline="") as fh:
        _write_metadata(fh, metadata or {})
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(IMPORTANCE_HEADER + list(extra))
        for row in importance_rows(entries, time_labels):
            w.writerow([fmt(x) for x in row] + [fmt(v) for v in extra.values()])
    return path


def read_csv_with_metadata(path):
    """Return ``(metadata, header, rows)`` for any CSV written by this module."""
    meta = {}
    body = []
    with Path(path).open(newline="") as fh:
        for line in fh:
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                meta[key.strip()] = value
            else:
                body.append(line)
    reader = csv.reader(body)
    header = next(reader, None)
    if header is None:
        raise IngestError(f"{path}: missing header row")
    return meta, header, [r for r in reader if r]


def study_filename(config) -> str:
    return ("study_sz{sigma_z}_sd{sigma_delta}_se{sigma_eps}_pz{phi_z}_pd{phi_delta}"
            "_rz{rho_z}_rd{rho_delta}.csv").format(
        **{k: fmt(getattr(config, k)) for k in STUDY_EXTRA[:-1]})


def write_study_csv(result, output_dir) -> Path:
    """One CSV per parameter combination, importance columns plus the parameters."""
    c = result.config
    extra = {k: getattr(c, k) for k in STUDY_EXTRA}
    entries = [(var, s) for (var, _m, _b), s in result.series.items()]
    return write_importance_csv(Path(output_dir) / study_filename(c), entries,
                                result.metadata(), extra=extra)


def write_rmse_csv(path, reports, metadata: Mapping | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        _write_metadata(fh, metadata or {})
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RMSE_HEADER)
        for rep in reports:
            for t, tag, v in zip(rep.times, rep.sets, rep.rmse):
                w.writerow([fmt(rep.split), fmt(t), tag, fmt(float(v))])
    return path
