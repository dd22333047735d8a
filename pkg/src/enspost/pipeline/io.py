"""CSV ingestion and emission for forecasts, observations and station metadata.

Formats:
  forecasts.csv     station_id, init_time (ISO-8601 UTC), lead_time_h, member_1..member_K
  observations.csv  station_id, valid_time (ISO-8601 UTC), value
  stations.csv      station_id, lat, lon, elev_m
"""

from __future__ import annotations

import csv
import logging
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np

from ..core import MultivariateCase, Station

log = logging.getLogger(__name__)


class DataError(ValueError):
    """Schema violation or unresolvable record in an input file."""


def _parse_time(text: str, path, line: int) -> datetime:
    try:
        ts = datetime.fromisoformat(text)
    except ValueError:
        raise DataError(f"{path}:{line}: unparseable timestamp {text!r}") from None
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def read_stations(path) -> tuple:
    stations = []
    with open(path, newline="") as fh:
        reader = csv.reader(row for row in fh if not row.startswith("#"))
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["station_id", "lat", "lon", "elev_m"]:
            raise DataError(f"{path}:1: expected header station_id,lat,lon,elev_m")
        for line, row in enumerate(reader, start=2):
            if len(row) != 4:
                raise DataError(f"{path}:{line}: expected 4 columns, got {len(row)}")
            try:
                stations.append(Station(id=row[0], latitude=float(row[1]),
                                        longitude=float(row[2]), elevation=float(row[3])))
            except ValueError as exc:
                raise DataError(f"{path}:{line}: {exc}") from None
    ids = [s.id for s in stations]
    if len(set(ids)) != len(ids):
        raise DataError(f"{path}: duplicate station ids")
    return tuple(stations)


def read_forecasts(path, known_ids: set) -> dict:
    """Map (station_id, init_time, lead_time) -> member tuple."""
    out = {}
    n_members = None
    with open(path, newline="") as fh:
        reader = csv.reader(row for row in fh if not row.startswith("#"))
        header = next(reader, None)
        if header is None or header[:3] != ["station_id", "init_time", "lead_time_h"]:
            raise DataError(f"{path}:1: expected header station_id,init_time,lead_time_h,member_1..K")
        k = len(header) - 3
        if k < 1 or header[3:] != [f"member_{i}" for i in range(1, k + 1)]:
            raise DataError(f"{path}:1: malformed member columns")
        n_members = k
        for line, row in enumerate(reader, start=2):
            if len(row) != 3 + n_members:
                raise DataError(f"{path}:{line}: expected {3 + n_members} columns")
            sid = row[0]
            if sid not in known_ids:
                raise DataError(f"{path}:{line}: unknown station id {sid!r}")
            init = _parse_time(row[1], path, line)
            try:
                lead = float(row[2])
                members = tuple(float(v) for v in row[3:])
            except ValueError:
                raise DataError(f"{path}:{line}: non-numeric value") from None
            out[(sid, init, lead)] = members
    return out


def read_observations(path, known_ids: set) -> dict:
    """Map (station_id, valid_time) -> value."""
    out = {}
    with open(path, newline="") as fh:
        reader = csv.reader(row for row in fh if not row.startswith("#"))
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["station_id", "valid_time", "value"]:
            raise DataError(f"{path}:1: expected header station_id,valid_time,value")
        for line, row in enumerate(reader, start=2):
            if len(row) != 3:
                raise DataError(f"{path}:{line}: expected 3 columns")
            sid = row[0]
            if sid not in known_ids:
                raise DataError(f"{path}:{line}: unknown station id {sid!r}")
            valid = _parse_time(row[1], path, line)
            try:
                out[(sid, valid)] = float(row[2])
            except ValueError:
                raise DataError(f"{path}:{line}: non-numeric value") from None
    return out


def ingest(forecasts_path, observations_path, stations_path) -> tuple:
    """Join the three files into aligned multivariate cases.

    Cases missing any station's forecast or observation are dropped with a
    logged count. Returns (stations, cases) with stations in id order.
    """
    stations = tuple(sorted(read_stations(stations_path), key=lambda s: s.id))
    ids = tuple(s.id for s in stations)
    forecasts = read_forecasts(forecasts_path, set(ids))
    observations = read_observations(observations_path, set(ids))

    case_keys = sorted({(init, lead) for _, init, lead in forecasts})
    cases = []
    dropped = 0
    for init, lead in case_keys:
        valid = init + timedelta(hours=lead)
        rows, obs = [], []
        complete = True
        for sid in ids:
            f = forecasts.get((sid, init, lead))
            y = observations.get((sid, valid))
            if f is None or y is None:
                complete = False
                break
            rows.append(f)
            obs.append(y)
        if not complete:
            dropped += 1
            continue
        cases.append(MultivariateCase(init_time=init, lead_time=lead,
                                      station_ids=ids,
                                      forecast_matrix=np.array(rows),
                                      observation_vector=np.array(obs)))
    if dropped:
        log.info("dropped %d incomplete cases", dropped)
    return stations, cases


def _fmt(x: float) -> str:
    return repr(float(x))


def write_dataset(stations, cases, out_dir, header_comment: str | None = None) -> dict:
    """Emit stations/forecasts/observations CSVs; returns the written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {name: out_dir / f"{name}.csv" for name in ("stations", "forecasts", "observations")}

    def lines_stations():
        yield "station_id,lat,lon,elev_m"
        for s in stations:
            yield f"{s.id},{_fmt(s.latitude)},{_fmt(s.longitude)},{_fmt(s.elevation)}"

    def lines_forecasts():
        k = cases[0].n_members
        yield "station_id,init_time,lead_time_h," + ",".join(f"member_{i}" for i in range(1, k + 1))
        for case in cases:
            for d, sid in enumerate(case.station_ids):
                members = ",".join(_fmt(v) for v in case.forecast_matrix[d])
                yield f"{sid},{case.init_time.isoformat()},{_fmt(case.lead_time)},{members}"

    def lines_observations():
        yield "station_id,valid_time,value"
        for case in cases:
            valid = case.init_time + timedelta(hours=case.lead_time)
            for d, sid in enumerate(case.station_ids):
                yield f"{sid},{valid.isoformat()},{_fmt(case.observation_vector[d])}"

    for name, gen in (("stations", lines_stations),
                      ("forecasts", lines_forecasts),
                      ("observations", lines_observations)):
        body = "\n".join(gen()) + "\n"
        if header_comment:
            body = f"# {header_comment}\n" + body
        atomic_write(paths[name], body)
    return paths


def atomic_write(path, text: str) -> None:
    """Write via temp file + rename so failed runs leave no partial artifacts."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)
