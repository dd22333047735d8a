"""Core domain types: stations, forecasts, observations, graphs and ensemble statistics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime
from typing import Sequence

import numpy as np

EARTH_RADIUS_KM = 6371.0

# WMO visibility reporting values plus the 0 m floor category (84 values total).
_VIS_BANDS = (
    [0]
    + list(range(100, 5001, 100))
    + list(range(6000, 30001, 1000))
    + list(range(35000, 70001, 5000))
)


@dataclass(frozen=True)
class Station:
    """Observation site with geographic coordinates."""

    id: str
    latitude: float
    longitude: float
    elevation: float

    def __post_init__(self):
        if not -90.0 <= self.latitude <= 90.0:
            raise ValueError(f"latitude {self.latitude} out of range for station {self.id}")
        if not -180.0 <= self.longitude <= 180.0:
            raise ValueError(f"longitude {self.longitude} out of range for station {self.id}")


@dataclass(frozen=True)
class EnsembleForecast:
    """K-member ensemble forecast for one station, init time and lead time.

    Member order is meaningful: it defines the raw-ensemble ranks used by ECC.
    """

    station_id: str
    init_time: datetime
    lead_time: float
    members: tuple

    def __post_init__(self):
        if len(self.members) < 1:
            raise ValueError("ensemble needs at least one member")
        if self.lead_time < 0:
            raise ValueError("lead_time must be >= 0")
        if not all(math.isfinite(m) for m in self.members):
            raise ValueError("all ensemble members must be finite")


@dataclass(frozen=True)
class Observation:
    station_id: str
    valid_time: datetime
    value: float

    def __post_init__(self):
        if not math.isfinite(self.value) or self.value < 0:
            raise ValueError(f"observation must be finite and >= 0, got {self.value}")


@dataclass(frozen=True)
class MultivariateCase:
    """D-station forecast matrix plus observation vector for one init/lead.

    Row d of ``forecast_matrix`` holds the K members at station ``station_ids[d]``.
    """

    init_time: datetime
    lead_time: float
    station_ids: tuple
    forecast_matrix: np.ndarray
    observation_vector: np.ndarray

    def __post_init__(self):
        fm = np.asarray(self.forecast_matrix, dtype=float)
        ov = np.asarray(self.observation_vector, dtype=float)
        if fm.ndim != 2:
            raise ValueError("forecast_matrix must be D x K")
        if fm.shape[0] != len(self.station_ids) or ov.shape != (fm.shape[0],):
            raise ValueError("forecast matrix, station list and observation vector misaligned")
        object.__setattr__(self, "forecast_matrix", fm)
        object.__setattr__(self, "observation_vector", ov)

    @property
    def n_stations(self) -> int:
        return self.forecast_matrix.shape[0]

    @property
    def n_members(self) -> int:
        return self.forecast_matrix.shape[1]


@dataclass(frozen=True)
class StationGraph:
    """Undirected distance-threshold graph over stations.

    Edges are unordered id pairs stored once, (min(id), max(id)); no self loops.
    """

    stations: tuple
    edges: frozenset
    threshold_km: float

    @property
    def station_ids(self) -> tuple:
        return tuple(s.id for s in self.stations)

    def neighbors(self, station_id: str) -> set:
        out = set()
        for a, b in self.edges:
            if a == station_id:
                out.add(b)
            elif b == station_id:
                out.add(a)
        return out

    def adjacency(self) -> np.ndarray:
        """Dense 0/1 adjacency in station order."""
        idx = {s.id: i for i, s in enumerate(self.stations)}
        a = np.zeros((len(self.stations), len(self.stations)))
        for u, v in self.edges:
            a[idx[u], idx[v]] = 1.0
            a[idx[v], idx[u]] = 1.0
        return a


@dataclass(frozen=True)
class EnsembleStats:
    mean: float
    variance: float
    zero_fraction: float


@dataclass(frozen=True)
class VisibilityCategories:
    values: tuple = field(default=tuple(_VIS_BANDS))

    def __post_init__(self):
        if len(self.values) != 84:
            raise ValueError("expected exactly 84 visibility categories")
        if any(b <= a for a, b in zip(self.values, self.values[1:])):
            raise ValueError("categories must be strictly ascending")


VISIBILITY_CATEGORIES = VisibilityCategories()


def haversine_km(a: Station, b: Station) -> float:
    """Great-circle distance in kilometers (spherical Earth, R = 6371 km)."""
    lat1, lon1 = math.radians(a.latitude), math.radians(a.longitude)
    lat2, lon2 = math.radians(b.latitude), math.radians(b.longitude)
    dlat = lat2 - lat1
    dlon = lon2 - lon1
    h = math.sin(dlat / 2.0) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(dlon / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(h)))


def build_graph(stations: Sequence[Station], threshold_km: float) -> StationGraph:
    """Connect every station pair closer than ``threshold_km`` (great circle)."""
    if threshold_km <= 0:
        raise ValueError("threshold_km must be positive")
    if len(stations) < 1:
        raise ValueError("need at least one station")
    ids = [s.id for s in stations]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate station ids")
    ordered = tuple(sorted(stations, key=lambda s: s.id))
    edges = set()
    for i, u in enumerate(ordered):
        for v in ordered[i + 1:]:
            if haversine_km(u, v) < threshold_km:
                edges.add((u.id, v.id))
    return StationGraph(stations=ordered, edges=frozenset(edges), threshold_km=threshold_km)


def ensemble_stats(members: Sequence[float]) -> EnsembleStats:
    """Ensemble mean, variance (divisor K-1, zero for K = 1) and zero fraction."""
    m = np.asarray(members, dtype=float)
    if m.size == 0:
        raise ValueError("empty member list")
    variance = float(m.var(ddof=1)) if m.size > 1 else 0.0
    return EnsembleStats(
        mean=float(m.mean()),
        variance=variance,
        zero_fraction=float(np.count_nonzero(m == 0.0) / m.size),
    )


def discretize_visibility(value: float) -> int:
    """Largest WMO reporting category <= value, capped at 70000 m."""
    if value < 0:
        raise ValueError("visibility must be non-negative")
    cats = VISIBILITY_CATEGORIES.values
    if value >= cats[-1]:
        return cats[-1]
    # round down within the band structure
    idx = int(np.searchsorted(cats, value, side="right")) - 1
    return cats[max(idx, 0)]
