"""Per-station feature construction and training-window standardization."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..core import MultivariateCase, Station, ensemble_stats

log = logging.getLogger(__name__)

FEATURE_KINDS = ("ensemble_stat", "coordinate", "elevation", "lead_time",
                 "seasonal", "category_fraction", "control", "extra_covariate")


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered (name, kind) feature list for one experiment."""

    entries: tuple

    def __post_init__(self):
        for name, kind in self.entries:
            if kind not in FEATURE_KINDS:
                raise ValueError(f"unknown feature kind {kind!r} for {name}")

    @property
    def names(self) -> tuple:
        return tuple(name for name, _ in self.entries)

    def __len__(self) -> int:
        return len(self.entries)


SOLAR_SCHEMA = FeatureSchema(entries=(
    ("ens_mean", "ensemble_stat"),
    ("zero_fraction", "ensemble_stat"),
    ("ens_variance", "ensemble_stat"),
    ("latitude", "coordinate"),
    ("longitude", "coordinate"),
    ("elevation", "elevation"),
    ("lead_time", "lead_time"),
))

VISIBILITY_SCHEMA = FeatureSchema(entries=(
    ("control", "control"),
    ("exch_mean", "ensemble_stat"),
    ("exch_sd", "ensemble_stat"),
    ("frac_below_5km", "category_fraction"),
    ("frac_5_30km", "category_fraction"),
    ("frac_30_70km", "category_fraction"),
    ("extra_covariate", "extra_covariate"),
    ("season_sin", "seasonal"),
    ("season_cos", "seasonal"),
    ("latitude", "coordinate"),
    ("longitude", "coordinate"),
    ("elevation", "elevation"),
    ("lead_time", "lead_time"),
))


def seasonal_pair(day_of_year: int) -> tuple[float, float]:
    """Annual base functions sin(2*pi*d/365), cos(2*pi*d/365)."""
    angle = 2.0 * np.pi * day_of_year / 365.0
    return float(np.sin(angle)), float(np.cos(angle))


def build_features(case: MultivariateCase, stations: dict, variable: str,
                   extra_covariate: np.ndarray | None = None) -> np.ndarray:
    """D x F raw (unstandardized) feature matrix for one case.

    ``stations`` maps station id to Station. For visibility, member 1 is the
    control run and the remaining members are the exchangeable set; the
    optional extra covariate stands in for an external point-forecast product.
    """
    rows = []
    doy = case.init_time.timetuple().tm_yday
    for d, sid in enumerate(case.station_ids):
        st: Station = stations[sid]
        members = case.forecast_matrix[d]
        if variable == "solar":
            stats = ensemble_stats(members)
            rows.append([stats.mean, stats.zero_fraction, stats.variance,
                         st.latitude, st.longitude, st.elevation, case.lead_time])
        elif variable == "visibility":
            control = members[0]
            exch = members[1:] if members.size > 1 else members
            sin_d, cos_d = seasonal_pair(doy)
            extra = float(extra_covariate[d]) if extra_covariate is not None else 0.0
            rows.append([
                control,
                float(exch.mean()),
                float(exch.std(ddof=1)) if exch.size > 1 else 0.0,
                float(np.mean(members < 5000.0)),
                float(np.mean((members >= 5000.0) & (members < 30000.0))),
                float(np.mean((members >= 30000.0) & (members <= 70000.0))),
                extra, sin_d, cos_d,
                st.latitude, st.longitude, st.elevation, case.lead_time,
            ])
        else:
            raise ValueError(f"unknown variable {variable!r}")
    return np.array(rows, dtype=float)


@dataclass(frozen=True)
class FeatureStandardizer:
    mean: np.ndarray
    sd: np.ndarray

    @classmethod
    def fit(cls, matrices) -> "FeatureStandardizer":
        """Column statistics pooled over the training-window feature matrices."""
        stacked = np.vstack(list(matrices))
        mean = stacked.mean(axis=0)
        sd = stacked.std(axis=0)
        if np.any(sd == 0):
            log.warning("zero training-window sd for %d feature(s); left unscaled",
                        int(np.sum(sd == 0)))
            sd = np.where(sd == 0, 1.0, sd)
        return cls(mean=mean, sd=sd)

    def apply(self, matrix: np.ndarray) -> np.ndarray:
        return (np.asarray(matrix, dtype=float) - self.mean) / self.sd
