from datetime import datetime, timedelta, timezone

import numpy as np
import pytest

from enspost.core import MultivariateCase, Station

T0 = datetime(2021, 1, 1, tzinfo=timezone.utc)


def make_case(forecast_matrix, observations, lead_time=24.0, day=0, ids=None):
    fm = np.asarray(forecast_matrix, dtype=float)
    if ids is None:
        ids = tuple(f"S{d:03d}" for d in range(fm.shape[0]))
    return MultivariateCase(
        init_time=T0 + timedelta(days=day),
        lead_time=lead_time,
        station_ids=ids,
        forecast_matrix=fm,
        observation_vector=np.asarray(observations, dtype=float),
    )


def random_case(rng, d=3, k=5, day=0):
    return make_case(rng.normal(10.0, 3.0, (d, k)), rng.normal(10.0, 3.0, d), day=day)


@pytest.fixture
def rng():
    return np.random.default_rng(42)


def station(sid, lat, lon, elev=100.0):
    return Station(id=sid, latitude=lat, longitude=lon, elevation=elev)
