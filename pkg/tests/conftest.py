from datetime import datetime, timezone

import numpy as np
import pytest

from cyclone_pp.domain import GridDomain, Report, ReportOrigin


@pytest.fixture
def small_domain():
    """Hand-built 6x5 domain: a 3x2 land block, two mountain cells."""
    land = np.zeros((6, 5), dtype=bool)
    land[2:5, 1:3] = True
    alt = np.zeros((6, 5))
    alt[2, 1] = 120.0
    alt[3, 1] = 750.0
    alt[3, 2] = 1800.0
    alt[2, 2] = 60.0
    alt[4, 1] = 15.0
    alt[4, 2] = 400.0
    return GridDomain(n_rows=6, n_cols=5, lat0=23.0, lon0=121.0, cell=0.1,
                      land_mask=land, altitude=np.where(land, alt, 0.0))


def make_report(index, shape=(6, 5), origin=ReportOrigin.ORIGINAL, seed=None,
                observation=None, tc_center=(22.0, 123.0), scale=5.0,
                members=None):
    """Random-but-seeded report with 20 non-negative member fields."""
    if seed is None:
        seed = round(10 * index)  # distinct indices draw distinct fields
    rng = np.random.default_rng(seed)
    if members is None:
        members = rng.gamma(2.0, scale, size=(20, *shape))
    if observation is None:
        observation = rng.gamma(2.0, scale, size=shape)
    return Report(index=index, origin=origin, members=members,
                  observation=observation, tc_center=tc_center,
                  valid_time=datetime(2015, 8, 5, 18, tzinfo=timezone.utc))


@pytest.fixture
def report_factory():
    return make_report
