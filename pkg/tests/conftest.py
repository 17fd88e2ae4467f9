"""Shared fixtures: synthetic quarterly series and the stub adapter command."""

from __future__ import annotations

import os
import sys

import numpy as np
import pytest

from macrobench import Period, TimeSeries, Unit

ADAPTER_DIR = os.path.join(os.path.dirname(__file__), "adapters")
STUB_ADAPTER = os.path.join(ADAPTER_DIR, "stub_adapter.py")


def make_series(values, sid="x", start=Period(2000, 1), unit=Unit.YOY_PERCENT) -> TimeSeries:
    return TimeSeries(sid, unit, start, np.asarray(values, dtype=float))


def ar1_series(seed, n, phi=0.8, scale=1.0, sid="x", start=Period(1950, 1)) -> TimeSeries:
    rng = np.random.default_rng(seed)
    e = rng.normal(scale=scale, size=n)
    y = np.empty(n)
    y[0] = e[0]
    for t in range(1, n):
        y[t] = phi * y[t - 1] + e[t]
    return make_series(y, sid=sid, start=start)


def growthish_series(seed, n, sid="x", start=Period(1999, 1)) -> TimeSeries:
    """Smooth drifting series resembling a year-on-year growth rate."""
    rng = np.random.default_rng(seed)
    level = 2.0 + np.cumsum(rng.normal(scale=0.35, size=n)) * 0.15
    return make_series(level + rng.normal(scale=0.3, size=n), sid=sid, start=start)


@pytest.fixture
def stub_cmd():
    return f"{sys.executable} {STUB_ADAPTER}"


@pytest.fixture
def two_series_panel():
    return {
        "gdp": growthish_series(11, 80, sid="gdp"),
        "mfg": growthish_series(12, 80, sid="mfg"),
    }
