"""Shared helpers for the test suite."""

from __future__ import annotations

import pathlib

import numpy as np
import pandas as pd
import pytest

TEST_DATA = pathlib.Path(__file__).parent / "data"


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def segments_frame(rows):
    """Segments table from ``(year, month, carrier, origin, dest, flights)`` tuples."""
    df = pd.DataFrame(rows, columns=["year", "month", "ticketing_carrier", "origin", "dest", "flights"])
    df["seats"] = df["flights"] * 100
    return df[["year", "month", "ticketing_carrier", "origin", "dest", "seats", "flights"]]


def flags_frame(rows):
    """Flags table from ``(carrier, year, quarter, status, flag)`` tuples."""
    return pd.DataFrame(rows, columns=["carrier", "year", "quarter", "status", "flag"])
