import itertools
import math

import numpy as np
import pandas as pd
import pytest
from hypothesis import given
from hypothesis import strategies as st

from capdisc.metrics import (aggregate_fares, average_time_difference, crowding_panel, equally_spaced,
                             normalized_crowding, passenger_weighted, route_indicator,
                             route_price_panel, route_segments)

minutes = st.floats(0, 1439.999, allow_nan=False)


def test_average_time_difference_examples():
    assert average_time_difference([0, 720]) == pytest.approx(2 * math.sqrt(720))
    assert average_time_difference([0, 0]) == 0.0
    assert average_time_difference([0, 480, 960]) == pytest.approx(3 * math.sqrt(480))
    assert math.isnan(average_time_difference([5]))


def test_circular_gap_wraps_midnight():
    assert average_time_difference([1430, 10]) == pytest.approx(2 * math.sqrt(20))


@pytest.mark.parametrize("n", range(2, 13))
def test_equally_spaced_is_one(n):
    assert abs(normalized_crowding(equally_spaced(n)) - 1.0) <= 1e-12
    assert abs(normalized_crowding(equally_spaced(n) + 37.5) - 1.0) <= 1e-12


def test_pair_ratio_example():
    assert normalized_crowding([0, 60]) == pytest.approx(math.sqrt(60 / 720))


@given(st.lists(minutes, min_size=2, max_size=12), st.floats(0, 1440))
def test_rotation_and_permutation_invariance(d, c):
    base = normalized_crowding(d)
    rotated = normalized_crowding([(x + c) % 1440 for x in d])
    assert rotated == pytest.approx(base, abs=1e-9)
    assert normalized_crowding(list(reversed(d))) == pytest.approx(base, abs=1e-12)
    assert 0 <= base <= 1 + 1e-12


@pytest.mark.parametrize("n", [2, 3, 4])
def test_one_only_when_equally_spaced(n):
    grid = np.arange(0, 1440, 120)
    for d in itertools.combinations_with_replacement(grid, n):
        gaps = np.diff(sorted(d) + [d[0] + 1440]) if len(set(d)) == n else None
        spaced = gaps is not None and np.allclose(gaps, 1440 / n)
        assert (abs(normalized_crowding(d) - 1) < 1e-12) == spaced, d


def test_crowding_panel():
    ontime = pd.DataFrame({"date": ["2010-01-04", "2010-01-05", "2010-01-04", "2010-02-01"],
                           "carrier": ["AA", "DL", "AA", "AA"], "origin": "A", "dest": "B",
                           "dep_minutes": [0, 720, 360, 600]})
    out = crowding_panel(ontime)
    jan = out.loc[out["month"] == 1].iloc[0]
    assert jan["n_departures"] == 3
    assert jan["crowding"] == pytest.approx(normalized_crowding([0, 720, 360]))
    assert math.isnan(out.loc[out["month"] == 2, "crowding"].item())
    by_c = crowding_panel(ontime, by_carrier=True)
    assert len(by_c) == 3
    with pytest.raises(ValueError):
        crowding_panel(ontime.assign(dep_minutes=1440))


# --------------------------------------------------------------------------- routes and fares


def test_route_indicator_examples():
    assert route_indicator([1, 1], "all") == 1
    assert route_indicator([1, 0], "all") == 0
    assert route_indicator([0, 1], "any") == 1
    with pytest.raises(ValueError):
        route_indicator([], "all")
    with pytest.raises(ValueError):
        route_indicator([1], "most")


@given(st.lists(st.floats(0, 1), min_size=1, max_size=6))
def test_all_rule_below_any_rule(v):
    assert route_indicator(v, "all") <= route_indicator(v, "any")


def test_passenger_weighted_examples():
    assert passenger_weighted([1, 0, 1], [25, 25, 50]) == 0.75
    assert passenger_weighted([0.4], [7]) == 0.4
    assert passenger_weighted([0.3, 0.3], [1, 9]) == pytest.approx(0.3)
    with pytest.raises(ValueError):
        passenger_weighted([1, 0], [0, 0])


@given(st.lists(st.tuples(st.floats(0, 1), st.floats(0.1, 100)), min_size=1, max_size=8))
def test_passenger_weighted_bounds(pairs):
    v, w = zip(*pairs)
    out = passenger_weighted(v, w)
    assert min(v) - 1e-12 <= out <= max(v) + 1e-12


def test_route_segments():
    assert route_segments("ORD-CLT-GSO", "ORD", "GSO") == [("ORD", "CLT"), ("CLT", "GSO")]
    with pytest.raises(ValueError):
        route_segments("ORD-CLT", "ORD", "GSO")


FARES = pd.DataFrame({
    "carrier": "AA", "origin": "A", "dest": "C", "year": 2010, "quarter": 2,
    "route": ["A-B-C", "A-B-D-C", "A-B-C", "A-C"],
    "passengers": [1, 4, 3, 0], "avg_fare": [100.0, 300.0, 200.0, 999.0],
})


def test_aggregate_fares_keeps_routes_separate():
    out = aggregate_fares(FARES)
    abc = out.loc[out["route"] == "A-B-C"].iloc[0]
    assert abc["avg_fare"] == 175.0 and abc["passengers"] == 4
    assert set(out["route"]) == {"A-B-C", "A-B-D-C"}
    assert aggregate_fares(FARES, markets=[("X", "Y")]).empty


def test_route_price_panel_weights():
    seg = pd.DataFrame({"origin": ["A", "B", "B", "D"], "dest": ["B", "C", "D", "C"], "year": 2010, "month": 5,
                        "CapacityDiscipline": [1, 1, 0, 1], "TalkEligible": 1, "Monopoly": 0,
                        "MissingReport": [0, 0, 1, 0]})
    out = route_price_panel(FARES, seg)
    row = out.iloc[0]
    # A-B-C (4 passengers) has CD 1; A-B-D-C (4 passengers) has CD 0 through B-D
    assert row["CapacityDiscipline"] == 0.5
    assert row["MissingReport"] == 0.5
    assert row["avg_fare"] == pytest.approx((175 * 4 + 300 * 4) / 8)
    assert row["n_routes"] == 2 and row["log_fare"] == pytest.approx(np.log(row["avg_fare"]))
