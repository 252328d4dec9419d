import pandas as pd
import pytest
from hypothesis import given
from hypothesis import strategies as st

from capdisc.core import (FRINGE_CODE, LCC_DEFAULT, LEGACY_DEFAULT, CarrierClass, CarrierRegistry,
                          Market, MergerEvent, PanelObservation, YearMonth, YearQuarter,
                          check_panel_invariants, cluster_key, cluster_label, quarter_of,
                          remap_fringe)


@pytest.mark.parametrize("ym, yq", [("2012-05", "2012Q2"), ("2012-01", "2012Q1"), ("2016-12", "2016Q4")])
def test_quarter_of_examples(ym, yq):
    assert quarter_of(YearMonth.parse(ym)) == YearQuarter.parse(yq)
    assert str(quarter_of(YearMonth.parse(ym))) == yq


def test_quarter_of_is_three_to_one():
    counts = pd.Series([str(quarter_of(YearMonth(2015, m))) for m in range(1, 13)]).value_counts()
    assert sorted(counts.index) == ["2015Q1", "2015Q2", "2015Q3", "2015Q4"]
    assert (counts == 3).all()


@given(st.integers(1990 * 12, 2030 * 12), st.integers(-60, 60))
def test_yearmonth_index_roundtrip_and_order(idx, k):
    ym = YearMonth.from_index(idx)
    assert ym.index == idx
    assert ym.shift(k).index == idx + k
    assert (ym < ym.shift(k)) == (k > 0)
    assert quarter_of(ym) in [quarter_of(m) for m in quarter_of(ym).months]


def test_yearmonth_rejects_bad_month():
    with pytest.raises(ValueError):
        YearMonth(2010, 13)
    with pytest.raises(ValueError):
        YearQuarter(2010, 5)


@pytest.mark.parametrize("o, d, key", [("GSO", "ORD", ("GSO", "ORD")), ("ORD", "GSO", ("GSO", "ORD")),
                                       ("ITH", "PHL", ("ITH", "PHL"))])
def test_cluster_key_examples(o, d, key):
    assert cluster_key(Market(o, d)) == key


@given(st.text("ABCDEFG", min_size=3, max_size=3), st.text("ABCDEFG", min_size=3, max_size=3))
def test_cluster_key_symmetric(a, b):
    if a == b:
        with pytest.raises(ValueError):
            Market(a, b)
        return
    assert cluster_key(Market(a, b)) == cluster_key(Market(b, a))
    assert cluster_label(a, b) == cluster_label(b, a)
    assert Market(a, b) != Market(b, a)


def test_default_carrier_sets():
    assert LEGACY_DEFAULT == {"AS", "AA", "CO", "DL", "NW", "UA", "US"}
    assert LCC_DEFAULT == {"FL", "B6", "WN", "NK"}
    reg = CarrierRegistry()
    assert reg.classify("AA") is CarrierClass.LEGACY
    assert reg.classify("WN") is CarrierClass.LCC
    assert reg.classify("XE") is CarrierClass.FRINGE
    with pytest.raises(ValueError):
        CarrierRegistry(legacy={"AA"}, lcc={"AA"})


def test_merger_mapping_is_date_dependent():
    reg = CarrierRegistry(mergers=[MergerEvent("CO", "UA", YearMonth(2010, 10))])
    assert reg.entity("CO", YearMonth(2010, 9)) == "CO"
    assert reg.entity("CO", YearMonth(2010, 10)) == "UA"
    assert reg.entity("UA", YearMonth(2009, 1)) == "UA"
    codes = pd.Series(["CO", "CO", "UA", "DL"])
    idx = pd.Series([YearMonth(2010, 9).index, YearMonth(2011, 1).index, 0, 0])
    assert list(reg.entity_series(codes, idx)) == ["CO", "UA", "UA", "DL"]


def test_remap_fringe_collapses_small_carriers():
    seg = pd.DataFrame({"year": 2010, "month": 1, "ticketing_carrier": ["AA", "X1", "X2", "X3"],
                        "origin": "A", "dest": "B", "seats": [100, 10, 20, 500], "flights": [1, 2, 3, 50]})
    assert remap_fringe(seg) is seg
    out = remap_fringe(seg, threshold=10)
    assert set(out["ticketing_carrier"]) == {"AA", FRINGE_CODE, "X3"}
    assert out.loc[out["ticketing_carrier"] == FRINGE_CODE, "seats"].item() == 30
    assert out["seats"].sum() == seg["seats"].sum()


def test_panel_observation_invariants():
    m = Market("A", "B")
    PanelObservation("AA", m, YearMonth(2010, 1), 100, 4, 1.0, 1, 0, 0)
    with pytest.raises(ValueError):
        PanelObservation("AA", m, YearMonth(2010, 1), 100, 4, 1.0, 0, 0, 0)
    with pytest.raises(ValueError):
        PanelObservation("AA", m, YearMonth(2010, 1), 100, 4, 0.0, 1, 1, 0)
    with pytest.raises(ValueError):
        PanelObservation("AA", m, YearMonth(2010, 1), -1, 4, 0.0, 0, 0, 0)


def test_check_panel_invariants():
    ok = pd.DataFrame({"CapacityDiscipline": [0, 1], "TalkEligible": [1, 1], "Monopoly": [0, 0]})
    check_panel_invariants(ok)
    with pytest.raises(ValueError):
        check_panel_invariants(ok.assign(TalkEligible=[1, 0]))
    with pytest.raises(ValueError):
        check_panel_invariants(ok.assign(Monopoly=[1, 0]))
    weighted = ok.assign(CapacityDiscipline=[0.25, 0.75])
    check_panel_invariants(weighted, weighted=True)
    with pytest.raises(ValueError):
        check_panel_invariants(weighted)
