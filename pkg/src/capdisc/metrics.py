"""Departure crowding and passenger-weighted route/price aggregation."""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np
import pandas as pd

MINUTES_PER_DAY = 1440


def average_time_difference(d: Sequence[float]) -> float:
    """``(2/(n-1)) * sum_{i<j} sqrt(circular gap)``; NaN when ``n < 2``.

    The circular gap between two departures is ``min(|d_i-d_j|, 1440-|d_i-d_j|)``.
    """
    d = np.asarray(d, dtype=float) % MINUTES_PER_DAY
    n = d.size
    if n < 2:
        return float("nan")
    diff = np.abs(d[:, None] - d[None, :])
    gap = np.minimum(diff, MINUTES_PER_DAY - diff)
    iu = np.triu_indices(n, 1)
    return float(2.0 / (n - 1) * np.sqrt(gap[iu]).sum())


def equally_spaced(n: int) -> np.ndarray:
    return np.arange(n) * (MINUTES_PER_DAY / n)


def normalized_crowding(d: Sequence[float]) -> float:
    """Average time difference relative to ``n`` equally spaced departures.

    Equals one for an equally spaced schedule and falls toward zero as
    departures bunch up.
    """
    n = len(d)
    if n < 2:
        return float("nan")
    return average_time_difference(d) / average_time_difference(equally_spaced(n))


def crowding_panel(ontime: pd.DataFrame, by_carrier: bool = False) -> pd.DataFrame:
    """Normalised crowding per market-month from an On-Time extract.

    ``ontime`` has ``date, carrier, origin, dest, dep_minutes``. All
    departures in the month enter one list (pooled over carriers unless
    ``by_carrier``). Groups with fewer than two departures get NaN.
    """
    dt = pd.to_datetime(ontime["date"])
    df = ontime.assign(year=dt.dt.year.to_numpy(), month=dt.dt.month.to_numpy())
    if ((df["dep_minutes"] < 0) | (df["dep_minutes"] >= MINUTES_PER_DAY)).any():
        raise ValueError("dep_minutes must lie in [0, 1440)")
    keys = ["origin", "dest", "year", "month"] + (["carrier"] if by_carrier else [])
    rows = []
    for key, grp in df.groupby(keys, sort=True):
        d = grp["dep_minutes"].to_numpy(float)
        rows.append(tuple(key) + (len(d), average_time_difference(d), normalized_crowding(d)))
    return pd.DataFrame(rows, columns=keys + ["n_departures", "avg_time_difference", "crowding"])


def route_indicator(values: Sequence[float], rule: str = "all") -> float:
    """Combine segment indicators along a route: ``all`` (min) or ``any`` (max)."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("route has no segments")
    if rule == "all":
        return float(v.min())
    if rule == "any":
        return float(v.max())
    raise ValueError(f"unknown rule {rule!r}")


def passenger_weighted(values: Sequence[float], passengers: Sequence[float]) -> float:
    """``sum_r v_r * pax_r / sum pax``."""
    v = np.asarray(values, dtype=float)
    w = np.asarray(passengers, dtype=float)
    if v.shape != w.shape:
        raise ValueError("values and passengers differ in length")
    if (w < 0).any():
        raise ValueError("negative passengers")
    tot = w.sum()
    if tot <= 0:
        raise ValueError("zero total passengers")
    return float(v @ w / tot)


def route_segments(route: str, origin: str, dest: str) -> list[tuple[str, str]]:
    """Split a route string such as ``ORD-CLT-GSO`` into its nonstop segments."""
    stops = [s for s in str(route).replace(" ", "").split("-") if s]
    if len(stops) < 2 or stops[0] != origin or stops[-1] != dest:
        raise ValueError(f"route {route!r} does not connect {origin} to {dest}")
    return list(zip(stops[:-1], stops[1:]))


def aggregate_fares(fares: pd.DataFrame, markets: Iterable[tuple[str, str]] | None = None) -> pd.DataFrame:
    """Passenger-weighted mean fare per carrier-market-route-quarter.

    Routes with the same endpoints but different stops stay separate. When
    ``markets`` is given, only those (origin, dest) pairs are kept.
    """
    df = fares.copy()
    if markets is not None:
        keep = set(map(tuple, markets))
        df = df.loc[[(o, d) in keep for o, d in zip(df["origin"], df["dest"])]]
    if (df["passengers"] <= 0).any():
        df = df.loc[df["passengers"] > 0]
    df["_rev"] = df["avg_fare"] * df["passengers"]
    keys = ["carrier", "origin", "dest", "route", "year", "quarter"]
    g = df.groupby(keys, sort=True, as_index=False)[["_rev", "passengers"]].sum()
    g["avg_fare"] = g["_rev"] / g["passengers"]
    return g.drop(columns="_rev")


SEGMENT_RULES = {"CapacityDiscipline": "all", "TalkEligible": "all", "Monopoly": "all",
                 "MissingReport": "any"}


def route_price_panel(fares: pd.DataFrame, segment_panel: pd.DataFrame,
                      rules: dict = SEGMENT_RULES) -> pd.DataFrame:
    """Carrier-market-quarter price panel with passenger-weighted indicators.

    Each segment's quarterly indicator is the mean of its monthly values in
    the market-level panel. A route combines its segments with ``rules``, then
    routes are averaged with passenger weights within carrier-market-quarter.
    Routes touching a segment absent from the panel are dropped.
    """
    seg = segment_panel.copy()
    seg["quarter"] = (seg["month"] - 1) // 3 + 1
    cols = list(rules)
    sq = seg.groupby(["origin", "dest", "year", "quarter"])[cols].mean()
    lookup = sq.to_dict("index")
    agg = aggregate_fares(fares, markets=None)
    rows = []
    for r in agg.itertuples(index=False):
        try:
            segs = route_segments(r.route, r.origin, r.dest)
        except ValueError:
            continue
        vals = []
        for a, b in segs:
            v = lookup.get((a, b, r.year, r.quarter))
            if v is None:
                break
            vals.append(v)
        else:
            ind = {c: route_indicator([v[c] for v in vals], rules[c]) for c in cols}
            rows.append({"carrier": r.carrier, "origin": r.origin, "dest": r.dest, "route": r.route,
                         "year": r.year, "quarter": r.quarter, "passengers": r.passengers,
                         "avg_fare": r.avg_fare, **ind})
    routes = pd.DataFrame(rows)
    if routes.empty:
        return routes
    keys = ["carrier", "origin", "dest", "year", "quarter"]
    w = routes["passengers"]
    for c in cols + ["avg_fare"]:
        routes[f"_{c}"] = routes[c] * w
    g = routes.groupby(keys, sort=True)
    out = g[[f"_{c}" for c in cols + ["avg_fare"]]].sum().div(g["passengers"].sum(), axis=0)
    out.columns = cols + ["avg_fare"]
    out["passengers"] = g["passengers"].sum()
    out["n_routes"] = g.size()
    out = out.reset_index()
    out["log_fare"] = np.log(out["avg_fare"])
    if "TalkEligible" in out and "MissingReport" in out:
        out["TE_x_Missing"] = out["TalkEligible"] * out["MissingReport"]
    if "Monopoly" in out and "MissingReport" in out:
        out["Mono_x_Missing"] = out["Monopoly"] * out["MissingReport"]
    out["market"] = out["origin"] + "-" + out["dest"]
    lo = np.where(out["origin"] <= out["dest"], out["origin"], out["dest"])
    hi = np.where(out["origin"] <= out["dest"], out["dest"], out["origin"])
    out["cluster"] = pd.Series(lo) + "|" + pd.Series(hi)
    out["yq"] = out["year"].astype(str) + "Q" + out["quarter"].astype(str)
    out["cm_key"] = out["carrier"] + "|" + out["market"]
    out["cyq_key"] = out["carrier"] + "|" + out["yq"]
    qi = out["year"] * 4 + out["quarter"] - 1
    out["t"] = (qi - qi.min()) / 4.0
    return out
