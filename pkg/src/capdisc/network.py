"""Carrier route networks, betweenness-centrality hubs and hub-distance instruments."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Mapping, Optional, Sequence

import numpy as np
import pandas as pd

from .core import LCC_DEFAULT, LEGACY_DEFAULT, MIN_SERVING_FLIGHTS

EARTH_RADIUS_MI = 3958.7613
HUB_THRESHOLD = 0.1


class Graph:
    """Undirected, unweighted simple graph on hashable node labels."""

    def __init__(self, edges: Iterable[tuple] = (), nodes: Iterable[Hashable] = ()):
        self.adj: dict = {}
        for v in nodes:
            self.adj.setdefault(v, set())
        for a, b in edges:
            self.add_edge(a, b)

    def add_edge(self, a, b):
        if a == b:
            return
        self.adj.setdefault(a, set()).add(b)
        self.adj.setdefault(b, set()).add(a)

    @property
    def nodes(self) -> list:
        return sorted(self.adj)

    @property
    def edges(self) -> list[tuple]:
        return sorted({tuple(sorted((a, b))) for a, nbrs in self.adj.items() for b in nbrs})

    def __len__(self):
        return len(self.adj)


def betweenness(g: Graph) -> dict:
    """Normalised betweenness centrality by Brandes accumulation.

    ``B_k`` sums, over ordered pairs ``(s, t)`` of distinct nodes other than
    ``k``, the share of shortest ``s``-``t`` paths passing through ``k``,
    divided by ``(N-1)(N-2)``. Path counts are exact integers; pairs with no
    path contribute nothing.

    Raises
    ------
    ValueError
        If the graph has fewer than three nodes.
    """
    nodes = g.nodes
    N = len(nodes)
    if N < 3:
        raise ValueError(f"betweenness needs at least 3 nodes, got {N}")
    cb = dict.fromkeys(nodes, 0.0)
    # fixed neighbour order keeps floating-point accumulation independent of hashing
    adj = {v: sorted(g.adj[v]) for v in nodes}
    for s in nodes:
        stack = []
        pred = {v: [] for v in nodes}
        sigma = dict.fromkeys(nodes, 0)
        sigma[s] = 1
        dist = {s: 0}
        q = deque([s])
        while q:
            v = q.popleft()
            stack.append(v)
            for w in adj[v]:
                if w not in dist:
                    dist[w] = dist[v] + 1
                    q.append(w)
                if dist[w] == dist[v] + 1:
                    sigma[w] += sigma[v]
                    pred[w].append(v)
        delta = dict.fromkeys(nodes, 0.0)
        while stack:
            w = stack.pop()
            for v in pred[w]:
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w])
            if w != s:
                cb[w] += delta[w]
    scale = 1.0 / ((N - 1) * (N - 2))
    return {v: cb[v] * scale for v in nodes}


def hubs(centrality: Mapping, threshold: float = HUB_THRESHOLD) -> set:
    """Nodes with centrality at least ``threshold``."""
    return {k for k, b in centrality.items() if b >= threshold}


@dataclass
class CarrierNetwork:
    carrier: str
    period: str
    graph: Graph
    centrality: dict = field(default_factory=dict)
    hubs: set = field(default_factory=set)

    @classmethod
    def from_edges(cls, carrier, period, edges, threshold: float = HUB_THRESHOLD):
        g = Graph(edges)
        if len(g) < 3:
            return cls(carrier, period, g, {}, set())
        c = betweenness(g)
        return cls(carrier, period, g, c, hubs(c, threshold))

    @property
    def nodes(self) -> list:
        return self.graph.nodes


def period_label(year, month, granularity: str = "quarter"):
    if granularity == "quarter":
        return f"{int(year):04d}Q{(int(month) - 1) // 3 + 1}"
    if granularity == "month":
        return f"{int(year):04d}-{int(month):02d}"
    raise ValueError(f"unknown network period {granularity!r}")


def build_networks(segments: pd.DataFrame, period: str = "quarter",
                   threshold: float = HUB_THRESHOLD, min_flights: int = MIN_SERVING_FLIGHTS,
                   carriers: Optional[Iterable[str]] = None) -> dict:
    """One network per (carrier, period) from served segments.

    A segment is an edge when the carrier flies it at least ``min_flights``
    times in some month of the period; direction is ignored.
    """
    seg = segments.loc[segments["flights"] >= min_flights]
    if carriers is not None:
        seg = seg.loc[seg["ticketing_carrier"].isin(set(carriers))]
    labels = [period_label(y, m, period) for y, m in zip(seg["year"], seg["month"])]
    seg = seg.assign(_period=labels)
    out = {}
    for (car, per), grp in seg.groupby(["ticketing_carrier", "_period"], sort=True):
        out[(car, per)] = CarrierNetwork.from_edges(car, per, zip(grp["origin"], grp["dest"]), threshold)
    return out


def haversine(a: Sequence[float], b: Sequence[float], radius: float = EARTH_RADIUS_MI) -> float:
    """Great-circle distance in miles between ``(lat, lon)`` points in degrees."""
    return float(haversine_np(np.asarray(a[0]), np.asarray(a[1]), np.asarray(b[0]), np.asarray(b[1]), radius))


def haversine_np(lat1, lon1, lat2, lon2, radius: float = EARTH_RADIUS_MI):
    p1, p2 = np.radians(lat1), np.radians(lat2)
    dphi = p2 - p1
    dlmb = np.radians(lon2) - np.radians(lon1)
    h = np.sin(dphi / 2) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dlmb / 2) ** 2
    return 2 * radius * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))


def _coords(coordinates) -> dict:
    if isinstance(coordinates, pd.DataFrame):
        return {a: (float(la), float(lo)) for a, la, lo in
                zip(coordinates["airport"], coordinates["lat"], coordinates["lon"])}
    return dict(coordinates)


def nearest_hub_distance(airport: str, hub_set: Iterable[str], coordinates) -> float:
    coords = _coords(coordinates)
    hub_set = list(hub_set)
    if not hub_set:
        return float("nan")
    for a in [airport] + hub_set:
        if a not in coords:
            raise KeyError(f"no coordinates for airport {a}")
    return min(haversine(coords[airport], coords[h]) for h in hub_set)


def hub_distance(origin: str, dest: str, hub_set: Iterable[str], coordinates) -> float:
    """Origin-to-nearest-hub plus destination-to-nearest-hub miles; NaN without hubs."""
    hub_set = list(hub_set)
    if not hub_set:
        return float("nan")
    return nearest_hub_distance(origin, hub_set, coordinates) + nearest_hub_distance(dest, hub_set, coordinates)


def hub_distance_table(
    markets: pd.DataFrame,
    networks: Mapping,
    coordinates,
    legacy: Iterable[str] = LEGACY_DEFAULT,
    lcc: Iterable[str] = LCC_DEFAULT,
    period: str = "quarter",
) -> pd.DataFrame:
    """Hub-distance instruments for each market-month.

    ``markets`` needs ``origin, dest, year, month``. Returns one ``D_<code>``
    column per legacy carrier and ``D_LCC`` (minimum over LCCs), plus
    ``D_missing``, the count of legacy instruments that are undefined because
    the carrier has no hub in that period.
    """
    coords = _coords(coordinates)
    out = markets[["origin", "dest", "year", "month"]].copy()
    per = np.array([period_label(y, m, period) for y, m in zip(out["year"], out["month"])])
    airports = sorted(set(out["origin"]).union(out["dest"]))
    missing = [a for a in airports if a not in coords]
    if missing:
        raise KeyError(f"no coordinates for airports {missing[:10]}")
    lat = np.array([coords[a][0] for a in airports])
    lon = np.array([coords[a][1] for a in airports])
    pos = {a: i for i, a in enumerate(airports)}
    oi = out["origin"].map(pos).to_numpy()
    di = out["dest"].map(pos).to_numpy()

    def column(code):
        col = np.full(len(out), np.nan)
        for p in np.unique(per):
            net = networks.get((code, p))
            if net is None or not net.hubs:
                continue
            hs = sorted(net.hubs)
            hl = np.array([coords[h][0] for h in hs])
            ho = np.array([coords[h][1] for h in hs])
            near = haversine_np(lat[:, None], lon[:, None], hl[None, :], ho[None, :]).min(axis=1)
            rows = per == p
            col[rows] = near[oi[rows]] + near[di[rows]]
        return col

    legacy = sorted(legacy)
    for code in legacy:
        out[f"D_{code}"] = column(code)
    lcc_cols = np.column_stack([column(c) for c in sorted(lcc)]) if lcc else np.full((len(out), 1), np.nan)
    with np.errstate(all="ignore"):
        all_nan = np.isnan(lcc_cols).all(axis=1)
        out["D_LCC"] = np.where(all_nan, np.nan, np.nanmin(np.where(np.isnan(lcc_cols), np.inf, lcc_cols), axis=1))
    out["D_missing"] = out[[f"D_{c}" for c in legacy]].isna().sum(axis=1)
    return out


def hubs_frame(networks: Mapping) -> pd.DataFrame:
    """Audit table: one row per (carrier, period, airport) with centrality and hub flag."""
    rows = []
    for (car, per), net in sorted(networks.items()):
        for a in net.nodes:
            b = net.centrality.get(a, np.nan)
            rows.append((car, per, a, b, int(a in net.hubs)))
    return pd.DataFrame(rows, columns=["carrier", "period", "airport", "betweenness", "hub"])
