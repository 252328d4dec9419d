"""Estimation panel: call alignment, market indicators and derived splits."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
import pandas as pd

from .core import (
    MIN_SERVING_FLIGHTS,
    CarrierClass,
    CarrierRegistry,
    Market,
    YearMonth,
    YearQuarter,
    cluster_key,
    quarter_of,
)

BASE_CONTROLS = ["TalkEligible", "Monopoly", "MissingReport", "TE_x_Missing", "Mono_x_Missing"]
K_LEVELS = (2, 3, 4)


class AlignmentMode(str, enum.Enum):
    SHIFTED = "shifted"
    CONTEMPORANEOUS = "contemporaneous"


class SizeClass(str, enum.Enum):
    SMALL = "Small"
    MEDIUM = "Medium"
    LARGE = "Large"


# --------------------------------------------------------------------------- calendar


def months_for_call(q: YearQuarter, mode=AlignmentMode.SHIFTED) -> tuple[YearMonth, YearMonth, YearMonth]:
    """Months whose capacity is matched to the call about quarter ``q``.

    The call is held in month M, the first month after the quarter closes.
    Shifted mode covers M+1..M+3, contemporaneous mode M..M+2.
    """
    call_month = q.months[-1].shift(1)
    start = 1 if AlignmentMode(mode) is AlignmentMode.SHIFTED else 0
    return tuple(call_month.shift(start + i) for i in range(3))


def call_quarter(m: YearMonth, mode=AlignmentMode.SHIFTED) -> YearQuarter:
    """Inverse of :func:`months_for_call`: the quarter whose call covers ``m``."""
    q = int(_call_quarter_index(np.array([m.index]), mode)[0])
    return YearQuarter(q // 4, q % 4 + 1)


def _call_quarter_index(ym_index: np.ndarray, mode) -> np.ndarray:
    # quarter index = year*4 + q-1 of the covering call
    lag = 4 if AlignmentMode(mode) is AlignmentMode.SHIFTED else 3
    return (ym_index - lag) // 3


# --------------------------------------------------------------------------- contexts


@dataclass(frozen=True)
class MarketMonthContext:
    """Who serves a market in a month and what each carrier said.

    ``flags`` and ``reports`` are keyed by carrier code; a carrier missing from
    ``reports`` has no collected transcript for the relevant quarter.
    """

    market: Market
    year_month: YearMonth
    serving: Mapping[str, CarrierClass]
    flags: Mapping[str, int] = field(default_factory=dict)
    reports: Mapping[str, bool] = field(default_factory=dict)

    @property
    def legacies(self) -> list[str]:
        return sorted(c for c, k in self.serving.items() if k is CarrierClass.LEGACY)

    def talks(self, carrier: str) -> int:
        return int(self.reports.get(carrier, False) and self.flags.get(carrier, 0) == 1)


def talk_eligible(ctx: MarketMonthContext) -> int:
    return int(len(ctx.legacies) >= 2)


def monopoly(ctx: MarketMonthContext) -> int:
    return int(len(ctx.serving) == 1)


def missing_report(ctx: MarketMonthContext) -> int:
    return int(any(not ctx.reports.get(c, False) for c in ctx.legacies))


def capacity_discipline(ctx: MarketMonthContext) -> int:
    legs = ctx.legacies
    return int(len(legs) >= 2 and all(ctx.talks(c) for c in legs))


def variant_indicators(ctx: MarketMonthContext, j: str) -> dict[str, int]:
    """Treatment variants for carrier ``j``'s row in this market-month."""
    legs = ctx.legacies
    n = len(legs)
    talkers = [c for c in legs if ctx.talks(c)]
    te = n >= 2
    cd = int(te and len(talkers) == n)
    j_legacy = j in legs
    others = [c for c in legs if c != j]
    out = {f"CapDis_{k}": int(cd and n == k) for k in K_LEVELS}
    out["CapDis_5p"] = int(cd and n >= 5)
    out["OnlyJTalks"] = int(te and j_legacy and ctx.talks(j) and all(not ctx.talks(c) for c in others))
    out["CapDisN1"] = int(te and len(talkers) == n - 1)
    out["CapDisNotJ"] = int(te and all(ctx.talks(c) for c in others) and not (j_legacy and ctx.talks(j)))
    out["MonopolyCapDis"] = int(len(ctx.serving) == 1 and ctx.talks(j))
    return out


def market_structure_key(j: str, market: Market, serving: Iterable[str],
                         registry: Optional[CarrierRegistry] = None,
                         ym: Optional[YearMonth] = None) -> tuple:
    serving = list(serving)
    if not serving:
        raise ValueError("empty serving set")
    registry = registry or CarrierRegistry()
    ents = tuple(sorted({registry.entity(c, ym) for c in serving}))
    return (registry.entity(j, ym), str(market), ents)


# --------------------------------------------------------------------------- building


def flags_frame(results: Mapping, statuses: Optional[Mapping] = None) -> pd.DataFrame:
    """Flatten coding results ``{(carrier, YearQuarter): CodingResult}`` to a table."""
    rows = []
    for (carrier, yq), res in sorted(results.items(), key=lambda kv: (kv[0][0], kv[0][1])):
        status = "Collected" if not res.reason.startswith("status:") else res.reason.split(":", 1)[1]
        rows.append((carrier, yq.year, yq.quarter, status, int(res.flag), res.reason))
    return pd.DataFrame(rows, columns=["carrier", "year", "quarter", "status", "flag", "reason"])


def _lookup_flags(rows: pd.DataFrame, flags: pd.DataFrame, q_index: np.ndarray, column: str = "flag"):
    key = flags["year"].to_numpy(int) * 4 + flags["quarter"].to_numpy(int) - 1
    table = pd.DataFrame({
        "carrier": flags["carrier"].astype(str).to_numpy(),
        "_q": key,
        "_flag": flags[column].to_numpy(int),
        "_rep": (flags["status"].astype(str) == "Collected").to_numpy(),
    }).drop_duplicates(["carrier", "_q"], keep="last")
    left = pd.DataFrame({"carrier": rows["carrier"].to_numpy(), "_q": q_index})
    merged = left.merge(table, on=["carrier", "_q"], how="left")
    rep = merged["_rep"].eq(True).to_numpy()
    flag = merged["_flag"].fillna(0).to_numpy(int) * rep
    return flag.astype(int), rep


def build_panel(
    segments: pd.DataFrame,
    flags: pd.DataFrame,
    registry: Optional[CarrierRegistry] = None,
    mode=AlignmentMode.SHIFTED,
    min_flights: int = MIN_SERVING_FLIGHTS,
    token_flags: Optional[Mapping[str, pd.DataFrame]] = None,
) -> pd.DataFrame:
    """Carrier-market-month panel with every communication indicator.

    ``segments`` follows the segments schema (``year, month, ticketing_carrier,
    origin, dest, seats, flights[, passengers]``); ``flags`` has ``carrier,
    year, quarter, status, flag``. ``token_flags`` maps a name to a flags table
    of the same shape; each yields a ``Z_<name>`` column built like
    CapacityDiscipline.
    """
    registry = registry or CarrierRegistry()
    seg = segments.rename(columns={"ticketing_carrier": "carrier"})
    seg["carrier"] = seg["carrier"].astype(str)
    if "passengers" not in seg:
        seg["passengers"] = np.nan
    keys = ["origin", "dest", "year", "month", "carrier"]
    seg = seg.groupby(keys, as_index=False, sort=True)[["seats", "flights", "passengers"]].sum(min_count=1)
    # serving requires the minimum monthly flight count; other rows leave the panel
    seg = seg.loc[seg["flights"] >= min_flights].reset_index(drop=True)
    if (seg["origin"] == seg["dest"]).any():
        raise ValueError("segment with origin equal to destination")

    ym = (seg["year"].to_numpy(int) * 12 + seg["month"].to_numpy(int) - 1)
    qidx = _call_quarter_index(ym, mode)
    cls = seg["carrier"].map(lambda c: registry.classify(c).value).to_numpy()
    is_leg = cls == CarrierClass.LEGACY.value
    is_lcc = cls == CarrierClass.LCC.value
    flag, rep = _lookup_flags(seg, flags, qidx)
    talk = flag * rep

    out = seg
    out["ym"] = ym
    out["carrier_class"] = cls
    out["call_year"] = qidx // 4
    out["call_quarter"] = qidx % 4 + 1
    out["flag"] = talk
    out["has_report"] = rep.astype(int)
    out["market"] = out["origin"] + "-" + out["dest"]
    a = np.where(out["origin"] <= out["dest"], out["origin"], out["dest"])
    b = np.where(out["origin"] <= out["dest"], out["dest"], out["origin"])
    out["cluster"] = pd.Series(a, index=out.index) + "|" + pd.Series(b, index=out.index)

    g = out.groupby(["market", "ym"], sort=False)
    out["n_carriers"] = g["carrier"].transform("size").to_numpy()
    tmp = pd.DataFrame({
        "market": out["market"], "ym": ym, "leg": is_leg.astype(int), "lcc": is_lcc.astype(int),
        "legtalk": (is_leg & (talk == 1)).astype(int), "legnorep": (is_leg & ~rep).astype(int),
    })
    agg = tmp.groupby(["market", "ym"], sort=False)[["leg", "lcc", "legtalk", "legnorep"]].transform("sum")
    n_leg = agg["leg"].to_numpy()
    n_talk = agg["legtalk"].to_numpy()
    out["n_legacy"] = n_leg
    out["n_lcc"] = agg["lcc"].to_numpy()
    out["n_legacy_talk"] = n_talk

    te = n_leg >= 2
    cd = te & (n_talk == n_leg)
    mono = out["n_carriers"].to_numpy() == 1
    miss = agg["legnorep"].to_numpy() >= 1
    out["TalkEligible"] = te.astype(int)
    out["CapacityDiscipline"] = cd.astype(int)
    out["Monopoly"] = mono.astype(int)
    out["MissingReport"] = miss.astype(int)
    out["TE_x_Missing"] = (te & miss).astype(int)
    out["Mono_x_Missing"] = (mono & miss).astype(int)
    for k in K_LEVELS:
        out[f"CapDis_{k}"] = (cd & (n_leg == k)).astype(int)
    out["CapDis_5p"] = (cd & (n_leg >= 5)).astype(int)
    jt = is_leg & (talk == 1)
    out["OnlyJTalks"] = (te & jt & (n_talk == 1)).astype(int)
    out["CapDisN1"] = (te & (n_talk == n_leg - 1)).astype(int)
    others_talk = (n_talk - jt.astype(int)) == (n_leg - is_leg.astype(int))
    out["CapDisNotJ"] = (te & others_talk & ~jt).astype(int)
    out["MonopolyCapDis"] = (mono & (talk == 1)).astype(int)
    out["mixed"] = (out["n_lcc"].to_numpy() >= 1).astype(int)

    for name, tf in (token_flags or {}).items():
        zflag, zrep = _lookup_flags(seg, tf, qidx)
        ztalk = (zflag * zrep == 1) & is_leg
        zt = pd.Series(ztalk.astype(int), index=out.index).groupby([out["market"], out["ym"]], sort=False).transform("sum")
        out[f"Z_{name}"] = (te & (zt.to_numpy() == n_leg)).astype(int)

    # merged entity and fixed-effect keys
    out["entity"] = registry.entity_series(out["carrier"], out["ym"]).to_numpy()
    ents = out.groupby(["market", "ym"], sort=False)["entity"].transform(lambda s: ",".join(sorted(set(s))))
    out["structure_key"] = out["entity"] + "|" + out["market"] + "|" + ents
    out["cm_key"] = out["entity"] + "|" + out["market"]
    cal_q = (out["month"].to_numpy(int) - 1) // 3 + 1
    out["quarter"] = cal_q
    out["yq"] = out["year"].astype(str) + "Q" + pd.Series(cal_q, index=out.index).astype(str)
    out["cyq_key"] = out["entity"] + "|" + out["yq"]
    t0 = int(ym.min()) if len(ym) else 0
    out["t"] = (ym - t0) / 12.0
    seats = out["seats"].to_numpy(float)
    with np.errstate(divide="ignore"):
        out["log_seats"] = np.where(seats > 0, np.log(np.where(seats > 0, seats, 1.0)), np.nan)
    out = out.sort_values(["market", "carrier", "ym"], kind="mergesort").reset_index(drop=True)
    return out


def market_level(panel: pd.DataFrame) -> pd.DataFrame:
    """Collapse a carrier-level panel to one row per market-month."""
    first = ["origin", "dest", "cluster", "year", "month", "quarter", "yq", "t",
             "TalkEligible", "CapacityDiscipline", "Monopoly", "MissingReport",
             "TE_x_Missing", "Mono_x_Missing", "n_legacy", "n_lcc", "n_carriers"]
    first += [c for c in panel.columns if c.startswith("Z_") or c.startswith("D_")]
    g = panel.groupby(["market", "ym"], sort=True)
    out = g[first].first()
    out["seats"] = g["seats"].sum()
    out["flights"] = g["flights"].sum()
    out = out.reset_index()
    out["log_seats"] = np.log(out["seats"].where(out["seats"] > 0))
    return out


# --------------------------------------------------------------------------- market classes


def size_cutoffs(values: Sequence[float], lower: float = 25, upper: float = 75) -> tuple[float, float]:
    v = np.asarray(values, float)
    return float(np.percentile(v, lower)), float(np.percentile(v, upper))


def classify_by_cutoffs(value: float, cutoffs: tuple[float, float]) -> SizeClass:
    lo, hi = cutoffs
    if value <= lo:
        return SizeClass.SMALL
    if value <= hi:
        return SizeClass.MEDIUM
    return SizeClass.LARGE


def market_size_class(pop_o: float, pop_d: float, cutoffs=(1.27e6, 3.25e6)) -> SizeClass:
    """Small / Medium / Large by the geometric mean of endpoint populations."""
    if pop_o <= 0 or pop_d <= 0:
        raise ValueError("populations must be positive")
    return classify_by_cutoffs(float(np.sqrt(pop_o * pop_d)), cutoffs)


def attach_market_classes(panel: pd.DataFrame, populations: pd.DataFrame,
                          size_cut=None, business_cut=None) -> pd.DataFrame:
    """Add ``size_class`` and ``business_class`` columns.

    Market population is the sample average of the yearly geometric mean, so a
    market's class is constant over time. Business class uses the origin
    airport's index. Cutoffs default to the sample 25th/75th percentiles.
    """
    pop = populations.set_index(["airport", "year"])
    out = panel.copy()
    po = pop["cbsa_pop"].reindex(pd.MultiIndex.from_arrays([out["origin"], out["year"]])).to_numpy(float)
    pd_ = pop["cbsa_pop"].reindex(pd.MultiIndex.from_arrays([out["dest"], out["year"]])).to_numpy(float)
    if np.isnan(po).any() or np.isnan(pd_).any():
        raise ValueError("population missing for some airport-year")
    if (po <= 0).any() or (pd_ <= 0).any():
        raise ValueError("nonpositive population")
    out["market_population"] = np.sqrt(po * pd_)
    avg = out.groupby("market")["market_population"].transform("mean")
    per_market = out.groupby("market")["market_population"].mean()
    size_cut = size_cut or size_cutoffs(per_market.to_numpy())
    out["size_class"] = [classify_by_cutoffs(v, size_cut).value for v in avg.to_numpy()]
    if "business_index" in populations:
        bi = populations.groupby("airport")["business_index"].mean()
        out["business_index"] = out["origin"].map(bi).to_numpy(float)
        per_m = out.groupby("market")["business_index"].first().dropna()
        business_cut = business_cut or size_cutoffs(per_m.to_numpy())
        labels = {SizeClass.SMALL.value: "Low", SizeClass.MEDIUM.value: "Medium", SizeClass.LARGE.value: "High"}
        out["business_class"] = [labels[classify_by_cutoffs(v, business_cut).value] if np.isfinite(v) else ""
                                 for v in out["business_index"].to_numpy()]
    return out


# --------------------------------------------------------------------------- city pairs, periods


def to_city_pairs(segments: pd.DataFrame, city_of: Mapping[str, str],
                  min_flights: int = MIN_SERVING_FLIGHTS) -> pd.DataFrame:
    """Re-key airport-pair segments to city pairs.

    Only airport-level serving segments are kept; a carrier serves a city pair
    if it serves any of its airport pairs, and its seats, flights and
    passengers are summed across them.
    """
    missing = sorted(set(segments["origin"]).union(segments["dest"]) - set(city_of))
    if missing:
        raise KeyError(f"airports without a city: {missing}")
    seg = segments.loc[segments["flights"] >= min_flights].copy()
    seg["origin"] = seg["origin"].map(city_of)
    seg["dest"] = seg["dest"].map(city_of)
    seg = seg.loc[seg["origin"] != seg["dest"]]
    keys = ["year", "month", "ticketing_carrier", "origin", "dest"]
    sums = [c for c in ("seats", "flights", "passengers") if c in seg.columns]
    return seg.groupby(keys, as_index=False, sort=True)[sums].sum()


def period_split(panel: pd.DataFrame, threshold: YearMonth, column: str = "CapacityDiscipline") -> pd.DataFrame:
    """Split ``column`` into ``<column>_pre`` and ``<column>_post``; the threshold month is post."""
    out = panel.copy()
    post = (out["ym"].to_numpy() >= threshold.index).astype(int)
    out[f"{column}_pre"] = out[column].to_numpy() * (1 - post)
    out[f"{column}_post"] = out[column].to_numpy() * post
    return out


# --------------------------------------------------------------------------- designs


TREATMENTS = ("main", "k-split", "legacy-mixed", "only-j", "monopoly", "n-1", "not-j", "size", "business")


def design(panel: pd.DataFrame, variant: str = "main") -> tuple[pd.DataFrame, list[str], list[str]]:
    """Regressor layout for a treatment variant.

    Returns ``(panel, treatments, controls)``; the panel gains any interaction
    columns the variant needs. ``z-token:<name>`` and ``period-split:YYYY-MM``
    are parameterised variants.
    """
    out = panel.copy()
    base = list(BASE_CONTROLS)
    for c in ("TE_x_Missing", "Mono_x_Missing"):
        if c not in out:
            out["TE_x_Missing"] = out["TalkEligible"] * out["MissingReport"]
            out["Mono_x_Missing"] = out["Monopoly"] * out["MissingReport"]
    if variant == "main":
        return out, ["CapacityDiscipline"], base
    if variant == "k-split":
        treat = [f"CapDis_{k}" for k in K_LEVELS]
        if out.get("CapDis_5p", pd.Series(0)).any():
            treat.append("CapDis_5p")
        bucket = np.clip(out["n_legacy"].to_numpy(), 1, 5)
        ctrl = []
        for b in (2, 3, 4, 5):
            out[f"nleg_{b}"] = (bucket == b).astype(int)
            ctrl.append(f"nleg_{b}")
        ctrl.append("Monopoly")
        for b in (1, 2, 3, 4, 5):
            out[f"Missing_x_nleg_{b}"] = out["MissingReport"] * (bucket == b)
            ctrl.append(f"Missing_x_nleg_{b}")
        ctrl.append("Mono_x_Missing")
        return out, treat, ctrl
    if variant == "legacy-mixed":
        leg_row = (out["carrier_class"] == CarrierClass.LEGACY.value).to_numpy()
        mixed = out["mixed"].to_numpy() == 1
        groups = {"LegacyMkt": ~mixed, "MixedLeg": mixed & leg_row, "MixedLCC": mixed & ~leg_row}
        treat, ctrl = [], []
        for g, mask in groups.items():
            out[f"{g}_x_CD"] = out["CapacityDiscipline"] * mask
            treat.append(f"{g}_x_CD")
            for c in base:
                out[f"{g}_x_{c}"] = out[c] * mask
                ctrl.append(f"{g}_x_{c}")
        return out, treat, ctrl
    single = {"only-j": "OnlyJTalks", "monopoly": "MonopolyCapDis", "n-1": "CapDisN1", "not-j": "CapDisNotJ"}
    if variant in single:
        return out, [single[variant]], base
    if variant in ("size", "business"):
        col = "size_class" if variant == "size" else "business_class"
        if col not in out:
            raise KeyError(f"{col} missing; attach market classes first")
        levels = ["Small", "Medium", "Large"] if variant == "size" else ["Low", "Medium", "High"]
        treat, ctrl = [], []
        out = out.loc[out[col] != ""].copy() if variant == "business" else out
        for lv in levels:
            mask = (out[col] == lv).to_numpy()
            out[f"CD_x_{lv}"] = out["CapacityDiscipline"] * mask
            treat.append(f"CD_x_{lv}")
            for c in ("TalkEligible", "Monopoly", "MissingReport"):
                out[f"{c}_x_{lv}"] = out[c] * mask
                ctrl.append(f"{c}_x_{lv}")
        ctrl += ["TE_x_Missing", "Mono_x_Missing"]
        return out, treat, ctrl
    if variant.startswith("z-token:"):
        tok = variant.split(":", 1)[1]
        col = f"Z_{tok}"
        if col not in out:
            raise KeyError(f"{col} missing; build the panel with token flags for {tok!r}")
        return out, ["CapacityDiscipline", col], base
    if variant.startswith("period-split:"):
        thr = YearMonth.parse(variant.split(":", 1)[1])
        out = period_split(out, thr)
        return out, ["CapacityDiscipline_pre", "CapacityDiscipline_post"], base
    raise ValueError(f"unknown treatment variant {variant!r}")

