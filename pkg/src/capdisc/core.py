"""Shared domain vocabulary: carriers, markets, calendar keys and the panel row."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

import numpy as np
import pandas as pd

LEGACY_DEFAULT = frozenset({"AS", "AA", "CO", "DL", "NW", "UA", "US"})
LCC_DEFAULT = frozenset({"FL", "B6", "WN", "NK"})
FRINGE_CODE = "ZZ"
MIN_SERVING_FLIGHTS = 4


class CarrierClass(str, enum.Enum):
    LEGACY = "Legacy"
    LCC = "LCC"
    FRINGE = "Fringe"


class Granularity(str, enum.Enum):
    AIRPORT_PAIR = "AirportPair"
    CITY_PAIR = "CityPair"


@dataclass(frozen=True)
class Carrier:
    code: str
    cls: CarrierClass
    merger_group: str

    def __post_init__(self):
        if not isinstance(self.code, str) or not self.code:
            raise ValueError(f"invalid carrier code {self.code!r}")


@dataclass(frozen=True, order=True)
class YearMonth:
    year: int
    month: int

    def __post_init__(self):
        if not 1 <= self.month <= 12:
            raise ValueError(f"month out of range: {self.month}")

    @classmethod
    def parse(cls, text: str) -> "YearMonth":
        y, m = str(text).strip().split("-")
        return cls(int(y), int(m))

    @classmethod
    def from_index(cls, idx: int) -> "YearMonth":
        return cls(idx // 12, idx % 12 + 1)

    @property
    def index(self) -> int:
        """Months since year 0; consecutive months differ by one."""
        return self.year * 12 + self.month - 1

    def shift(self, n: int) -> "YearMonth":
        return YearMonth.from_index(self.index + n)

    def __str__(self):
        return f"{self.year:04d}-{self.month:02d}"


@dataclass(frozen=True, order=True)
class YearQuarter:
    year: int
    quarter: int

    def __post_init__(self):
        if not 1 <= self.quarter <= 4:
            raise ValueError(f"quarter out of range: {self.quarter}")

    @classmethod
    def parse(cls, text: str) -> "YearQuarter":
        y, q = str(text).strip().upper().split("Q")
        return cls(int(y), int(q))

    @property
    def months(self) -> tuple[YearMonth, YearMonth, YearMonth]:
        first = 3 * (self.quarter - 1) + 1
        return tuple(YearMonth(self.year, first + i) for i in range(3))

    def shift(self, n: int) -> "YearQuarter":
        idx = self.year * 4 + self.quarter - 1 + n
        return YearQuarter(idx // 4, idx % 4 + 1)

    def __str__(self):
        return f"{self.year:04d}Q{self.quarter}"


def quarter_of(m: YearMonth) -> YearQuarter:
    return YearQuarter(m.year, (m.month - 1) // 3 + 1)


@dataclass(frozen=True)
class Market:
    origin: str
    destination: str
    granularity: Granularity = Granularity.AIRPORT_PAIR

    def __post_init__(self):
        if self.origin == self.destination:
            raise ValueError(f"origin equals destination: {self.origin}")

    @property
    def cluster_key(self) -> tuple[str, str]:
        return cluster_key(self)

    def __str__(self):
        return f"{self.origin}-{self.destination}"


def cluster_key(m: Market) -> tuple[str, str]:
    """Unordered endpoint pair, represented as a sorted tuple."""
    a, b = m.origin, m.destination
    return (a, b) if a <= b else (b, a)


def cluster_label(origin: str, dest: str) -> str:
    a, b = cluster_key(Market(origin, dest))
    return f"{a}|{b}"


@dataclass(frozen=True)
class MergerEvent:
    carrier: str
    entity: str
    start: YearMonth


class CarrierRegistry:
    """Carrier classification plus date-dependent merged-entity mapping.

    A merger event ``(carrier, entity, start)`` maps ``carrier`` to ``entity``
    for every month on or after ``start``. Earlier months keep the raw code, so
    fixed effects keyed on the entity differ before and after the merger.
    """

    def __init__(
        self,
        legacy: Iterable[str] = LEGACY_DEFAULT,
        lcc: Iterable[str] = LCC_DEFAULT,
        mergers: Iterable[MergerEvent] = (),
    ):
        self.legacy = frozenset(legacy)
        self.lcc = frozenset(lcc)
        overlap = self.legacy & self.lcc
        if overlap:
            raise ValueError(f"carriers in both legacy and LCC sets: {sorted(overlap)}")
        self._mergers: dict[str, list[MergerEvent]] = {}
        for ev in mergers:
            self._mergers.setdefault(ev.carrier, []).append(ev)
        for evs in self._mergers.values():
            evs.sort(key=lambda e: e.start)

    def classify(self, code: str) -> CarrierClass:
        if code in self.legacy:
            return CarrierClass.LEGACY
        if code in self.lcc:
            return CarrierClass.LCC
        return CarrierClass.FRINGE

    def entity(self, code: str, ym: Optional[YearMonth] = None) -> str:
        evs = self._mergers.get(code)
        if not evs:
            return code
        out = code
        for ev in evs:
            if ym is None or ym >= ev.start:
                out = ev.entity
        return out

    def carrier(self, code: str, ym: Optional[YearMonth] = None) -> Carrier:
        return Carrier(code, self.classify(code), self.entity(code, ym))

    def entity_series(self, codes: pd.Series, ym_index: pd.Series) -> pd.Series:
        """Vectorised ``entity`` over aligned carrier codes and month indices."""
        out = codes.astype(str).copy()
        for code, evs in self._mergers.items():
            mask = codes == code
            if not mask.any():
                continue
            for ev in evs:
                out[mask & (ym_index >= ev.start.index)] = ev.entity
        return out


def remap_fringe(segments: pd.DataFrame, threshold: int = 0, registry: Optional[CarrierRegistry] = None) -> pd.DataFrame:
    """Collapse carriers with network-wide monthly flights below ``threshold`` to one code.

    Legacy and LCC carriers are never remapped. With the default threshold of
    zero the input is returned unchanged.
    """
    if threshold <= 0:
        return segments
    registry = registry or CarrierRegistry()
    tot = segments.groupby(["year", "month", "ticketing_carrier"])["flights"].transform("sum")
    protected = segments["ticketing_carrier"].isin(registry.legacy | registry.lcc)
    out = segments.copy()
    out.loc[(tot < threshold) & ~protected, "ticketing_carrier"] = FRINGE_CODE
    keys = ["year", "month", "ticketing_carrier", "origin", "dest"]
    sums = [c for c in ("seats", "flights", "passengers") if c in out.columns]
    return out.groupby(keys, as_index=False, sort=True)[sums].sum()


@dataclass(frozen=True)
class PanelObservation:
    """One carrier-market-month row of the estimation panel."""

    carrier: str
    market: Market
    year_month: YearMonth
    seats: int
    flights: int
    capacity_discipline: float
    talk_eligible: int
    monopoly: int
    missing_report: int
    fe_keys: tuple = ()
    variants: Mapping[str, float] = field(default_factory=dict)
    avg_fare: Optional[float] = None
    passengers: Optional[float] = None
    market_population: Optional[float] = None
    business_index: Optional[float] = None

    def __post_init__(self):
        if self.seats < 0 or self.flights < 0:
            raise ValueError("seats and flights must be nonnegative")
        for name in ("talk_eligible", "monopoly", "missing_report"):
            if getattr(self, name) not in (0, 1):
                raise ValueError(f"{name} must be 0 or 1")
        if not 0.0 <= self.capacity_discipline <= 1.0:
            raise ValueError("capacity_discipline must lie in [0, 1]")
        if self.capacity_discipline > self.talk_eligible:
            raise ValueError("CapacityDiscipline exceeds TalkEligible")
        if self.monopoly and self.talk_eligible:
            raise ValueError("a monopoly market cannot be talk-eligible")

    @property
    def cluster_key(self) -> tuple[str, str]:
        return cluster_key(self.market)


def check_panel_invariants(panel: pd.DataFrame, weighted: bool = False) -> None:
    """Raise ``ValueError`` when a constructed panel violates the row invariants."""
    cd = panel["CapacityDiscipline"].to_numpy(float)
    te = panel["TalkEligible"].to_numpy(float)
    mono = panel["Monopoly"].to_numpy(float)
    if np.any(cd > te + 1e-12):
        raise ValueError("CapacityDiscipline > TalkEligible on some rows")
    if not weighted:
        if not np.isin(cd, (0.0, 1.0)).all():
            raise ValueError("CapacityDiscipline must be binary at segment level")
        if np.any((mono == 1) & (te == 1)):
            raise ValueError("Monopoly and TalkEligible both 1 on some rows")
    elif np.any((cd < 0) | (cd > 1)):
        raise ValueError("weighted CapacityDiscipline outside [0, 1]")
    if "seats" in panel and (panel["seats"] < 0).any():
        raise ValueError("negative seats")
