"""File schemas for every pipeline input and output.

All files are UTF-8, comma-delimited, with a mandatory header row. Readers
validate the header and every cell and raise :class:`SchemaError` naming the
file line and column of the first violation. Writers use ``\\n`` line endings
and 17 significant digits for floats so outputs are byte-reproducible.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
import pandas as pd

from .core import MergerEvent, YearMonth, YearQuarter
from .textproc import LabelOverride, LabelSource, TranscriptRecord, TranscriptStatus

FLOAT_FORMAT = "%.17g"
TRANSCRIPT_RE = re.compile(r"^([A-Z0-9]{2})_(\d{4})Q([1-4])\.txt$")


class SchemaError(ValueError):
    """Input file violates its schema.

    Attributes
    ----------
    path : str
        File that failed validation.
    line : int or None
        1-based file line (the header is line 1), when the error is row-specific.
    column : str or None
        Offending column, when the error is column-specific.
    """

    def __init__(self, path, message: str, line: Optional[int] = None, column: Optional[str] = None):
        self.path = str(path)
        self.line = line
        self.column = column
        self.message = message
        where = self.path
        if line is not None:
            where += f":{line}"
        if column is not None:
            where += f" [{column}]"
        super().__init__(f"{where}: {message}")

    def record(self) -> dict:
        return {"error": "schema", "path": self.path, "line": self.line, "column": self.column,
                "message": self.message}


@dataclass(frozen=True)
class Column:
    name: str
    kind: str                       # int | float | str
    check: Optional[Callable] = None  # vectorised predicate on the parsed column
    rule: str = ""
    required: bool = True


@dataclass(frozen=True)
class Schema:
    name: str
    columns: tuple
    extra_ok: bool = False

    @property
    def names(self) -> list:
        return [c.name for c in self.columns]


def _between(lo, hi, right_open=False):
    if right_open:
        return lambda s: (s >= lo) & (s < hi)
    return lambda s: (s >= lo) & (s <= hi)


def _nonneg(s):
    return s >= 0


def _in(values):
    vals = set(values)
    return lambda s: s.isin(vals)


_CODE = lambda s: s.str.len() > 0  # noqa: E731
_DATE_RE = r"^\d{4}-\d{2}-\d{2}$"

SEGMENTS = Schema("segments", (
    Column("year", "int", _between(1900, 2200), "year in [1900, 2200]"),
    Column("month", "int", _between(1, 12), "month in 1..12"),
    Column("ticketing_carrier", "str", _CODE, "non-empty"),
    Column("origin", "str", _CODE, "non-empty"),
    Column("dest", "str", _CODE, "non-empty"),
    Column("seats", "int", _nonneg, "non-negative"),
    Column("flights", "int", _nonneg, "non-negative"),
    Column("passengers", "int", _nonneg, "non-negative", required=False),
))
STATUS = Schema("status", (
    Column("carrier", "str", _CODE, "non-empty"),
    Column("year", "int", _between(1900, 2200), "year in [1900, 2200]"),
    Column("quarter", "int", _between(1, 4), "quarter in 1..4"),
    Column("status", "str", _in([s.value for s in TranscriptStatus]),
           "one of " + "|".join(s.value for s in TranscriptStatus)),
))
LABELS = Schema("labels", (
    Column("carrier", "str", _CODE, "non-empty"),
    Column("year", "int", _between(1900, 2200), "year in [1900, 2200]"),
    Column("quarter", "int", _between(1, 4), "quarter in 1..4"),
    Column("label", "int", _in([0, 1]), "0 or 1"),
    Column("source", "str", _in([s.value for s in LabelSource]),
           "one of " + "|".join(s.value for s in LabelSource)),
))
COORDINATES = Schema("coordinates", (
    Column("airport", "str", _CODE, "non-empty"),
    Column("lat", "float", _between(-90, 90), "latitude in [-90, 90]"),
    Column("lon", "float", _between(-180, 180), "longitude in [-180, 180]"),
))
POPULATIONS = Schema("populations", (
    Column("airport", "str", _CODE, "non-empty"),
    Column("year", "int", _between(1900, 2200), "year in [1900, 2200]"),
    Column("cbsa_pop", "float", _nonneg, "non-negative"),
    Column("business_index", "float", None, ""),
))
ONTIME = Schema("ontime", (
    Column("date", "str", lambda s: s.str.match(_DATE_RE), "YYYY-MM-DD"),
    Column("carrier", "str", _CODE, "non-empty"),
    Column("origin", "str", _CODE, "non-empty"),
    Column("dest", "str", _CODE, "non-empty"),
    Column("dep_minutes", "int", _between(0, 1440, right_open=True), "minutes in [0, 1440)"),
))
FARES = Schema("fares", (
    Column("carrier", "str", _CODE, "non-empty"),
    Column("origin", "str", _CODE, "non-empty"),
    Column("dest", "str", _CODE, "non-empty"),
    Column("route", "str", _CODE, "non-empty"),
    Column("passengers", "int", _nonneg, "non-negative"),
    Column("avg_fare", "float", _nonneg, "non-negative"),
    Column("year", "int", _between(1900, 2200), "year in [1900, 2200]"),
    Column("quarter", "int", _between(1, 4), "quarter in 1..4"),
))
CITY_MAP = Schema("city_map", (
    Column("airport", "str", _CODE, "non-empty"),
    Column("city", "str", _CODE, "non-empty"),
))
MERGERS = Schema("mergers", (
    Column("carrier", "str", _CODE, "non-empty"),
    Column("entity", "str", _CODE, "non-empty"),
    Column("year", "int", _between(1900, 2200), "year in [1900, 2200]"),
    Column("month", "int", _between(1, 12), "month in 1..12"),
))
FLAGS = Schema("flags", (
    Column("carrier", "str", _CODE, "non-empty"),
    Column("year", "int", _between(1900, 2200), "year in [1900, 2200]"),
    Column("quarter", "int", _between(1, 4), "quarter in 1..4"),
    Column("status", "str", _in([s.value for s in TranscriptStatus]), "transcript status"),
    Column("flag", "int", _in([0, 1]), "0 or 1"),
    Column("reason", "str", None, "", required=False),
))
HUB_DISTANCES = Schema("hub_distances", (
    Column("origin", "str", _CODE, "non-empty"),
    Column("dest", "str", _CODE, "non-empty"),
    Column("year", "int", _between(1900, 2200), "year in [1900, 2200]"),
    Column("month", "int", _between(1, 12), "month in 1..12"),
), extra_ok=True)

SCHEMAS = {s.name: s for s in (SEGMENTS, STATUS, LABELS, COORDINATES, POPULATIONS, ONTIME, FARES,
                               CITY_MAP, MERGERS, FLAGS, HUB_DISTANCES)}

_INT_RE = re.compile(r"^[+-]?\d+$")


def read_table(path, schema: Schema) -> pd.DataFrame:
    """Read and validate a CSV against ``schema``.

    Raises
    ------
    SchemaError
        Missing file, bad header, unparsable or out-of-domain cell.
    """
    path = Path(path)
    if not path.is_file():
        raise SchemaError(path, "file not found")
    try:
        raw = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise SchemaError(path, f"not UTF-8: {exc}") from None
    except pd.errors.ParserError as exc:
        raise SchemaError(path, f"malformed CSV: {exc}") from None
    except pd.errors.EmptyDataError:
        raise SchemaError(path, "empty file; a header row is mandatory", line=1) from None
    header = list(raw.columns)
    for c in schema.columns:
        if c.required and c.name not in header:
            raise SchemaError(path, f"missing column {c.name!r}", line=1, column=c.name)
    known = set(schema.names)
    unknown = [h for h in header if h not in known]
    if unknown and not schema.extra_ok:
        raise SchemaError(path, f"unexpected column {unknown[0]!r}", line=1, column=unknown[0])
    out = {}
    for c in schema.columns:
        if c.name not in header:
            continue
        s = raw[c.name].str.strip()
        empty = s == ""
        if empty.any():
            i = int(np.flatnonzero(empty.to_numpy())[0])
            raise SchemaError(path, "empty value", line=i + 2, column=c.name)
        if c.kind == "int":
            bad = ~s.str.match(_INT_RE)
            if bad.any():
                i = int(np.flatnonzero(bad.to_numpy())[0])
                raise SchemaError(path, f"expected an integer, got {s.iloc[i]!r}", line=i + 2, column=c.name)
            v = s.astype(np.int64)
        elif c.kind == "float":
            v = pd.to_numeric(s, errors="coerce")
            bad = v.isna() | ~np.isfinite(v)
            if bad.any():
                i = int(np.flatnonzero(bad.to_numpy())[0])
                raise SchemaError(path, f"expected a finite number, got {s.iloc[i]!r}", line=i + 2, column=c.name)
            v = v.astype(float)
        else:
            v = s
        if c.check is not None:
            ok = np.asarray(c.check(v), dtype=bool)
            if not ok.all():
                i = int(np.flatnonzero(~ok)[0])
                raise SchemaError(path, f"value {s.iloc[i]!r} violates rule: {c.rule}", line=i + 2, column=c.name)
        out[c.name] = v
    df = pd.DataFrame(out, index=raw.index)
    if schema.extra_ok:
        for h in unknown:
            df[h] = pd.to_numeric(raw[h].replace("", np.nan), errors="coerce")
    return df


def write_table(df: pd.DataFrame, path) -> None:
    """Write a frame as CSV with fixed float precision and ``\\n`` line endings."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n", encoding="utf-8")


def read_panel(path) -> pd.DataFrame:
    """Read a panel written by :func:`write_table` (no cell validation)."""
    path = Path(path)
    if not path.is_file():
        raise SchemaError(path, "file not found")
    # airport codes such as NAN or NUL must stay strings; only empty cells are missing
    df = pd.read_csv(path, keep_default_na=False, na_values=[""])
    for col in ("origin", "dest", "carrier", "entity", "market", "cluster", "cm_key", "cyq_key",
                "structure_key", "yq", "carrier_class"):
        if col in df:
            df[col] = df[col].astype(str)
    return df


# --------------------------------------------------------------------------- domain loaders


def read_overrides(path) -> list[LabelOverride]:
    df = read_table(path, LABELS)
    return [LabelOverride(c, YearQuarter(int(y), int(q)), int(lab), LabelSource(src))
            for c, y, q, lab, src in zip(df["carrier"], df["year"], df["quarter"], df["label"], df["source"])]


def read_mergers(path) -> list[MergerEvent]:
    df = read_table(path, MERGERS)
    return [MergerEvent(c, e, YearMonth(int(y), int(m)))
            for c, e, y, m in zip(df["carrier"], df["entity"], df["year"], df["month"])]


def transcript_name(carrier: str, yq: YearQuarter) -> str:
    return f"{carrier}_{yq.year:04d}Q{yq.quarter}.txt"


def read_transcripts(directory, status_path) -> list[TranscriptRecord]:
    """One record per status row; collected calls read ``CARRIER_YYYYQN.txt``.

    Raises
    ------
    SchemaError
        A collected call without a file, a file without a status row, or a
        duplicated status row.
    """
    directory = Path(directory)
    status = read_table(status_path, STATUS)
    if not directory.is_dir():
        raise SchemaError(directory, "transcript directory not found")
    keys = list(zip(status["carrier"], status["year"], status["quarter"]))
    seen = set()
    for i, k in enumerate(keys):
        if k in seen:
            raise SchemaError(status_path, f"duplicate status row for {k[0]} {k[1]}Q{k[2]}", line=i + 2)
        seen.add(k)
    files = {}
    for p in sorted(directory.iterdir()):
        if p.suffix != ".txt":
            continue
        m = TRANSCRIPT_RE.match(p.name)
        if not m:
            raise SchemaError(p, "transcript file name must be CARRIER_YYYYQN.txt")
        files[(m.group(1), int(m.group(2)), int(m.group(3)))] = p
    records = []
    for i, (k, st) in enumerate(zip(keys, status["status"])):
        yq = YearQuarter(int(k[1]), int(k[2]))
        if st == TranscriptStatus.COLLECTED.value:
            if k not in files:
                raise SchemaError(status_path, f"no transcript file for collected call {transcript_name(k[0], yq)}",
                                  line=i + 2, column="status")
            text = files[k].read_text(encoding="utf-8")
            records.append(TranscriptRecord(k[0], yq, TranscriptStatus.COLLECTED, text).tokenize())
        else:
            records.append(TranscriptRecord(k[0], yq, TranscriptStatus(st)))
    orphans = sorted(set(files) - seen)
    if orphans:
        c, y, q = orphans[0]
        raise SchemaError(files[orphans[0]], f"transcript has no status row ({c} {y}Q{q})")
    return records


def read_key_value(path) -> dict:
    """Plain ``key = value`` config; ``#`` starts a comment; later keys win."""
    out = {}
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{n}: expected key = value")
        k, v = line.split("=", 1)
        out[k.strip().replace("-", "_")] = v.strip()
    return out
