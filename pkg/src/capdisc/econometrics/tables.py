"""Aligned text tables: coefficient rows with standard errors in parentheses."""

from __future__ import annotations

from typing import Mapping, Optional, Sequence

import numpy as np
import pandas as pd

LABELS = {
    "CapacityDiscipline": "Capacity Discipline",
    "TalkEligible": "Talk Eligible",
    "Monopoly": "Monopoly",
    "MissingReport": "MissingReport",
    "TE_x_Missing": "Talk Eligible x MissingReport",
    "Mono_x_Missing": "Monopoly x MissingReport",
    "CapacityDiscipline_lead": "Capacity Discipline (lead)",
    "cf_residual": "Residual",
}


def _fmt(x: float, digits: int) -> str:
    return "" if x is None or not np.isfinite(x) else f"{x:.{digits}f}"


def regression_table(
    results: Sequence,
    rows: Optional[Sequence[str]] = None,
    semi: bool = True,
    titles: Optional[Sequence[str]] = None,
    labels: Mapping[str, str] = LABELS,
    digits: int = 4,
    extra: Optional[Mapping[str, Sequence]] = None,
) -> str:
    """Render results side by side.

    With ``semi=True`` binary regressors are shown as semi-elasticities (in
    percent) with delta-method standard errors; other rows show raw
    coefficients.
    """
    results = list(results)
    if rows is None:
        rows = list(dict.fromkeys(k for r in results for k in r.coef.index))
    titles = list(titles or [f"({i + 1})" for i in range(len(results))])
    body = []
    for name in rows:
        est, se = [], []
        for r in results:
            if name not in r.coef.index:
                est.append("")
                se.append("")
                continue
            b, s = float(r.coef[name]), float(r.se[name])
            sv = getattr(r, "semi", None)
            if semi and sv is not None and np.isfinite(sv.get(name, np.nan)):
                b, s = float(sv[name]), float(r.semi_se[name])
            est.append(_fmt(b, digits))
            se.append(f"({_fmt(s, digits)})")
        body.append([labels.get(name, name)] + est)
        body.append([""] + se)
    foot = [["N"] + [f"{r.n_obs:,}" for r in results]]
    if all(hasattr(r, "r2") for r in results):
        foot.append(["R-squared (within)"] + [_fmt(r.r2, 4) for r in results])
    for k, vals in (extra or {}).items():
        foot.append([k] + [str(v) for v in vals])
    header = [""] + titles
    table = [header] + body + foot
    widths = [max(len(row[i]) for row in table) for i in range(len(header))]

    def line(row):
        return row[0].ljust(widths[0]) + "".join("  " + c.rjust(w) for c, w in zip(row[1:], widths[1:]))

    rule = "-" * len(line(header))
    out = [line(header), rule] + [line(r) for r in body] + [rule] + [line(r) for r in foot]
    return "\n".join(out) + "\n"


def coefficient_frame(result, model: str = "") -> pd.DataFrame:
    df = result.to_frame()
    df.insert(0, "term", df.index)
    df.insert(0, "model", model)
    df["n_obs"] = result.n_obs
    return df.reset_index(drop=True)
