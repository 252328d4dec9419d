"""Strict-exogeneity lead test and two-way fixed-effects weight diagnostics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import pandas as pd

from .absorb import Absorber, FixedEffectSpec
from .ols import EstimationError, RegressionResult, estimate_fe


@dataclass
class LeadTestResult:
    coef: float
    se: float
    pvalue: float
    result: RegressionResult
    lead: str

    @property
    def significant(self) -> bool:
        return self.pvalue < 0.05


def add_market_lead(panel: pd.DataFrame, column: str = "CapacityDiscipline",
                    market: str = "market", period: str = "ym") -> pd.DataFrame:
    """Attach ``<column>_lead``: the market's value in the next period.

    Rows whose market has no observation in the next period (the last month
    of each market, and months before gaps) are dropped.
    """
    mm = panel.groupby([market, period], sort=False)[column].first()
    nxt = pd.MultiIndex.from_arrays([panel[market], panel[period] + 1])
    lead = mm.reindex(nxt).to_numpy(float)
    out = panel.copy()
    out[f"{column}_lead"] = lead
    return out.loc[np.isfinite(lead)].reset_index(drop=True)


def lead_exogeneity_test(
    panel: pd.DataFrame,
    outcome: str,
    regressors: Sequence[str],
    fe: FixedEffectSpec,
    cluster: str,
    treatment: str = "CapacityDiscipline",
    market: str = "market",
    period: str = "ym",
) -> LeadTestResult:
    """Re-estimate with the one-period lead of ``treatment`` added.

    Under strict exogeneity the lead's coefficient should be zero.
    """
    aug = add_market_lead(panel, treatment, market, period)
    lead = f"{treatment}_lead"
    res = estimate_fe(aug, outcome, list(regressors) + [lead], fe, cluster)
    if lead not in res.coef.index:
        raise EstimationError("lead regressor absorbed by the fixed effects")
    return LeadTestResult(float(res.coef[lead]), float(res.se[lead]),
                          float(res.pvalues[lead]), res, lead)


@dataclass
class TWFEWeights:
    weights: pd.Series
    residuals: pd.Series
    share_negative: float
    n_treated: int


def twfe_weights(panel: pd.DataFrame, treatment: str, fe: FixedEffectSpec,
                 controls: Sequence[str] = (), tol: float = 1e-12) -> TWFEWeights:
    """Implicit weights a two-way fixed-effects regression puts on treated cells.

    The treatment is residualised on the fixed effects (and any controls);
    weights on treated rows are the residuals divided by their treated-row
    mean, so they average to one. Returns the share of negative weights.
    """
    d = panel[treatment].to_numpy(float)
    if not np.isin(np.unique(d), (0.0, 1.0)).all():
        raise ValueError("treatment must be binary")
    treated = d == 1
    if not treated.any():
        raise ValueError("no treated cells")
    cols = [treatment] + list(controls)
    res = Absorber(panel, fe)(panel[cols].to_numpy(float)).values
    r = res[:, 0]
    if controls:
        Z = res[:, 1:]
        coef, *_ = np.linalg.lstsq(Z, r, rcond=None)
        r = r - Z @ coef
    r = np.where(np.abs(r) < tol, 0.0, r)
    if not np.any(r != 0):
        raise ValueError("treatment has no variation net of the fixed effects")
    rt = r[treated]
    mean = rt.mean()
    if abs(mean) < tol:
        raise ValueError("treated residuals average to zero; weights undefined")
    w = rt / mean
    idx = panel.index[treated]
    return TWFEWeights(pd.Series(w, index=idx), pd.Series(r, index=panel.index),
                       float((w < 0).mean()), int(treated.sum()))
