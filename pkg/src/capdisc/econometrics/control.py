"""Control-function correction for endogenous market structure."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from .absorb import CARRIER_MARKET, MARKET_LEVEL, Absorber, FixedEffectSpec
from .bootstrap import BootstrapResult, cluster_bootstrap
from .ols import EstimationError, RegressionResult, estimate_fe

FIRST_STAGE_CONTROLS = ("Monopoly", "MissingReport", "Mono_x_Missing")
SECOND_STAGE_REGRESSORS = ("CapacityDiscipline", "TalkEligible", "Monopoly", "MissingReport",
                           "TE_x_Missing", "Mono_x_Missing")
RESIDUAL = "cf_residual"


class FirstStageError(EstimationError):
    pass


@dataclass
class ControlFunctionResult:
    """First-stage fit, market-level residuals and the augmented second stage.

    ``first_stage_f`` is the cluster-robust Wald statistic on the instruments
    divided by their number. ``bootstrap`` (if run) re-estimates both stages
    per replicate; its ``se`` index carries ``fs:`` and ``ss:`` prefixes.
    """

    first_stage: RegressionResult
    first_stage_f: float
    residuals: pd.Series
    second_stage: RegressionResult
    instruments: list
    bootstrap: Optional[BootstrapResult] = None
    two_step_cov: Optional[pd.DataFrame] = None

    @property
    def two_step_se(self) -> pd.Series:
        """Second-stage standard errors that account for the estimated residual."""
        if self.two_step_cov is None:
            raise ValueError("two-step covariance not computed")
        return pd.Series(np.sqrt(np.diag(self.two_step_cov.to_numpy())), index=self.two_step_cov.index)

    @property
    def sigma(self) -> pd.Series:
        return self.first_stage.coef.reindex(self.instruments)

    def bootstrap_se(self, stage: str = "ss") -> pd.Series:
        if self.bootstrap is None:
            raise ValueError("bootstrap was not run")
        se = self.bootstrap.se
        keep = [k for k in se.index if k.startswith(stage + ":")]
        return pd.Series(se[keep].to_numpy(), index=[k.split(":", 1)[1] for k in keep])


def market_month_frame(panel: pd.DataFrame, columns: Sequence[str]) -> pd.DataFrame:
    """One row per market-month holding market-level columns."""
    base = ["market", "ym", "origin", "dest", "cluster", "yq", "t"]
    cols = list(dict.fromkeys(base + [c for c in columns if c not in base]))
    return panel.groupby(["market", "ym"], sort=True)[cols[2:]].first().reset_index()


def _fit(panel, instruments, outcome, regressors, fe, fs_fe, fs_controls, cluster, treat="TalkEligible"):
    mkt = market_month_frame(panel, list(instruments) + list(fs_controls) + [treat])
    try:
        fs = estimate_fe(mkt, treat, list(instruments) + list(fs_controls), fs_fe, cluster,
                         keep_residuals=True)
    except EstimationError as exc:
        raise FirstStageError(f"first stage not identified: {exc}") from exc
    kept = [z for z in instruments if z in fs.coef.index]
    if not kept:
        raise FirstStageError("no instrument survives the first stage (zero variance); F = 0")
    F = fs.wald(kept)
    r = pd.Series(np.nan, index=mkt.index)
    r.loc[fs.residuals.index] = fs.residuals
    rkey = pd.Series(r.to_numpy(), index=pd.MultiIndex.from_frame(mkt[["market", "ym"]]))
    aug = panel.copy()
    aug[RESIDUAL] = rkey.reindex(pd.MultiIndex.from_frame(panel[["market", "ym"]])).to_numpy()
    ss = estimate_fe(aug, outcome, list(regressors) + [RESIDUAL], fe, cluster)
    return fs, F, rkey, ss, mkt, aug


def _two_step_covariance(mkt, aug, fs, ss, outcome, fe, fs_fe, cluster, treat="TalkEligible"):
    """Cluster-robust covariance of the second stage with the first-stage
    estimation error propagated through the residual (stacked linear
    estimating equations, CR1 factor of the second stage)."""
    zn = list(fs.coef.index)
    xn = list(ss.coef.index)
    # first stage, absorbed
    m_ok = np.isfinite(mkt[[treat] + zn].to_numpy(float)).all(axis=1)
    mk = mkt.loc[m_ok]
    A1 = Absorber(mk, fs_fe)(mk[[treat] + zn].to_numpy(float)).values
    Z1, r1 = A1[:, 1:], A1[:, 0] - A1[:, 1:] @ fs.coef.to_numpy()
    # first-stage regressors carried to carrier rows, then absorbed on the outcome fixed effects
    zt = pd.DataFrame(Z1, index=pd.MultiIndex.from_frame(mk[["market", "ym"]]), columns=zn)
    cols = [outcome] + xn
    a_ok = np.isfinite(aug[cols].to_numpy(float)).all(axis=1)
    ag = aug.loc[a_ok]
    Zc = zt.reindex(pd.MultiIndex.from_frame(ag[["market", "ym"]])).to_numpy(float)
    A2 = Absorber(ag, fe)(np.column_stack([ag[cols].to_numpy(float), Zc])).values
    y2, X2, Zs = A2[:, 0], A2[:, 1:1 + len(xn)], A2[:, 1 + len(xn):]
    e2 = y2 - X2 @ ss.coef.to_numpy()
    rho = float(ss.coef[RESIDUAL])
    last = xn.index(RESIDUAL)
    H1 = Z1.T @ Z1
    H2 = X2.T @ X2
    # d(second-stage score)/d(pi): rho * X2'Zs minus the residual column's own derivative
    G = rho * (X2.T @ Zs)
    G[last, :] -= e2 @ Zs
    labels = pd.Index(pd.unique(pd.concat([mk[cluster], ag[cluster]]).to_numpy()))
    c1 = labels.get_indexer(mk[cluster])
    c2 = labels.get_indexer(ag[cluster])
    C = len(labels)
    S1 = np.column_stack([np.bincount(c1, weights=Z1[:, j] * r1, minlength=C) for j in range(Z1.shape[1])])
    S2 = np.column_stack([np.bincount(c2, weights=X2[:, j] * e2, minlength=C) for j in range(X2.shape[1])])
    psi = (S2 + S1 @ np.linalg.solve(H1, G.T)) @ np.linalg.inv(H2).T
    n, K = X2.shape
    V = psi.T @ psi * (C / (C - 1.0)) * ((n - 1.0) / (n - K))
    return pd.DataFrame((V + V.T) / 2, index=xn, columns=xn)


def control_function(
    panel: pd.DataFrame,
    instruments: Sequence[str],
    outcome: str = "log_seats",
    regressors: Sequence[str] = SECOND_STAGE_REGRESSORS,
    fe: FixedEffectSpec = CARRIER_MARKET,
    first_stage_fe: FixedEffectSpec = MARKET_LEVEL,
    first_stage_controls: Sequence[str] = FIRST_STAGE_CONTROLS,
    cluster: str = "cluster",
    B: int = 0,
    seed: int = 0,
    n_jobs: int = 1,
    min_f: float = 1e-8,
) -> ControlFunctionResult:
    """Two-step control function.

    First stage (market-month): TalkEligible on the hub-distance instruments
    and ``first_stage_controls`` with ``first_stage_fe``. Its residual is
    merged back to the carrier rows and added to the outcome equation. With
    ``B > 0`` both steps are re-run in each cluster-bootstrap replicate.
    """
    instruments = list(instruments)
    missing = [z for z in instruments if z not in panel.columns]
    if missing:
        raise KeyError(f"instrument columns missing: {missing}")
    fs, F, r, ss, mkt, aug = _fit(panel, instruments, outcome, regressors, fe, first_stage_fe,
                                  first_stage_controls, cluster)
    if not np.isfinite(F) or F < min_f:
        raise FirstStageError(f"first-stage F = {F:.3g}; instruments carry no variation")
    V2 = _two_step_covariance(mkt, aug, fs, ss, outcome, fe, first_stage_fe, cluster)
    boot = None
    if B:
        def est(sample):
            f1, _, _, s2, _, _ = _fit(sample, instruments, outcome, regressors, fe, first_stage_fe,
                                      first_stage_controls, cluster)
            return pd.concat([f1.coef.add_prefix("fs:"), s2.coef.add_prefix("ss:")])
        boot = cluster_bootstrap(est, panel, cluster, B=B, seed=seed, n_jobs=n_jobs, rekey=("market",))
    return ControlFunctionResult(fs, F, r, ss, instruments, boot, V2)
