"""Within estimator with cluster-robust inference."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from scipy import linalg, stats

from .absorb import DEFAULT_MAX_ITER, DEFAULT_TOL, Absorber, FixedEffectSpec

COLLINEAR_TOL = 1e-9
COVARIANCE_CONVENTION = "CR1: C/(C-1)*(n-1)/(n-K), K = retained regressors"
R2_CONVENTION = "within"


class EstimationError(RuntimeError):
    pass


def semi_elasticity(beta):
    """Percentage effect of a dummy on a log outcome, ``100 * (exp(beta) - 1)``."""
    return 100.0 * np.expm1(np.asarray(beta, dtype=float))


def is_binary(x) -> bool:
    v = np.unique(np.asarray(x, dtype=float))
    return bool(np.isin(v, (0.0, 1.0)).all())


def collinear_columns(X: np.ndarray, tol: float = COLLINEAR_TOL) -> np.ndarray:
    """Boolean mask of columns to keep, via pivoted QR on unit-scaled columns.

    A column whose norm is negligible relative to ``sqrt(n)`` is treated as
    absorbed and dropped before the decomposition.
    """
    n, k = X.shape
    keep = np.zeros(k, dtype=bool)
    if k == 0:
        return keep
    norms = np.linalg.norm(X, axis=0)
    live = norms > tol * max(1.0, np.sqrt(n))
    if not live.any():
        return keep
    idx = np.flatnonzero(live)
    Z = X[:, idx] / norms[idx]
    _, R, piv = linalg.qr(Z, mode="economic", pivoting=True)
    d = np.abs(np.diag(R))
    rank = int((d > tol * max(1.0, d[0])).sum()) if d.size else 0
    if rank == len(idx):
        keep[idx] = True
        return keep
    # rank deficient: retain columns greedily in input order so that earlier
    # regressors (the treatments) survive
    chosen = []
    for j in range(len(idx)):
        R = linalg.qr(Z[:, chosen + [j]], mode="r")[0]
        if abs(R[len(chosen), len(chosen)]) > tol:
            chosen.append(j)
        if len(chosen) == rank:
            break
    keep[idx[chosen]] = True
    return keep


def cluster_scores(X: np.ndarray, e: np.ndarray, codes: np.ndarray, n_clusters: int) -> np.ndarray:
    """Per-cluster sums of ``x_i * e_i`` (shape ``C x K``)."""
    S = np.empty((n_clusters, X.shape[1]))
    for j in range(X.shape[1]):
        S[:, j] = np.bincount(codes, weights=X[:, j] * e, minlength=n_clusters)
    return S


def cluster_covariance(X: np.ndarray, e: np.ndarray, codes: np.ndarray,
                       bread: Optional[np.ndarray] = None) -> np.ndarray:
    """Sandwich ``(X'X)^-1 (sum_c X_c'e_c e_c'X_c) (X'X)^-1`` with the CR1 factor."""
    n, K = X.shape
    C = int(codes.max()) + 1
    if C < 2:
        raise EstimationError("need at least two clusters")
    if bread is None:
        bread = np.linalg.inv(X.T @ X)
    S = cluster_scores(X, e, codes, C)
    meat = S.T @ S
    V = bread @ meat @ bread
    V = (V + V.T) / 2.0
    return V * (C / (C - 1.0)) * ((n - 1.0) / (n - K))


@dataclass
class RegressionResult:
    """Coefficients and cluster-robust inference from a within regression.

    Attributes
    ----------
    coef, se : pd.Series
        Estimates and standard errors of retained regressors.
    cov : pd.DataFrame
        Cluster-robust covariance (CR1 small-sample factor).
    semi : pd.Series
        ``100*(exp(b)-1)`` for binary regressors, NaN otherwise.
    r2 : float
        Within R-squared, computed on the absorbed data.
    """

    coef: pd.Series
    cov: pd.DataFrame
    n_obs: int
    n_clusters: int
    r2: float
    dropped: list
    iterations: int
    df_resid: int
    binary: dict = field(default_factory=dict)
    outcome: str = ""
    residuals: Optional[pd.Series] = None
    meta: dict = field(default_factory=dict)

    @property
    def se(self) -> pd.Series:
        return pd.Series(np.sqrt(np.clip(np.diag(self.cov.to_numpy()), 0, None)), index=self.coef.index)

    @property
    def tstat(self) -> pd.Series:
        return self.coef / self.se

    @property
    def pvalues(self) -> pd.Series:
        return pd.Series(2 * stats.t.sf(np.abs(self.tstat.to_numpy()), self.df_resid), index=self.coef.index)

    def conf_int(self, level: float = 0.95) -> pd.DataFrame:
        q = stats.t.ppf(0.5 + level / 2, self.df_resid)
        lo = self.coef - q * self.se
        hi = self.coef + q * self.se
        return pd.DataFrame({"lower": lo, "upper": hi})

    @property
    def semi(self) -> pd.Series:
        s = semi_elasticity(self.coef.to_numpy())
        mask = np.array([self.binary.get(k, False) for k in self.coef.index])
        return pd.Series(np.where(mask, s, np.nan), index=self.coef.index)

    @property
    def semi_se(self) -> pd.Series:
        # delta method
        return 100.0 * np.exp(self.coef) * self.se.where(self.semi.notna())

    def to_frame(self) -> pd.DataFrame:
        ci = self.conf_int()
        return pd.DataFrame({
            "coef": self.coef, "se": self.se, "t": self.tstat, "p": self.pvalues,
            "ci_lower": ci["lower"], "ci_upper": ci["upper"],
            "semi_elasticity": self.semi, "semi_se": self.semi_se,
        })

    def wald(self, names: Sequence[str]) -> float:
        """Cluster-robust Wald statistic for ``coef[names] = 0`` divided by the restriction count."""
        names = [n for n in names if n in self.coef.index]
        if not names:
            return 0.0
        b = self.coef[names].to_numpy()
        V = self.cov.loc[names, names].to_numpy()
        return float(b @ np.linalg.solve(V, b)) / len(names)


def estimate_fe(
    data: pd.DataFrame,
    outcome: str,
    regressors: Sequence[str],
    fe: FixedEffectSpec = FixedEffectSpec(),
    cluster: Optional[str] = None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    keep_residuals: bool = False,
) -> RegressionResult:
    """OLS of ``outcome`` on ``regressors`` after absorbing ``fe``.

    Rows with a missing outcome or regressor are dropped first. Regressors
    that are absorbed by the fixed effects or collinear with earlier ones are
    removed and listed in ``dropped``. With ``cluster=None`` each row is its
    own cluster (heteroskedasticity-robust).
    """
    regressors = list(dict.fromkeys(regressors))
    cols = [outcome] + regressors
    missing = [c for c in cols if c not in data.columns]
    if missing:
        raise KeyError(f"columns missing from panel: {missing}")
    vals = data[cols].to_numpy(float)
    ok = np.isfinite(vals).all(axis=1)
    df = data.loc[ok] if not ok.all() else data
    vals = vals[ok]
    n = len(df)
    if n == 0:
        raise EstimationError("no complete observations")
    absorber = Absorber(df, fe, tol, max_iter)
    res = absorber(vals)
    yt, Xt = res.values[:, 0], res.values[:, 1:]
    keep = collinear_columns(Xt)
    dropped = [r for r, k in zip(regressors, keep) if not k]
    names = [r for r, k in zip(regressors, keep) if k]
    X = Xt[:, keep]
    K = X.shape[1]
    if K == 0:
        raise EstimationError("no identified regressors after absorption")
    if K >= n:
        raise EstimationError(f"K={K} regressors with only n={n} observations")
    XtX = X.T @ X
    bread = np.linalg.inv(XtX)
    beta = bread @ (X.T @ yt)
    e = yt - X @ beta
    if cluster is None:
        codes = np.arange(n)
    else:
        if df[cluster].isna().any():
            raise ValueError("cluster key contains missing values")
        codes = pd.factorize(df[cluster], sort=False)[0]
    C = int(codes.max()) + 1
    if C < 2:
        raise EstimationError("need at least two clusters")
    V = cluster_covariance(X, e, codes, bread)
    tss = float(yt @ yt)
    r2 = 1.0 - float(e @ e) / tss if tss > 0 else np.nan
    binary = {nm: is_binary(df[nm].to_numpy()) for nm in names}
    return RegressionResult(
        coef=pd.Series(beta, index=names),
        cov=pd.DataFrame(V, index=names, columns=names),
        n_obs=n, n_clusters=C, r2=r2, dropped=dropped, iterations=res.iterations,
        df_resid=C - 1, binary=binary, outcome=outcome,
        residuals=pd.Series(e, index=df.index) if keep_residuals else None,
        meta={"covariance": COVARIANCE_CONVENTION, "r2": R2_CONVENTION,
              "fe": list(fe.fe), "trends": list(fe.trends), "cluster": cluster,
              "ci": "t with C-1 degrees of freedom"},
    )
