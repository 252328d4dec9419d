"""Poisson fixed-effects regression by conditional (concentrated) maximum likelihood."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from scipy import special, stats

from .ols import collinear_columns

GRAD_TOL = 1e-8
MAX_NEWTON = 200
SEPARATION_TOL = 1e-9


class PoissonFEError(RuntimeError):
    pass


@dataclass
class PoissonFEResult:
    """Concentrated-likelihood Poisson estimates.

    ``group_effects`` holds ``log(sum_t y / sum_t exp(x'b))`` per retained
    group; ``time_effects`` are the coefficients on the time dummies (first
    level is the reference).
    """

    coef: pd.Series
    cov: pd.DataFrame
    group_effects: pd.Series
    time_effects: pd.Series
    loglik: float
    n_obs: int
    n_groups: int
    n_clusters: int
    dropped: list
    dropped_groups: int
    iterations: int
    grad_norm: float
    fitted: Optional[pd.Series] = None
    meta: dict = field(default_factory=dict)

    @property
    def se(self) -> pd.Series:
        return pd.Series(np.sqrt(np.clip(np.diag(self.cov.to_numpy()), 0, None)), index=self.coef.index)

    def to_frame(self) -> pd.DataFrame:
        z = self.coef / self.se
        return pd.DataFrame({"coef": self.coef, "se": self.se, "z": z,
                             "p": 2 * stats.norm.sf(np.abs(z))})


def _within_demean(X, codes, G):
    out = X.copy()
    cnt = np.bincount(codes, minlength=G).astype(float)
    for j in range(X.shape[1]):
        out[:, j] -= (np.bincount(codes, weights=X[:, j], minlength=G) / cnt)[codes]
    return out


def _concentrated(beta, X, y, codes, G, Y):
    eta = X @ beta
    # stabilise the within-group softmax
    shift = np.full(G, -np.inf)
    np.maximum.at(shift, codes, eta)
    w = np.exp(eta - shift[codes])
    denom = np.bincount(codes, weights=w, minlength=G)
    p = w / denom[codes]
    ll = float(y @ eta - Y @ (np.log(denom) + shift))
    return ll, p, denom, shift


def poisson_fe(
    data: pd.DataFrame,
    outcome: str,
    regressors: Sequence[str],
    group: str,
    time: Optional[str] = None,
    cluster: Optional[str] = None,
    tol: float = GRAD_TOL,
    max_iter: int = MAX_NEWTON,
) -> PoissonFEResult:
    """Poisson regression with one absorbed group effect and optional time dummies.

    The group effect is concentrated out, ``g_m = log(sum_t y_mt / sum_t
    exp(x_mt'b))``, leaving a multinomial likelihood in ``b`` that Newton's
    method maximises until the gradient norm is below ``tol``. Groups whose
    outcome is zero throughout carry no information and are dropped.
    Covariates without within-group variation are reported in ``dropped``.
    Separation (a zero outcome whose fitted within-group share falls below
    ``SEPARATION_TOL``) raises :class:`PoissonFEError`.
    The covariance is the sandwich clustered on ``cluster`` (default: the
    group).
    """
    regressors = list(regressors)
    cols = [outcome] + regressors
    df = data.loc[np.isfinite(data[cols].to_numpy(float)).all(axis=1)]
    y_all = df[outcome].to_numpy(float)
    if (y_all < 0).any():
        raise ValueError("Poisson outcome must be nonnegative")
    gtot = df.groupby(group, sort=False)[outcome].transform("sum").to_numpy()
    keep_rows = gtot > 0
    n_zero_groups = int(df.loc[~keep_rows, group].nunique())
    df = df.loc[keep_rows]
    if df.empty:
        raise PoissonFEError("every group has an all-zero outcome")
    y = df[outcome].to_numpy(float)
    codes, glabels = pd.factorize(df[group], sort=False)
    G = len(glabels)

    X = df[regressors].to_numpy(float) if regressors else np.empty((len(df), 0))
    names = list(regressors)
    tnames = []
    if time is not None:
        tcodes, tlabels = pd.factorize(df[time], sort=True)
        T = np.zeros((len(df), len(tlabels) - 1))
        rows = np.flatnonzero(tcodes > 0)
        T[rows, tcodes[rows] - 1] = 1.0
        tnames = [f"{time}={lab}" for lab in tlabels[1:]]
        X = np.column_stack([X, T])
        names += tnames
    Xw = _within_demean(X, codes, G)
    keep = collinear_columns(Xw)
    dropped = [nm for nm, k in zip(names, keep) if not k]
    names = [nm for nm, k in zip(names, keep) if k]
    X = X[:, keep]
    K = X.shape[1]
    Y = np.bincount(codes, weights=y, minlength=G)

    beta = np.zeros(K)
    ll, p, denom, shift = _concentrated(beta, X, y, codes, G, Y)
    it, gnorm = 0, np.inf
    for it in range(1, max_iter + 1):
        mu = Y[codes] * p
        grad = X.T @ (y - mu)
        gnorm = float(np.linalg.norm(grad))
        if gnorm < tol:
            break
        # Hessian of the concentrated likelihood: -sum_m Y_m Var_p(x)
        xbar = np.column_stack([np.bincount(codes, weights=p * X[:, j], minlength=G) for j in range(K)]) if K else np.empty((G, 0))
        Xc = X - xbar[codes]
        H = (Xc * mu[:, None]).T @ Xc
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError as exc:
            raise PoissonFEError(f"singular Hessian at iteration {it}") from exc
        lam = 1.0
        while True:
            cand = beta + lam * step
            ll_new, p_new, d_new, s_new = _concentrated(cand, X, y, codes, G, Y)
            if ll_new >= ll - 1e-12 * abs(ll) or lam < 1e-10:
                break
            lam /= 2
        beta, ll, p, denom, shift = cand, ll_new, p_new, d_new, s_new
        if not np.isfinite(beta).all() or np.abs(beta).max(initial=0) > 50:
            raise PoissonFEError("coefficients diverging; possible separation")
    else:
        if gnorm >= tol:
            raise PoissonFEError(f"Newton did not converge in {max_iter} iterations (gradient norm {gnorm:.3g})")

    # under separation the gradient vanishes only as some coefficients run
    # off to infinity, leaving zero-outcome rows with no probability mass
    if K and np.any((y == 0) & (p < SEPARATION_TOL)):
        raise PoissonFEError("zero outcomes fitted with vanishing probability; likely separation")
    mu = Y[codes] * p
    # sandwich: H^-1 (sum_c s_c s_c') H^-1
    xbar = np.column_stack([np.bincount(codes, weights=p * X[:, j], minlength=G) for j in range(K)]) if K else np.empty((G, 0))
    Xc = X - xbar[codes]
    H = (Xc * mu[:, None]).T @ Xc
    ccodes = codes if cluster is None else pd.factorize(df[cluster], sort=False)[0]
    C = int(ccodes.max()) + 1
    if K:
        S = np.column_stack([np.bincount(ccodes, weights=Xc[:, j] * (y - mu), minlength=C) for j in range(K)])
        Hinv = np.linalg.inv(H)
        V = Hinv @ (S.T @ S) @ Hinv
        V = (V + V.T) / 2 * (C / (C - 1.0) if C > 1 else 1.0)
    else:
        V = np.empty((0, 0))

    eta = X @ beta
    gamma = np.log(Y) - (np.log(denom) + shift)
    full_mu = np.exp(gamma[codes] + eta)
    loglik = float(np.sum(special.xlogy(y, full_mu) - full_mu - special.gammaln(y + 1)))
    coef = pd.Series(beta, index=names)
    tmask = [nm in tnames for nm in names]
    return PoissonFEResult(
        coef=coef.loc[[nm for nm, t in zip(names, tmask) if not t]],
        cov=pd.DataFrame(V, index=names, columns=names).loc[
            [nm for nm, t in zip(names, tmask) if not t], [nm for nm, t in zip(names, tmask) if not t]],
        group_effects=pd.Series(gamma, index=glabels),
        time_effects=coef.loc[[nm for nm, t in zip(names, tmask) if t]],
        loglik=loglik, n_obs=len(df), n_groups=G, n_clusters=C,
        dropped=dropped, dropped_groups=n_zero_groups, iterations=it, grad_norm=gnorm,
        fitted=pd.Series(full_mu, index=df.index),
        meta={"covariance": "cluster sandwich, factor C/(C-1)", "cluster": cluster or group},
    )
