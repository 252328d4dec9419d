"""Projecting out high-dimensional fixed effects and group-specific linear trends."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numba
import numpy as np
import pandas as pd

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 10_000


class AbsorptionError(RuntimeError):
    """Alternating projections did not converge."""

    def __init__(self, message, iterations=None, max_change=None):
        super().__init__(message)
        self.iterations = iterations
        self.max_change = max_change


@dataclass(frozen=True)
class FixedEffectSpec:
    """Categorical fixed effects plus groups carrying their own linear trend.

    ``fe`` lists key columns (each a separate dimension; a tuple entry is the
    interaction of its columns). ``trends`` lists grouping columns; within each
    group the span of ``{1, trend_var}`` is projected out.
    """

    fe: tuple = ()
    trends: tuple = ()
    trend_var: str = "t"

    def __post_init__(self):
        object.__setattr__(self, "fe", tuple(self.fe))
        object.__setattr__(self, "trends", tuple(self.trends))

    @property
    def columns(self) -> list[str]:
        cols = []
        for f in self.fe + self.trends:
            cols.extend(f if isinstance(f, tuple) else (f,))
        if self.trends:
            cols.append(self.trend_var)
        return list(dict.fromkeys(cols))

    @property
    def is_empty(self) -> bool:
        return not self.fe and not self.trends


# the fixed-effect structures used by the pipeline
CARRIER_MARKET = FixedEffectSpec(fe=("cm_key", "cyq_key"), trends=("origin", "dest"))
CARRIER_MARKET_STRUCTURE = FixedEffectSpec(fe=("structure_key", "cyq_key"), trends=("origin", "dest"))
MARKET_LEVEL = FixedEffectSpec(fe=("market", "yq"), trends=("origin", "dest"))
PRICE = FixedEffectSpec(fe=("cm_key", "cyq_key"), trends=("origin", "dest"))


def _codes(df: pd.DataFrame, key) -> np.ndarray:
    if isinstance(key, tuple):
        if len(key) == 1:
            key = key[0]
        else:
            return df.groupby(list(key), sort=False).ngroup().to_numpy()
    return pd.factorize(df[key], sort=False)[0]


@numba.njit(cache=True)
def _demean_kernel(x, codes, inv, G):
    n, k = x.shape
    m = np.zeros((G, k))
    for i in range(n):
        g = codes[i]
        for j in range(k):
            m[g, j] += x[i, j]
    for g in range(G):
        for j in range(k):
            m[g, j] *= inv[g]
    for i in range(n):
        g = codes[i]
        for j in range(k):
            x[i, j] -= m[g, j]


@numba.njit(cache=True)
def _detrend_kernel(x, codes, t, s0, s1, det, ok, G):
    n, k = x.shape
    sx = np.zeros((G, k))
    stx = np.zeros((G, k))
    for i in range(n):
        g = codes[i]
        for j in range(k):
            sx[g, j] += x[i, j]
            stx[g, j] += t[i] * x[i, j]
    for g in range(G):
        for j in range(k):
            b = (s0[g] * stx[g, j] - s1[g] * sx[g, j]) / det[g] if ok[g] else 0.0
            sx[g, j] = (sx[g, j] - b * s1[g]) / s0[g]
            stx[g, j] = b
    for i in range(n):
        g = codes[i]
        for j in range(k):
            x[i, j] -= sx[g, j] + stx[g, j] * t[i]


class _Demean:
    def __init__(self, codes):
        self.codes = np.ascontiguousarray(codes, dtype=np.int64)
        self.G = int(codes.max()) + 1 if len(codes) else 0
        cnt = np.bincount(self.codes, minlength=self.G).astype(float)
        self.inv = 1.0 / cnt

    def __call__(self, x):
        _demean_kernel(x, self.codes, self.inv, self.G)
        return x


class _Detrend:
    def __init__(self, codes, t, rel_tol=1e-12):
        self.codes = np.ascontiguousarray(codes, dtype=np.int64)
        self.t = np.ascontiguousarray(t, dtype=float)
        G = int(codes.max()) + 1 if len(codes) else 0
        self.G = G
        s0 = np.bincount(self.codes, minlength=G).astype(float)
        s1 = np.bincount(self.codes, weights=self.t, minlength=G)
        s2 = np.bincount(self.codes, weights=self.t * self.t, minlength=G)
        det = s0 * s2 - s1 * s1
        scale = np.maximum(s0 * s2, 1.0)
        self.ok = det > rel_tol * scale
        self.s0, self.s1 = s0, s1
        self.det = np.where(self.ok, det, 1.0)

    def __call__(self, x):
        _detrend_kernel(x, self.codes, self.t, self.s0, self.s1, self.det, self.ok, self.G)
        return x


@dataclass
class AbsorbResult:
    values: np.ndarray
    iterations: int
    max_change: float
    converged_columns: list = field(default_factory=list)


class Absorber:
    """Reusable projector for one :class:`FixedEffectSpec` on one row set.

    The sweep applies each group demeaning and each within-group detrending
    in turn; sweeps repeat until the largest absolute change in any column
    falls below ``tol``. Every third sweep is replaced by an Irons-Tuck
    extrapolation, which keeps the iterate in the same affine set and so does
    not change the limit.
    """

    def __init__(self, df: pd.DataFrame, fe_spec: FixedEffectSpec, tol: float = DEFAULT_TOL,
                 max_iter: int = DEFAULT_MAX_ITER, accelerate: bool = True):
        missing = [c for c in fe_spec.columns if c not in df.columns]
        if missing:
            raise KeyError(f"fixed-effect columns missing: {missing}")
        if df[fe_spec.columns].isna().any().any():
            raise ValueError("fixed-effect keys contain missing values")
        self.fe_spec, self.tol, self.max_iter, self.accelerate = fe_spec, tol, max_iter, accelerate
        self.n = len(df)
        self.ops = [_Demean(_codes(df, f)) for f in fe_spec.fe]
        if fe_spec.trends:
            t = df[fe_spec.trend_var].to_numpy(float)
            self.ops += [_Detrend(_codes(df, g), t) for g in fe_spec.trends]
        if not self.ops:
            self.ops = [_Demean(np.zeros(self.n, dtype=np.int64))]
        self.n_fe_levels = sum(op.G for op in self.ops)

    def _sweep(self, x):
        for op in self.ops:
            op(x)
        return x

    def __call__(self, X) -> AbsorbResult:
        X = np.array(X, dtype=float, copy=True, order="C")
        if X.ndim == 1:
            X = X[:, None]
        if X.shape[0] != self.n:
            raise ValueError("row count does not match the fixed-effect frame")
        if len(self.ops) == 1:
            # a single projection is exact
            self._sweep(X)
            return AbsorbResult(X, 1, 0.0, list(range(X.shape[1])))
        out = X
        active = np.arange(X.shape[1])
        it, change = 0, np.inf
        while active.size:
            x = np.ascontiguousarray(out[:, active])
            prev = x.copy()
            self._sweep(x)
            it += 1
            if self.accelerate and it % 3 == 0:
                gx = x
                ggx = self._sweep(gx.copy())
                it += 1
                d1 = ggx - gx
                d2 = d1 - (gx - prev)
                den = np.einsum("ij,ij->j", d2, d2)
                coef = np.where(den > 0, np.einsum("ij,ij->j", d1, d2) / np.where(den > 0, den, 1.0), 0.0)
                x = ggx - coef * d1
                # measure the change over a plain sweep so the stopping rule is unaffected
                prev = x.copy()
                self._sweep(x)
                it += 1
            delta = np.abs(x - prev).max(axis=0) if self.n else np.zeros(active.size)
            out[:, active] = x
            change = float(delta.max()) if delta.size else 0.0
            active = active[delta >= self.tol]
            if active.size and it >= self.max_iter:
                raise AbsorptionError(
                    f"absorption did not converge after {it} sweeps (max change {change:.3g}, tol {self.tol:g})",
                    iterations=it, max_change=change)
        return AbsorbResult(out, it, change, list(range(X.shape[1])))


def absorb(df: pd.DataFrame, columns: Sequence[str], fe_spec: FixedEffectSpec,
           tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> tuple[pd.DataFrame, int]:
    """Residualise ``columns`` of ``df`` on ``fe_spec``.

    Returns the demeaned columns as a frame aligned with ``df`` and the number
    of sweeps used.

    Raises
    ------
    AbsorptionError
        When the maximum absolute change is still above ``tol`` after
        ``max_iter`` sweeps.
    """
    res = Absorber(df, fe_spec, tol, max_iter)(df[list(columns)].to_numpy(float))
    return pd.DataFrame(res.values, index=df.index, columns=list(columns)), res.iterations
