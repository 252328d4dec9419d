"""Cluster (block) bootstrap with per-replicate random streams."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

log = logging.getLogger(__name__)

DEFAULT_B = 200


@dataclass
class BootstrapResult:
    se: pd.Series
    replicates: pd.DataFrame
    n_failed: int
    B: int
    seed: int


class _Resampler:
    def __init__(self, panel: pd.DataFrame, cluster: str, rekey=()):
        self.panel = panel
        self.cluster = cluster
        self.rekey = tuple(rekey)
        # clusters ordered by first appearance: draws depend on row order only
        codes, _ = pd.factorize(panel[cluster], sort=False)
        self.C = int(codes.max()) + 1
        order = np.argsort(codes, kind="stable")
        bounds = np.searchsorted(codes[order], np.arange(self.C + 1))
        self.rows = [order[bounds[c]:bounds[c + 1]] for c in range(self.C)]

    def draw(self, rng: np.random.Generator) -> pd.DataFrame:
        pick = rng.integers(0, self.C, size=self.C)
        idx = np.concatenate([self.rows[c] for c in pick])
        sizes = np.array([len(self.rows[c]) for c in pick])
        out = self.panel.iloc[idx].copy()
        # each drawn copy is its own cluster, even when a cluster repeats
        pos = np.repeat(np.arange(self.C), sizes)
        out[self.cluster] = pos
        for col in self.rekey:
            out[col] = out[col].astype(str).to_numpy() + "#" + pos.astype(str)
        return out.reset_index(drop=True)


def _one(resampler, estimator, seq):
    rng = np.random.default_rng(seq)
    sample = resampler.draw(rng)
    try:
        est = estimator(sample)
    except Exception as exc:  # a failed replicate is dropped, not fatal
        log.debug("bootstrap replicate failed: %s", exc)
        return None
    return pd.Series(est, dtype=float)


def _batch(resampler, estimator, seqs):
    return [_one(resampler, estimator, s) for s in seqs]


def cluster_bootstrap(
    estimator: Callable[[pd.DataFrame], "pd.Series | np.ndarray"],
    panel: pd.DataFrame,
    cluster: str,
    B: int = DEFAULT_B,
    seed: int = 0,
    n_jobs: int = 1,
    rekey=(),
) -> BootstrapResult:
    """Standard errors from resampling whole clusters with replacement.

    Replicate ``b`` draws from its own stream ``SeedSequence(seed).spawn(B)[b]``,
    so results do not depend on ``n_jobs``. The estimator sees a frame whose
    cluster column is re-keyed ``0..C-1`` by draw position. Replicates where
    the estimator raises are dropped and counted in ``n_failed``. Columns in
    ``rekey`` get the draw position appended, so keys nested in a cluster stay
    distinct across repeated copies.
    """
    if B < 2:
        raise ValueError("B must be at least 2")
    resampler = _Resampler(panel, cluster, rekey)
    seqs = np.random.SeedSequence(seed).spawn(B)
    if n_jobs == 1:
        reps = [_one(resampler, estimator, s) for s in seqs]
    else:
        # one contiguous batch per worker ships the panel once per worker, not once per replicate
        batches = [b for b in np.array_split(np.arange(B), min(n_jobs, B)) if b.size]
        out = Parallel(n_jobs=n_jobs)(delayed(_batch)(resampler, estimator, [seqs[i] for i in b]) for b in batches)
        reps = [r for chunk in out for r in chunk]
    ok = [r for r in reps if r is not None]
    n_failed = B - len(ok)
    if len(ok) < 2:
        raise RuntimeError(f"only {len(ok)} of {B} bootstrap replicates succeeded")
    table = pd.DataFrame(ok).reset_index(drop=True)
    se = table.std(ddof=1)
    return BootstrapResult(se=se, replicates=table, n_failed=n_failed, B=B, seed=seed)
