"""Independent reference implementations used as test oracles.

Each oracle recomputes a quantity from its definition with a different
algorithm from the library: explicit dummy matrices instead of alternating
projections, Python loops over clusters instead of ``bincount``, full
dummy-variable Poisson MLE instead of concentration, and exhaustive path
enumeration instead of Brandes accumulation.
"""

from __future__ import annotations

import itertools
import json
import pathlib
from collections import deque

import numpy as np
import pandas as pd

DATA = pathlib.Path(__file__).parent / "data"

# --------------------------------------------------------------------------- indicators

LEGACY_POOL = ("AA", "CO", "DL", "UA", "US")
LCC_POOL = ("WN", "B6", "FL")
FRINGE_POOL = ("XE", "OO")
STATUSES = ("Collected", "Bankruptcy", "Merger", "Private", "Other")


def call_quarter_table(first_year: int, last_year: int, shifted: bool = True) -> dict:
    """Month index -> (year, quarter) of the call covering it, by enumeration.

    The call about a quarter is held in the month after the quarter closes;
    shifted alignment covers the three months after the call month,
    contemporaneous alignment the call month and the two after it.
    """
    out = {}
    for y in range(first_year, last_year + 1):
        for q in range(1, 5):
            last_month = y * 12 + 3 * q - 1          # zero-based month index
            call = last_month + 1
            start = call + 1 if shifted else call
            for m in range(start, start + 3):
                out[m] = (y, q)
    return out


def indicator_definitions(serving: dict, talks: dict, reports: dict, j: str) -> dict:
    """Every indicator for carrier ``j`` from its set-builder definition.

    ``serving`` maps carrier -> class ("Legacy", "LCC", "Fringe");
    ``talks[c]`` is True when c's collected transcript is coded 1;
    ``reports[c]`` is True when c has a collected transcript.
    """
    L = {c for c, k in serving.items() if k == "Legacy"}
    T = {c for c in L if talks[c]}
    te = len(L) >= 2
    cd = te and T == L
    out = {
        "TalkEligible": te,
        "Monopoly": len(serving) == 1,
        "MissingReport": any(not reports[c] for c in L),
        "CapacityDiscipline": cd,
        "OnlyJTalks": te and j in L and T == {j},
        "CapDisN1": te and len(T) == len(L) - 1,
        "CapDisNotJ": te and (L - {j}) <= T and j not in T,
        "MonopolyCapDis": len(serving) == 1 and talks[j],
    }
    for k in (2, 3, 4):
        out[f"CapDis_{k}"] = cd and len(L) == k
    out["CapDis_5p"] = cd and len(L) >= 5
    return {k: int(v) for k, v in out.items()}


INDICATORS = ("TalkEligible", "Monopoly", "MissingReport", "CapacityDiscipline", "OnlyJTalks",
              "CapDis_2", "CapDis_3", "CapDis_4", "CapDis_5p", "CapDisN1", "CapDisNotJ",
              "MonopolyCapDis")


def random_contexts(n: int, seed: int = 0, per_month: int = 10):
    """Segments and flags tables holding ``n`` random market-month contexts.

    Each context is its own market with up to five legacies, up to three LCCs
    and at most one fringe carrier. Some carriers fly fewer than four times
    and so do not serve. Flag rows may be missing or carry a non-collected
    status. Returns ``(segments, flags, contexts)`` where ``contexts`` lists
    ``(market, month_index, serving)``.
    """
    rng = np.random.default_rng(seed)
    base = 1990 * 12
    rows, contexts = [], []
    for i in range(n):
        ym = base + i // per_month
        o, d = f"O{i:05d}", f"D{i:05d}"
        nl = int(rng.integers(0, 6))
        nc = int(rng.integers(0, 4))
        nf = int(rng.integers(0, 2))
        if nl + nc + nf == 0:
            nl = 1
        serving = {}
        for pool, k, cls in ((LEGACY_POOL, nl, "Legacy"), (LCC_POOL, nc, "LCC"), (FRINGE_POOL, nf, "Fringe")):
            for c in rng.choice(pool, k, replace=False):
                serving[str(c)] = cls
        for c in serving:
            rows.append((ym // 12, ym % 12 + 1, c, o, d, int(rng.integers(4, 60))))
        # a non-serving carrier below the flight threshold
        if rng.random() < 0.3:
            c = str(rng.choice([x for x in LEGACY_POOL + LCC_POOL if x not in serving] or ["ZZ"]))
            rows.append((ym // 12, ym % 12 + 1, c, o, d, int(rng.integers(1, 4))))
        contexts.append((f"{o}-{d}", ym, serving))
    seg = pd.DataFrame(rows, columns=["year", "month", "ticketing_carrier", "origin", "dest", "flights"])
    seg["seats"] = seg["flights"] * 150
    cq = call_quarter_table(base // 12 - 1, (base + n // per_month) // 12 + 1)
    quarters = sorted({cq[ym] for _, ym, _ in contexts})
    frows = []
    for c in LEGACY_POOL + LCC_POOL + FRINGE_POOL:
        for y, q in quarters:
            if rng.random() < 0.1:
                continue                              # no row at all: no report
            status = "Collected" if rng.random() < 0.8 else str(rng.choice(STATUSES[1:]))
            frows.append((c, y, q, status, int(rng.random() < 0.6)))
    flags = pd.DataFrame(frows, columns=["carrier", "year", "quarter", "status", "flag"])
    return seg, flags, contexts


def flag_lookup(flags: pd.DataFrame) -> dict:
    """``(carrier, year, quarter) -> (status, flag)``; later rows win."""
    return {(c, int(y), int(q)): (s, int(f)) for c, y, q, s, f in
            flags[["carrier", "year", "quarter", "status", "flag"]].itertuples(index=False)}


def context_inputs(lookup: dict, ym: int, serving: dict, cq: dict):
    """``talks`` and ``reports`` dictionaries for one context."""
    y, q = cq[ym]
    reports, talks = {}, {}
    for c in serving:
        status, flag = lookup.get((c, y, q), (None, 0))
        reports[c] = status == "Collected"
        talks[c] = reports[c] and flag == 1
    return talks, reports


def indicator_mismatches(n: int = 10_000, seed: int = 0):
    """Compare the vectorised panel and the scalar functions with the definitions.

    Returns ``(n_checks, n_mismatches, n_rows)`` over ``n`` random contexts.
    """
    from capdisc.core import CarrierClass, CarrierRegistry, Market, YearMonth
    from capdisc.panel import (MarketMonthContext, build_panel, capacity_discipline, missing_report,
                               monopoly, talk_eligible, variant_indicators)

    seg, flags, contexts = random_contexts(n, seed)
    registry = CarrierRegistry(legacy=LEGACY_POOL, lcc=LCC_POOL)
    panel = build_panel(seg, flags, registry)
    cols = {k: i for i, k in enumerate(INDICATORS)}
    table = {(m, ym, c): row for m, ym, c, *row in
             panel[["market", "ym", "carrier", *INDICATORS]].itertuples(index=False)}
    lookup = flag_lookup(flags)
    years = [ym // 12 for _, ym, _ in contexts]
    cq = call_quarter_table(min(years) - 1, max(years) + 1)
    checks = bad = 0
    for m, ym, serving in contexts:
        talks, reports = context_inputs(lookup, ym, serving, cq)
        ctx = MarketMonthContext(Market(*m.split("-")), YearMonth.from_index(ym),
                                 {c: CarrierClass(k) for c, k in serving.items()},
                                 {c: int(talks[c]) for c in serving}, reports)
        for j in serving:
            expected = indicator_definitions(serving, talks, reports, j)
            scalar = variant_indicators(ctx, j)
            scalar.update(TalkEligible=talk_eligible(ctx), Monopoly=monopoly(ctx),
                          MissingReport=missing_report(ctx), CapacityDiscipline=capacity_discipline(ctx))
            row = table.get((m, ym, j))
            for k in INDICATORS:
                checks += 1
                if row is None or int(row[cols[k]]) != expected[k] or scalar[k] != expected[k]:
                    bad += 1
    served = sum(len(s) for _, _, s in contexts)
    if len(panel) != served:
        bad += abs(len(panel) - served)
    return checks, bad, len(panel)


# --------------------------------------------------------------------------- OLS


def dummies(codes: np.ndarray, drop_first: bool) -> np.ndarray:
    levels = np.unique(codes)
    if drop_first:
        levels = levels[1:]
    return (codes[:, None] == levels[None, :]).astype(float)


def dummy_ols(y, X, fe_codes=(), trend_codes=(), t=None):
    """OLS with explicit dummy columns; returns the coefficients on ``X``.

    Each categorical code gets a full dummy set, each trend group a dummy and
    a dummy-times-``t`` column. The design is rank deficient, so the
    minimum-norm least-squares solution is used; coefficients on ``X`` are
    unique whenever ``X`` is not collinear with the dummies.
    """
    cols = [np.asarray(X, float)]
    for c in fe_codes:
        cols.append(dummies(np.asarray(c), False))
    for g in trend_codes:
        D = dummies(np.asarray(g), False)
        cols += [D, D * np.asarray(t, float)[:, None]]
    Z = np.column_stack(cols)
    b, *_ = np.linalg.lstsq(Z, np.asarray(y, float), rcond=None)
    return b[: cols[0].shape[1]], Z


def residual_maker(Z: np.ndarray, A: np.ndarray) -> np.ndarray:
    """Residuals of the columns of ``A`` on the span of ``Z`` (via SVD)."""
    U, s, _ = np.linalg.svd(Z, full_matrices=False)
    U = U[:, s > s.max() * 1e-10]
    return A - U @ (U.T @ A)


def direct_cluster_cov(X, e, clusters, n_obs=None, k=None):
    """CR1 sandwich written out cluster by cluster with explicit outer products."""
    X = np.asarray(X, float)
    e = np.asarray(e, float)
    n = X.shape[0] if n_obs is None else n_obs
    K = X.shape[1] if k is None else k
    labels = list(dict.fromkeys(clusters))
    C = len(labels)
    bread = np.linalg.inv(X.T @ X)
    meat = np.zeros((X.shape[1], X.shape[1]))
    for lab in labels:
        s = np.zeros(X.shape[1])
        for i in range(X.shape[0]):
            if clusters[i] == lab:
                s += X[i] * e[i]
        meat += np.outer(s, s)
    return C / (C - 1) * (n - 1) / (n - K) * bread @ meat @ bread


# --------------------------------------------------------------------------- Poisson


def dummy_poisson(y, X, group, time=None):
    """Full Poisson MLE with group (and optional time) dummies via statsmodels GLM."""
    import statsmodels.api as sm

    parts = [np.asarray(X, float), dummies(np.asarray(group), False)]
    if time is not None:
        parts.append(dummies(np.asarray(time), True))
    Z = np.column_stack(parts)
    fit = sm.GLM(np.asarray(y, float), Z, family=sm.families.Poisson()).fit(
        method="newton", tol=1e-13, maxiter=500)
    return np.asarray(fit.params)[: np.asarray(X).shape[1]], np.asarray(fit.fittedvalues)


# --------------------------------------------------------------------------- graphs


def bfs_dist(adj: dict, s) -> dict:
    dist = {s: 0}
    q = deque([s])
    while q:
        v = q.popleft()
        for w in adj[v]:
            if w not in dist:
                dist[w] = dist[v] + 1
                q.append(w)
    return dist


def all_shortest_paths(adj: dict, s, t) -> list:
    """Every shortest s-t path, enumerated by depth-first search over simple paths."""
    d = bfs_dist(adj, s).get(t)
    if d is None:
        return []
    out = []

    def walk(path):
        v = path[-1]
        if len(path) - 1 == d:
            if v == t:
                out.append(list(path))
            return
        for w in sorted(adj[v]):
            if w not in path:
                walk(path + [w])

    walk([s])
    return out


def brute_betweenness(nodes, edges) -> dict:
    """Share of shortest paths through each node, over ordered pairs, / (N-1)(N-2)."""
    adj = {v: set() for v in nodes}
    for a, b in edges:
        adj[a].add(b)
        adj[b].add(a)
    N = len(nodes)
    cb = dict.fromkeys(nodes, 0.0)
    for s, t in itertools.permutations(nodes, 2):
        paths = all_shortest_paths(adj, s, t)
        if not paths:
            continue
        for k in nodes:
            if k in (s, t):
                continue
            cb[k] += sum(k in p[1:-1] for p in paths) / len(paths)
    return {k: v / ((N - 1) * (N - 2)) for k, v in cb.items()}


def stored_graphs() -> list:
    """Random graphs (3 to 8 nodes) kept under ``tests/data``."""
    return json.loads((DATA / "random_graphs.json").read_text())


# --------------------------------------------------------------------------- instances


def fe_instance(rng: np.random.Generator, n_max: int = 500, trend: bool = True) -> pd.DataFrame:
    """Random regression instance with two categorical effects and one trend group.

    ``x1`` is continuous and correlated with both effects, ``x2`` binary. The
    row count, level counts and trend-group count are drawn at random.
    """
    n = int(rng.integers(min(n_max, max(30, n_max // 5)), n_max + 1))
    g1 = int(rng.integers(3, max(4, n // 8)))
    g2 = int(rng.integers(3, 25))
    g3 = int(rng.integers(2, 8))
    a = rng.integers(0, g1, n)
    b = rng.integers(0, g2, n)
    g = rng.integers(0, g3, n)
    t = rng.uniform(0, 5, n)
    ea, eb = rng.normal(size=g1), rng.normal(size=g2)
    x1 = ea[a] - eb[b] + 0.3 * t + rng.normal(size=n)
    x2 = (rng.random(n) < 0.3 + 0.4 * (eb[b] > 0)).astype(float)
    slope = rng.normal(size=g3) * 0.2
    y = 1.0 * x1 - 0.5 * x2 + ea[a] + eb[b] + (slope[g] * t if trend else 0) + rng.normal(size=n)
    return pd.DataFrame({"y": y, "x1": x1, "x2": x2, "a": a, "b": b, "g": g, "t": t,
                         "cl": rng.integers(0, max(5, n // 10), n)})


def fwl_relative_errors(n_instances: int = 200, seed: int = 0) -> np.ndarray:
    """Max relative coefficient error of absorbed OLS vs dummy OLS per instance."""
    from capdisc.econometrics import FixedEffectSpec, estimate_fe

    rng = np.random.default_rng(seed)
    fe_spec = FixedEffectSpec(fe=("a", "b"), trends=("g",))
    out = np.empty(n_instances)
    for i in range(n_instances):
        df = fe_instance(rng)
        res = estimate_fe(df, "y", ["x1", "x2"], fe_spec, cluster="cl")
        ref, _ = dummy_ols(df["y"], df[["x1", "x2"]], (df["a"], df["b"]), (df["g"],), df["t"])
        got = res.coef[["x1", "x2"]].to_numpy()
        out[i] = np.max(np.abs(got - ref) / np.maximum(np.abs(ref), 1e-12))
    return out


def sandwich_errors(n_instances: int = 50, seed: int = 0, tol: float = 1e-15) -> np.ndarray:
    """Max relative covariance error of ``estimate_fe`` vs the direct formula.

    Instances have at most 50 rows and cycle through no fixed effects, one
    categorical effect, and two effects plus a trend group. The direct
    formula partials the dummies out by SVD and loops over clusters. The
    two-way case runs the absorber at ``tol`` so that its iterative error sits
    well below the comparison tolerance.
    """
    from capdisc.econometrics import FixedEffectSpec, estimate_fe

    rng = np.random.default_rng(seed)
    fe_specs = [FixedEffectSpec(), FixedEffectSpec(fe=("a",)), FixedEffectSpec(fe=("a", "b"), trends=("g",))]
    out = np.empty(n_instances)
    for i in range(n_instances):
        df = fe_instance(rng, n_max=50)
        df["cl"] = rng.integers(0, 8, len(df))
        fe_spec = fe_specs[i % 3]
        res = estimate_fe(df, "y", ["x1", "x2"], fe_spec, cluster="cl", tol=tol)
        parts = [np.ones((len(df), 1))]
        parts += [dummies(df[c].to_numpy(), False) for c in fe_spec.fe]
        for grp in fe_spec.trends:
            D = dummies(df[grp].to_numpy(), False)
            parts += [D, D * df["t"].to_numpy()[:, None]]
        Z = np.column_stack(parts) if fe_spec.fe or fe_spec.trends else np.zeros((len(df), 1))
        if not (fe_spec.fe or fe_spec.trends):
            # no fixed effects: the library demeans by a single constant group
            Z = np.ones((len(df), 1))
        Xt = residual_maker(Z, df[["x1", "x2"]].to_numpy(float))
        yt = residual_maker(Z, df[["y"]].to_numpy(float))[:, 0]
        beta = np.linalg.lstsq(Xt, yt, rcond=None)[0]
        e = yt - Xt @ beta
        V = direct_cluster_cov(Xt, e, list(df["cl"]))
        got = res.cov.loc[["x1", "x2"], ["x1", "x2"]].to_numpy()
        out[i] = np.max(np.abs(got - V)) / np.max(np.abs(V))
    return out


def poisson_instance(rng: np.random.Generator, max_groups: int = 50, time: bool = True) -> pd.DataFrame:
    """Unbalanced count panel with group effects, optional period effects, two covariates."""
    G = int(rng.integers(5, max_groups + 1))
    T = int(rng.integers(3, 9))
    rows = []
    alpha = rng.normal(0.5, 1.0, G)
    delta = rng.normal(0, 0.3, T) if time else np.zeros(T)
    for g in range(G):
        for t in range(T):
            if rng.random() < 0.15:
                continue
            x1 = rng.normal()
            x2 = float(rng.random() < 0.4)
            mu = np.exp(alpha[g] + delta[t] + 0.4 * x1 - 0.3 * x2)
            rows.append((f"g{g:02d}", t, x1, x2, rng.poisson(mu)))
    df = pd.DataFrame(rows, columns=["group", "period", "x1", "x2", "y"])
    df.loc[df["group"] == "g00", "y"] = 0            # an uninformative group
    return df


def poisson_errors(n_instances: int = 20, seed: int = 0):
    """Per instance: max relative error in b vs dummy MLE and max absolute group-total gap."""
    from capdisc.econometrics import poisson_fe

    rng = np.random.default_rng(seed)
    beta_err, total_err = [], []
    for i in range(n_instances):
        df = poisson_instance(rng, time=i % 2 == 0)
        time = "period" if i % 2 == 0 else None
        res = poisson_fe(df, "y", ["x1", "x2"], "group", time=time)
        live = df.loc[df.groupby("group")["y"].transform("sum") > 0]
        ref, fitted = dummy_poisson(live["y"], live[["x1", "x2"]], live["group"],
                                    live["period"] if time else None)
        got = res.coef[["x1", "x2"]].to_numpy()
        beta_err.append(np.max(np.abs(got - ref) / np.maximum(np.abs(ref), 1e-12)))
        fit = res.fitted.reindex(live.index)
        gap = (fit.groupby(live["group"]).sum() - live.groupby("group")["y"].sum()).abs()
        total_err.append(float(gap.max()))
    return np.array(beta_err), np.array(total_err)
