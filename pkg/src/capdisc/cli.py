"""Command-line pipeline.

``capdisc <command> [--config FILE] [--key value ...]``. A plain-text
``key = value`` config file supplies defaults; every key can be overridden
on the command line (``--key value``; dashes and underscores are
interchangeable). Relative paths in the config file resolve against the
file's directory.

Exit codes: 0 success, 2 schema or input-data error, 3 numerical failure,
4 configuration error. On failure a one-line JSON error record is written to
stderr.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import re
import sys
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from . import io
from .core import LCC_DEFAULT, LEGACY_DEFAULT, CarrierRegistry, YearMonth
from .econometrics import (CARRIER_MARKET, CARRIER_MARKET_STRUCTURE, MARKET_LEVEL, AbsorptionError,
                           EstimationError, PoissonFEError, coefficient_frame, control_function, estimate_fe,
                           lead_exogeneity_test, poisson_fe, regression_table, twfe_weights)
from .embed import (DEFAULT_ANCHORS, Embedding, TokenScreen, TrainingConfig, report_cooccurrence,
                    screen_tokens, token_flags, train_skipgram, training_corpus)
from .econometrics.tables import LABELS
from .metrics import crowding_panel, route_price_panel
from .network import build_networks, hub_distance_table, hubs_frame
from .panel import (TREATMENTS, AlignmentMode, attach_market_classes, build_panel, design,
                    flags_frame, market_level, to_city_pairs)
from .textproc import TranscriptStatus, code_corpus, merge_phrase

COMMANDS = ("code-transcripts", "train-embedding", "screen-tokens", "build-panel", "estimate", "poisson",
            "crowding", "prices", "hubs", "control-function", "diagnostics", "simulate", "run-all")

PATH_KEYS = ("segments", "transcripts", "status", "labels", "coordinates", "populations", "ontime", "fares",
             "city_map", "mergers", "flags", "panel", "embedding", "hub_distances")

# key -> (parser, default, help)
OPTIONS = {
    "out": (str, "out", "output directory"),
    "alignment": (str, "shifted", "call-to-month alignment: shifted | contemporaneous"),
    "granularity": (str, "airport", "market granularity: airport | city"),
    "fe": (str, "carrier-market", "fixed effects: carrier-market | carrier-market-structure"),
    "treatment": (str, "main", "treatment variant: " + " | ".join(TREATMENTS)
                  + " | z-token:<token> | period-split:YYYY-MM"),
    "legacy": (str, ",".join(sorted(LEGACY_DEFAULT)), "comma-separated legacy carrier codes"),
    "lcc": (str, ",".join(sorted(LCC_DEFAULT)), "comma-separated low-cost carrier codes"),
    "tokens": (str, "", "comma-separated tokens for Z_<token> panel variables"),
    "tol": (float, 1e-8, "absorption tolerance (max abs change)"),
    "max_iter": (int, 10000, "absorption iteration cap"),
    "B": (int, 200, "bootstrap replicates for the control function (0 disables)"),
    "seed": (int, 0, "random seed"),
    "threads": (int, 1, "worker budget for bootstrap and embedding training"),
    "min_flights": (int, 4, "monthly flights needed to serve a market"),
    "dims": (int, 300, "embedding dimensions"),
    "window": (int, 5, "skip-gram window"),
    "negatives": (int, 5, "negative samples per context"),
    "epochs": (int, 5, "training epochs"),
    "min_count": (int, 5, "vocabulary minimum count"),
    "sample": (float, 1e-4, "frequent-token subsampling threshold"),
    "d_lo": (float, 0.55, "lower cosine bound for token screening"),
    "d_hi": (float, 0.95, "upper cosine bound for token screening"),
    "cooccur_min": (float, 0.5, "minimum report co-occurrence share"),
    "hub_threshold": (float, 0.1, "betweenness threshold for hubs"),
    "network_period": (str, "quarter", "network period: quarter | month"),
    "lead": (bool, False, "diagnostics: run the lead exogeneity test"),
    "twfe_weights": (bool, False, "diagnostics: report two-way fixed-effects weights"),
}
for _k in PATH_KEYS:
    OPTIONS[_k] = (str, None, f"path to the {_k.replace('_', ' ')} input")

TABLE_ROWS = ["CapacityDiscipline", "TalkEligible", "Monopoly", "MissingReport", "TE_x_Missing", "Mono_x_Missing"]


class ConfigError(ValueError):
    pass


_ERRORS = (
    (ConfigError, 4, "config"),
    (io.SchemaError, 2, "schema"),
    ((EstimationError, AbsorptionError, PoissonFEError, np.linalg.LinAlgError, FloatingPointError), 3,
     "numerical"),
    ((KeyError, ValueError), 2, "data"),
)


# --------------------------------------------------------------------------- configuration


def _parse_bool(v) -> bool:
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off", ""):
        return False
    raise ValueError(f"not a boolean: {v!r}")


class RunConfig:
    """Resolved settings for one run; attribute access by option key."""

    def __init__(self, values: dict, base_dirs: dict):
        self._v = {}
        for key, (kind, default, _) in OPTIONS.items():
            raw = values.get(key, default)
            if raw is None:
                self._v[key] = None
                continue
            try:
                self._v[key] = _parse_bool(raw) if kind is bool else kind(raw)
            except (TypeError, ValueError):
                raise ConfigError(f"option {key}: cannot parse {raw!r} as {kind.__name__}") from None
        for key in PATH_KEYS:
            if self._v[key] is not None:
                p = Path(self._v[key])
                if not p.is_absolute():
                    p = base_dirs.get(key, Path.cwd()) / p
                if not p.exists():
                    raise ConfigError(f"path for {key} does not exist: {p}")
                self._v[key] = p
        out = Path(self._v["out"])
        self._v["out"] = out if out.is_absolute() else base_dirs.get("out", Path.cwd()) / out
        self._validate()

    def _validate(self):
        v = self._v
        choices = {"alignment": ("shifted", "contemporaneous"), "granularity": ("airport", "city"),
                   "fe": ("carrier-market", "carrier-market-structure"), "network_period": ("quarter", "month")}
        for k, allowed in choices.items():
            if v[k] not in allowed:
                raise ConfigError(f"option {k} must be one of {', '.join(allowed)}; got {v[k]!r}")
        t = v["treatment"]
        if not (t in TREATMENTS or re.fullmatch(r"z-token:\S+", t) or re.fullmatch(r"period-split:\d{4}-\d{2}", t)):
            raise ConfigError(f"unknown treatment variant {t!r}")
        if t.startswith("period-split:"):
            try:
                YearMonth.parse(t.split(":", 1)[1])
            except ValueError as exc:
                raise ConfigError(f"treatment {t!r}: {exc}") from None
        if v["B"] < 0 or v["B"] == 1:
            raise ConfigError("B must be 0 or at least 2")
        if v["threads"] < 1:
            raise ConfigError("threads must be at least 1")
        if v["seed"] < 0:
            raise ConfigError("seed must be non-negative")
        if v["tol"] <= 0 or v["max_iter"] < 1:
            raise ConfigError("tol must be positive and max_iter at least 1")
        if not -1 <= v["d_lo"] <= v["d_hi"] <= 1 or not 0 <= v["cooccur_min"] <= 1:
            raise ConfigError("need -1 <= d_lo <= d_hi <= 1 and cooccur_min in [0, 1]")
        if v["dims"] < 2 or v["window"] < 1 or v["epochs"] < 1 or v["negatives"] < 0 or v["min_count"] < 1:
            raise ConfigError("invalid embedding training options")
        overlap = set(self.legacy) & set(self.lcc)
        if overlap:
            raise ConfigError(f"carriers in both legacy and lcc: {sorted(overlap)}")

    def __getattr__(self, key):
        try:
            return self.__dict__["_v"][key]
        except KeyError:
            raise AttributeError(key) from None

    @property
    def legacy(self) -> list:
        return [c.strip() for c in self._v["legacy"].split(",") if c.strip()]

    @property
    def lcc(self) -> list:
        return [c.strip() for c in self._v["lcc"].split(",") if c.strip()]

    @property
    def token_list(self) -> list:
        toks = [t.strip() for t in self._v["tokens"].split(",") if t.strip()]
        if self._v["treatment"].startswith("z-token:"):
            tok = self._v["treatment"].split(":", 1)[1]
            if tok not in toks:
                toks.append(tok)
        return toks

    def require(self, *keys):
        missing = [k for k in keys if self._v.get(k) is None]
        if missing:
            raise ConfigError("missing required input: " + ", ".join(f"--{k.replace('_', '-')}" for k in missing))


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    for key, (kind, default, helptext) in OPTIONS.items():
        flags = [f"--{key.replace('_', '-')}"] + ([f"--{key}"] if "_" in key else [])
        if kind is bool:
            common.add_argument(*flags, dest=key, nargs="?", const="true", default=None, help=helptext)
        else:
            common.add_argument(*flags, dest=key, default=None, help=f"{helptext} (default: {default})")
    parser = argparse.ArgumentParser(prog="capdisc", description="Capacity-discipline analysis pipeline.")
    sub = parser.add_subparsers(dest="command", metavar="command")
    for cmd in COMMANDS:
        sub.add_parser(cmd, parents=[common], help=_HELP[cmd])
    return parser


_HELP = {
    "code-transcripts": "tokenize transcripts and code carrier-quarter flags",
    "train-embedding": "train skip-gram vectors on collected transcripts",
    "screen-tokens": "screen vocabulary tokens by anchor similarity and co-occurrence",
    "build-panel": "build the carrier-market-month panel",
    "estimate": "within regression of log seats with clustered errors",
    "poisson": "Poisson fixed-effects model of market flights",
    "crowding": "departure crowding and its market-level regression",
    "prices": "route-weighted price panel and fare regression",
    "hubs": "carrier networks, hubs and hub-distance instruments",
    "control-function": "two-step control-function estimates",
    "diagnostics": "lead exogeneity test and two-way fixed-effects weights",
    "simulate": "write a synthetic dataset",
    "run-all": "run every stage whose inputs are available",
}


def resolve_config(ns: argparse.Namespace) -> RunConfig:
    values, bases = {}, {}
    if ns.config:
        cfg_path = Path(ns.config)
        if not cfg_path.is_file():
            raise ConfigError(f"config file not found: {cfg_path}")
        try:
            file_vals = io.read_key_value(cfg_path)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        unknown = sorted(set(file_vals) - set(OPTIONS))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        values.update(file_vals)
        bases = {k: cfg_path.resolve().parent for k in file_vals}
    for key in OPTIONS:
        v = getattr(ns, key, None)
        if v is not None:
            values[key] = v
            bases.pop(key, None)
    return RunConfig(values, bases)


# --------------------------------------------------------------------------- run state


class Run:
    """Lazily computed artifacts shared by the stages of one invocation."""

    def __init__(self, cfg: RunConfig, stdout=None):
        self.cfg = cfg
        self.out: Path = cfg.out
        self.stdout = stdout or sys.stdout
        self._cache = {}
        self.written = []

    def _once(self, key, fn):
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]

    # ------------------------------------------------------------ outputs
    def write_csv(self, df: pd.DataFrame, name: str):
        path = self.out / name
        io.write_table(df, path)
        self.written.append(path)

    def write_text(self, text: str, name: str, show: bool = True):
        path = self.out / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8", newline="\n")
        self.written.append(path)
        if show:
            self.stdout.write(text)

    # ------------------------------------------------------------ inputs
    @property
    def registry(self) -> CarrierRegistry:
        def make():
            mergers = io.read_mergers(self.cfg.mergers) if self.cfg.mergers else ()
            return CarrierRegistry(self.cfg.legacy, self.cfg.lcc, mergers)
        return self._once("registry", make)

    @property
    def records(self):
        def make():
            self.cfg.require("transcripts", "status")
            return io.read_transcripts(self.cfg.transcripts, self.cfg.status)
        return self._once("records", make)

    @property
    def coding(self):
        def make():
            overrides = io.read_overrides(self.cfg.labels) if self.cfg.labels else ()
            return code_corpus(self.records, overrides)
        return self._once("coding", make)

    @property
    def flags(self) -> pd.DataFrame:
        def make():
            if self.cfg.flags is not None:
                return io.read_table(self.cfg.flags, io.FLAGS)
            return flags_frame(self.coding[0])
        return self._once("flags", make)

    @property
    def segments(self) -> pd.DataFrame:
        def make():
            self.cfg.require("segments")
            seg = io.read_table(self.cfg.segments, io.SEGMENTS)
            if self.cfg.granularity == "city":
                self.cfg.require("city_map")
                cm = io.read_table(self.cfg.city_map, io.CITY_MAP)
                seg = to_city_pairs(seg, dict(zip(cm["airport"], cm["city"])), self.cfg.min_flights)
            return seg
        return self._once("segments", make)

    @property
    def panel(self) -> pd.DataFrame:
        def make():
            if self.cfg.panel is not None:
                return io.read_panel(self.cfg.panel)
            return self.build_panel()
        return self._once("panel", make)

    def build_panel(self) -> pd.DataFrame:
        tflags = {tok: token_flags(self.records, tok) for tok in self.cfg.token_list}
        panel = build_panel(self.segments, self.flags, self.registry, AlignmentMode(self.cfg.alignment),
                            self.cfg.min_flights, tflags or None)
        if panel.empty:
            raise ValueError(f"no carrier serves any market with at least {self.cfg.min_flights} monthly flights")
        if self.cfg.populations is not None:
            pops = io.read_table(self.cfg.populations, io.POPULATIONS)
            panel = attach_market_classes(panel, pops)
        return panel

    @property
    def coordinates(self) -> pd.DataFrame:
        def make():
            self.cfg.require("coordinates")
            return io.read_table(self.cfg.coordinates, io.COORDINATES)
        return self._once("coordinates", make)

    @property
    def networks(self):
        return self._once("networks", lambda: build_networks(
            self.segments, self.cfg.network_period, self.cfg.hub_threshold, self.cfg.min_flights,
            carriers=self.cfg.legacy + self.cfg.lcc))

    @property
    def hub_distances(self) -> pd.DataFrame:
        def make():
            if self.cfg.hub_distances is not None:
                return io.read_table(self.cfg.hub_distances, io.HUB_DISTANCES)
            mk = self.panel[["origin", "dest", "year", "month"]].drop_duplicates().sort_values(
                ["origin", "dest", "year", "month"], kind="mergesort").reset_index(drop=True)
            return hub_distance_table(mk, self.networks, self.coordinates, self.cfg.legacy, self.cfg.lcc,
                                      self.cfg.network_period)
        return self._once("hub_distances", make)

    @property
    def fe(self):
        return CARRIER_MARKET if self.cfg.fe == "carrier-market" else CARRIER_MARKET_STRUCTURE


# --------------------------------------------------------------------------- commands


def cmd_code_transcripts(run: Run) -> None:
    results, queue = run.coding
    flags = flags_frame(results)
    run.write_csv(flags, "flags.csv")
    run.write_csv(pd.DataFrame([(c, yq.year, yq.quarter) for c, yq in queue],
                               columns=["carrier", "year", "quarter"]), "review_queue.csv")
    counts = flags["reason"].value_counts().sort_index()
    lines = ["Transcript coding", "-" * 32]
    lines += [f"{k:<24}{v:>8}" for k, v in counts.items()]
    lines += ["-" * 32, f"{'carrier-quarters':<24}{len(flags):>8}", f"{'flagged':<24}{int(flags['flag'].sum()):>8}",
              f"{'awaiting review':<24}{len(queue):>8}"]
    run.write_text("\n".join(lines) + "\n", "coding.txt")


def cmd_train_embedding(run: Run) -> None:
    cfg = run.cfg
    corpus = training_corpus(run.records)
    tc = TrainingConfig(dims=cfg.dims, window=cfg.window, negatives=cfg.negatives, epochs=cfg.epochs,
                        min_count=cfg.min_count, sample=cfg.sample, seed=cfg.seed, workers=cfg.threads)
    emb = train_skipgram(corpus, tc)
    path = run.out / "embedding.bin"
    path.parent.mkdir(parents=True, exist_ok=True)
    emb.save(path)
    run.written.append(path)
    run._cache["embedding"] = emb
    counts = pd.Series([t for s in corpus for t in s]).value_counts()
    run.write_csv(pd.DataFrame({"token": emb.vocabulary, "count": counts.reindex(emb.vocabulary).to_numpy()}),
                  "vocabulary.csv")
    run.write_text(f"Embedding: {len(emb.vocabulary)} tokens x {emb.dims} dimensions, "
                   f"{len(corpus)} sentences, seed {cfg.seed}\n", "embedding.txt")


def cmd_screen_tokens(run: Run) -> None:
    cfg = run.cfg
    if "embedding" in run._cache:
        emb = run._cache["embedding"]
    else:
        cfg.require("embedding")
        emb = Embedding.load(cfg.embedding)
    screen = TokenScreen(DEFAULT_ANCHORS, cfg.d_lo, cfg.d_hi, cfg.cooccur_min)
    reports = [[t for s in merge_phrase(r.sentences) for t in s]
               for r in run.records if r.status is TranscriptStatus.COLLECTED]
    cooc = report_cooccurrence(reports, screen.anchors, screen.cooccur_mode)
    picked = screen_tokens(emb, screen, cooc)
    sims = pd.DataFrame({f"cos_{a}": emb.similarities(a) for a in screen.anchors}).drop(index=list(screen.anchors))
    sims["mean_cos"] = sims.mean(axis=1)
    sims["share"] = cooc["share"].reindex(sims.index).fillna(0.0)
    sims["n_reports"] = cooc["n_reports"].reindex(sims.index).fillna(0).astype(int)
    sims["selected"] = sims.index.isin(picked).astype(int)
    sims = sims.sort_values(["mean_cos"], ascending=False, kind="mergesort")
    sims.insert(0, "token", sims.index)
    run.write_csv(sims.reset_index(drop=True), "token_screen.csv")
    lines = [f"Token screen: cosine in [{cfg.d_lo}, {cfg.d_hi}] with every anchor, "
             f"co-occurrence share >= {cfg.cooccur_min}", f"selected: {len(picked)}"]
    lines += [f"  {t}" for t in picked]
    run.write_text("\n".join(lines) + "\n", "token_screen.txt")


def cmd_build_panel(run: Run) -> None:
    panel = run._once("panel", run.build_panel)
    run.write_csv(panel, "panel.csv")
    means = panel[["CapacityDiscipline", "TalkEligible", "Monopoly", "MissingReport"]].mean()
    lines = ["Panel summary", "-" * 36, f"{'rows':<24}{len(panel):>12,}",
             f"{'markets':<24}{panel['market'].nunique():>12,}",
             f"{'clusters':<24}{panel['cluster'].nunique():>12,}",
             f"{'carriers':<24}{panel['carrier'].nunique():>12,}"]
    lines += [f"{'mean ' + k:<24}{v:>12.4f}" for k, v in means.items()]
    run.write_text("\n".join(lines) + "\n", "panel_summary.txt")


def _results_frame(res, model: str) -> pd.DataFrame:
    df = coefficient_frame(res, model)
    df["n_clusters"] = res.n_clusters
    df["r2_within"] = getattr(res, "r2", np.nan)
    return df


def cmd_estimate(run: Run) -> None:
    cfg = run.cfg
    if cfg.treatment in ("size", "business") and "size_class" not in run.panel:
        raise ConfigError(f"treatment {cfg.treatment} needs --populations")
    df, treat, ctrl = design(run.panel, cfg.treatment)
    res = estimate_fe(df, "log_seats", treat + ctrl, run.fe, "cluster", cfg.tol, cfg.max_iter)
    run.write_csv(_results_frame(res, f"log_seats:{cfg.treatment}"), "estimates.csv")
    rows = treat + [c for c in TABLE_ROWS if c in ctrl] + [c for c in ctrl if c not in TABLE_ROWS]
    table = regression_table([res], rows=rows, titles=[f"log seats ({cfg.treatment})"],
                             extra={"Clusters": [res.n_clusters], "Fixed effects": [cfg.fe]})
    note = ("Semi-elasticities (percent) for binary regressors; standard errors clustered by "
            "bi-directional market in parentheses.\n")
    if res.dropped:
        note += f"Dropped as collinear: {', '.join(res.dropped)}\n"
    run.write_text(table + note, "estimates.txt")


def cmd_poisson(run: Run) -> None:
    mkt = market_level(run.panel)
    res = poisson_fe(mkt, "flights", TABLE_ROWS, group="market", time="yq", cluster="cluster")
    df = res.to_frame()
    df.insert(0, "term", df.index)
    df.insert(0, "model", "flights:poisson")
    df["n_obs"] = res.n_obs
    df["n_groups"] = res.n_groups
    df["loglik"] = res.loglik
    run.write_csv(df.reset_index(drop=True), "poisson.csv")
    table = regression_table([res], rows=[r for r in TABLE_ROWS if r in res.coef.index], semi=False,
                             titles=["flights (Poisson)"],
                             extra={"Markets": [res.n_groups], "Log-likelihood": [f"{res.loglik:.4f}"]})
    note = "Coefficients with cluster-robust standard errors in parentheses.\n"
    if res.dropped:
        note += f"Not identified: {', '.join(res.dropped)}\n"
    run.write_text(table + note, "poisson.txt")


def cmd_crowding(run: Run) -> None:
    cfg = run.cfg
    cfg.require("ontime")
    ontime = io.read_table(cfg.ontime, io.ONTIME)
    if cfg.granularity == "city":
        cfg.require("city_map")
        cm = io.read_table(cfg.city_map, io.CITY_MAP)
        city = dict(zip(cm["airport"], cm["city"]))
        ontime = ontime.assign(origin=ontime["origin"].map(city), dest=ontime["dest"].map(city))
        if ontime[["origin", "dest"]].isna().any().any():
            raise KeyError("airport missing from the city map")
        ontime = ontime.loc[ontime["origin"] != ontime["dest"]]
    crowd = crowding_panel(ontime)
    run.write_csv(crowd, "crowding.csv")
    have_panel = cfg.panel is not None or cfg.segments is not None
    if not have_panel:
        run.write_text(f"Crowding computed for {len(crowd)} market-months\n", "crowding.txt")
        return
    mkt = market_level(run.panel).merge(crowd[["origin", "dest", "year", "month", "crowding"]],
                                        on=["origin", "dest", "year", "month"], how="inner")
    mkt["CD_x_log_seats"] = mkt["CapacityDiscipline"] * mkt["log_seats"]
    regs = TABLE_ROWS + ["log_seats", "CD_x_log_seats"]
    res = estimate_fe(mkt, "crowding", regs, MARKET_LEVEL, "cluster", cfg.tol, cfg.max_iter)
    run.write_csv(_results_frame(res, "crowding"), "crowding_estimates.csv")
    table = regression_table([res], rows=["CD_x_log_seats", "log_seats"] + TABLE_ROWS, semi=False,
                             titles=["departure crowding"],
                             labels={**LABELS, "CD_x_log_seats": "Capacity Discipline x log seats",
                                     "log_seats": "log seats (market)"})
    run.write_text(table + "Coefficients; standard errors clustered by bi-directional market in parentheses.\n",
                   "crowding.txt")


def cmd_prices(run: Run) -> None:
    cfg = run.cfg
    cfg.require("fares")
    fares = io.read_table(cfg.fares, io.FARES)
    pp = route_price_panel(fares, market_level(run.panel))
    if pp.empty:
        raise ValueError("no fare route matches the segment panel")
    ym_last = pp["year"] * 12 + pp["quarter"] * 3 - 1
    entity = run.registry.entity_series(pp["carrier"], ym_last)
    pp["cm_key"] = entity + "|" + pp["market"]
    pp["cyq_key"] = entity + "|" + pp["yq"]
    run.write_csv(pp, "price_panel.csv")
    res = estimate_fe(pp, "log_fare", TABLE_ROWS, CARRIER_MARKET, "cluster", cfg.tol, cfg.max_iter)
    run.write_csv(_results_frame(res, "log_fare"), "prices.csv")
    table = regression_table([res], rows=TABLE_ROWS, titles=["log fare"])
    run.write_text(table + "Passenger-weighted route indicators; semi-elasticities in percent; standard errors "
                   "clustered by bi-directional market in parentheses.\n", "prices.txt")


def cmd_hubs(run: Run) -> None:
    hf = hubs_frame(run.networks)
    run.write_csv(hf, "hubs.csv")
    run.write_csv(run.hub_distances, "hub_distances.csv")
    h = hf.loc[hf["hub"] == 1].groupby(["carrier", "period"])["airport"].apply(lambda s: " ".join(sorted(s)))
    lines = [f"Hubs (betweenness >= {run.cfg.hub_threshold})", "-" * 40]
    lines += [f"{c:<4}{p:<10}{a}" for (c, p), a in h.items()]
    run.write_text("\n".join(lines) + "\n", "hubs.txt")


def _instruments(panel: pd.DataFrame, cfg: RunConfig) -> list:
    cols = [f"D_{c}" for c in sorted(cfg.legacy)] + ["D_LCC"]
    return [c for c in cols if c in panel and np.isfinite(panel[c].to_numpy(float)).any()
            and np.nanstd(panel[c].to_numpy(float)) > 0]


def cmd_control_function(run: Run) -> None:
    cfg = run.cfg
    hd = run.hub_distances
    dcols = [c for c in hd.columns if c.startswith("D_") and c != "D_missing"]
    panel = run.panel.drop(columns=[c for c in dcols if c in run.panel], errors="ignore")
    panel = panel.merge(hd[["origin", "dest", "year", "month"] + dcols], on=["origin", "dest", "year", "month"],
                        how="left", validate="many_to_one")
    inst = _instruments(panel, cfg)
    if not inst:
        raise EstimationError("no hub-distance instrument has variation")
    cf = control_function(panel, inst, fe=run.fe, B=cfg.B, seed=cfg.seed, n_jobs=cfg.threads)
    ss = cf.second_stage
    df = _results_frame(ss, "second_stage")
    df["se_two_step"] = cf.two_step_se.reindex(df["term"]).to_numpy()
    if cf.bootstrap is not None:
        df["se_bootstrap"] = cf.bootstrap_se("ss").reindex(df["term"]).to_numpy()
    fs = _results_frame(cf.first_stage, "first_stage")
    if cf.bootstrap is not None:
        fs["se_bootstrap"] = cf.bootstrap_se("fs").reindex(fs["term"]).to_numpy()
    out = pd.concat([fs, df], ignore_index=True)
    out["first_stage_F"] = cf.first_stage_f
    run.write_csv(out, "control_function.csv")
    rows = ["CapacityDiscipline", "TalkEligible", "Monopoly", "MissingReport", "TE_x_Missing", "Mono_x_Missing",
            "cf_residual"]
    table = regression_table([ss], rows=[r for r in rows if r in ss.coef.index], titles=["log seats + residual"])
    lines = [table.rstrip("\n"), f"First-stage F (instruments: {', '.join(inst)}): {cf.first_stage_f:.4f}"]
    se2 = cf.two_step_se
    lines.append("Two-step standard errors: " + ", ".join(f"{k} {se2[k]:.6f}" for k in rows if k in se2.index))
    if cf.bootstrap is not None:
        bse = cf.bootstrap_se("ss")
        lines.append(f"Bootstrap standard errors (B={cfg.B}, failed {cf.bootstrap.n_failed}): "
                     + ", ".join(f"{k} {bse[k]:.6f}" for k in rows if k in bse.index))
    run.write_text("\n".join(lines) + "\n", "control_function.txt")


def cmd_diagnostics(run: Run) -> None:
    cfg = run.cfg
    do_lead, do_w = cfg.lead, cfg.twfe_weights
    if not do_lead and not do_w:
        do_lead = do_w = True
    rows, lines = [], []
    if do_lead:
        lt = lead_exogeneity_test(run.panel, "log_seats", TABLE_ROWS, run.fe, "cluster")
        rows += [("lead_coef", lt.coef), ("lead_se", lt.se), ("lead_pvalue", lt.pvalue),
                 ("lead_n_obs", lt.result.n_obs)]
        lines.append(regression_table([lt.result], rows=[lt.lead, "CapacityDiscipline"], semi=False,
                                      titles=["log seats with lead"]).rstrip("\n"))
    if do_w:
        w = twfe_weights(run.panel, "CapacityDiscipline", run.fe, controls=[c for c in TABLE_ROWS[1:]])
        rows += [("twfe_share_negative", w.share_negative), ("twfe_n_treated", w.n_treated)]
        run.write_csv(pd.DataFrame({"row": w.weights.index, "weight": w.weights.to_numpy()}), "twfe_weights.csv")
        lines.append(f"Two-way FE weights: {w.n_treated} treated cells, share negative {w.share_negative:.6f}")
    run.write_csv(pd.DataFrame(rows, columns=["statistic", "value"]), "diagnostics.csv")
    run.write_text("\n".join(lines) + "\n", "diagnostics.txt")


def cmd_simulate(run: Run) -> None:
    from .synth import DatasetDGP, gen_dataset

    truth = gen_dataset(run.out, DatasetDGP(seed=run.cfg.seed))
    run.stdout.write(f"Synthetic dataset (seed {run.cfg.seed}) written to {run.out}; "
                     f"true CapacityDiscipline coefficient {truth['beta']['CapacityDiscipline']}\n")


def cmd_run_all(run: Run) -> None:
    cfg = run.cfg
    stages = []
    if cfg.transcripts is not None and cfg.status is not None:
        stages += [cmd_code_transcripts, cmd_train_embedding, cmd_screen_tokens]
    stages += [cmd_build_panel, cmd_estimate, cmd_poisson]
    if cfg.ontime is not None:
        stages.append(cmd_crowding)
    if cfg.fares is not None:
        stages.append(cmd_prices)
    if cfg.coordinates is not None:
        stages += [cmd_hubs, cmd_control_function]
    stages.append(cmd_diagnostics)
    for stage in stages:
        run.stdout.write(f"== {stage.__name__[4:].replace('_', '-')}\n")
        stage(run)
    rows = []
    for p in sorted(set(run.written)):
        data = p.read_bytes()
        rows.append((p.relative_to(run.out).as_posix(), len(data), hashlib.sha256(data).hexdigest()))
    run.write_csv(pd.DataFrame(rows, columns=["file", "bytes", "sha256"]), "manifest.csv")


HANDLERS = {
    "code-transcripts": cmd_code_transcripts, "train-embedding": cmd_train_embedding,
    "screen-tokens": cmd_screen_tokens, "build-panel": cmd_build_panel, "estimate": cmd_estimate,
    "poisson": cmd_poisson, "crowding": cmd_crowding, "prices": cmd_prices, "hubs": cmd_hubs,
    "control-function": cmd_control_function, "diagnostics": cmd_diagnostics, "simulate": cmd_simulate,
    "run-all": cmd_run_all,
}


def _error_record(exc: BaseException, command: Optional[str]) -> tuple[int, dict]:
    for classes, code, kind in _ERRORS:
        if isinstance(exc, classes):
            break
    else:
        code, kind = 3, "numerical"
    rec = {"error": kind, "exit_code": code, "command": command, "type": type(exc).__name__,
           "message": exc.args[0] if isinstance(exc, KeyError) and exc.args else str(exc)}
    if isinstance(exc, io.SchemaError):
        rec.update(path=exc.path, line=exc.line, column=exc.column, message=exc.message)
    return code, rec


def main(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = _build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        # usage errors are configuration errors; --help exits cleanly
        return 0 if not exc.code else 4
    if not ns.command:
        parser.print_help(stdout)
        return 4
    try:
        cfg = resolve_config(ns)
        run = Run(cfg, stdout)
        HANDLERS[ns.command](run)
    except Exception as exc:  # mapped to an exit code and a JSON record
        code, rec = _error_record(exc, ns.command)
        stderr.write(json.dumps(rec, sort_keys=True, default=str) + "\n")
        return code
    return 0


if __name__ == "__main__":
    sys.exit(main())
