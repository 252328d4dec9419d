"""Synthetic data with known ground truth.

Every generator draws from ``numpy.random.Generator(PCG64)`` seeded with an
integer; sub-streams come from ``SeedSequence.spawn`` so adding a component
never perturbs the draws of another. Floats are written with 17 significant
digits so files round-trip exactly.
"""

from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from .core import CarrierRegistry, MergerEvent, YearMonth
from .network import Graph
from .panel import AlignmentMode, _call_quarter_index, build_panel
from .textproc import default_lemmatizer, default_stopwords

RNG_NAME = "numpy.random.PCG64"
FLOAT_FORMAT = "%.17g"
TRUE_BETA = -0.0204


def rng_info() -> dict:
    return {"generator": RNG_NAME, "numpy": np.__version__}


def _streams(seed: int, n: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


# --------------------------------------------------------------------------- airports


_CONS = "bdfgklmnprtvz"
_VOWS = "aeiou"


def airport_codes(n: int, rng: np.random.Generator) -> list[str]:
    letters = np.array(list("ABCDEFGHIJKLMNOPQRSTUVWXYZ"))
    out = set()
    while len(out) < n:
        out.add("".join(rng.choice(letters, 3)))
    return sorted(out)


def airport_coordinates(codes: Sequence[str], rng: np.random.Generator) -> pd.DataFrame:
    # continental-US box
    lat = rng.uniform(26.0, 48.0, len(codes))
    lon = rng.uniform(-122.0, -71.0, len(codes))
    return pd.DataFrame({"airport": list(codes), "lat": lat, "lon": lon})


# --------------------------------------------------------------------------- communication


def communication_flags(carriers: Sequence[str], q_first: int, q_last: int, p_talk: float,
                        persistence: float, p_missing: float, rng: np.random.Generator) -> pd.DataFrame:
    """Per carrier-quarter talk flags from a two-state Markov chain.

    ``q_first``/``q_last`` are quarter indices ``year*4 + quarter-1``. A
    share ``p_missing`` of carrier-quarters has no collected transcript.
    """
    a = persistence + (1 - persistence) * p_talk   # P(1 -> 1)
    b = (1 - persistence) * p_talk                  # P(0 -> 1)
    rows = []
    statuses = np.array(["Bankruptcy", "Merger", "Private", "Other"])
    for c in carriers:
        state = rng.random() < p_talk
        for q in range(q_first, q_last + 1):
            state = rng.random() < (a if state else b)
            missing = rng.random() < p_missing
            status = str(rng.choice(statuses)) if missing else "Collected"
            rows.append((c, q // 4, q % 4 + 1, status, int(state and not missing)))
    return pd.DataFrame(rows, columns=["carrier", "year", "quarter", "status", "flag"])


# --------------------------------------------------------------------------- carrier-market-month panel


@dataclass
class PanelDGP:
    """Parameters of the carrier-market-month outcome process.

    Log seats are ``base + sum_k beta_k X_k + mu_cm + mu_cyq + g_o t + g_d t +
    e`` with ``e = sigma (sqrt(rho) eta_cluster_month + sqrt(1-rho) nu)``.
    """

    beta: dict = field(default_factory=lambda: {"CapacityDiscipline": TRUE_BETA})
    n_airports: int = 24
    n_pairs: int = 120
    start: str = "2008-01"
    n_months: int = 36
    legacy: tuple = ("AA", "DL", "UA", "US", "CO")
    lcc: tuple = ("WN", "B6")
    p_serve_legacy: float = 0.5
    p_serve_lcc: float = 0.3
    entry_persistence: float = 0.9
    p_talk: float = 0.5
    talk_persistence: float = 0.5
    p_missing: float = 0.03
    p_subthreshold: float = 0.02
    sd_cm: float = 0.5
    sd_cyq: float = 0.05
    sd_trend: float = 0.02
    sigma: float = 0.1
    rho: float = 0.3
    base: float = 8.0
    n_hubs: int = 0
    seed: int = 0


@dataclass
class SyntheticPanel:
    panel: pd.DataFrame
    segments: pd.DataFrame
    flags: pd.DataFrame
    coordinates: pd.DataFrame
    truth: dict


def _markov_paths(shape, p, persistence, rng):
    a = persistence + (1 - persistence) * p
    b = (1 - persistence) * p
    T = shape[-1]
    out = np.zeros(shape, dtype=bool)
    out[..., 0] = rng.random(shape[:-1]) < p
    for t in range(1, T):
        u = rng.random(shape[:-1])
        out[..., t] = np.where(out[..., t - 1], u < a, u < b)
    return out


def _serving_segments(dgp: PanelDGP, rng: np.random.Generator, airports: list[str]):
    pairs = list(itertools.combinations(airports, 2))
    pick = rng.choice(len(pairs), size=min(dgp.n_pairs, len(pairs)), replace=False)
    pairs = [pairs[i] for i in np.sort(pick)]
    carriers = list(dgp.legacy) + list(dgp.lcc)
    p = np.array([dgp.p_serve_legacy] * len(dgp.legacy) + [dgp.p_serve_lcc] * len(dgp.lcc))
    p = np.broadcast_to(p[None, :], (len(pairs), len(carriers))).copy()
    if dgp.n_hubs > 0:
        # hub-and-spoke networks: pairs touching one of a carrier's hubs are served far more often
        for c in range(len(carriers)):
            hub_set = set(rng.choice(airports, size=dgp.n_hubs, replace=False).tolist())
            touches = np.array([a in hub_set or b in hub_set for a, b in pairs])
            p[:, c] = np.where(touches, np.minimum(0.95, 1.8 * p[:, c]), 0.2 * p[:, c])
    serve = _markov_paths((len(pairs), len(carriers), dgp.n_months), p, dgp.entry_persistence, rng)
    sub = (~serve) & (rng.random(serve.shape) < dgp.p_subthreshold)
    start = YearMonth.parse(dgp.start)
    rows = []
    pi, ci, ti = np.nonzero(serve | sub)
    flights = np.where(serve[pi, ci, ti], rng.integers(20, 200, pi.size), rng.integers(1, 4, pi.size))
    for k in range(pi.size):
        o, d = pairs[pi[k]]
        ym = start.shift(int(ti[k]))
        for a, b in ((o, d), (d, o)):
            rows.append((ym.year, ym.month, carriers[ci[k]], a, b, 0, int(flights[k])))
    seg = pd.DataFrame(rows, columns=["year", "month", "ticketing_carrier", "origin", "dest", "seats", "flights"])
    return seg, pairs


def _outcome(panel: pd.DataFrame, beta: dict, dgp, rng: np.random.Generator, extra=None) -> np.ndarray:
    n = len(panel)
    cm = pd.factorize(panel["cm_key"], sort=True)[0]
    cyq = pd.factorize(panel["cyq_key"], sort=True)[0]
    ocode = pd.factorize(panel["origin"], sort=True)[0]
    dcode = pd.factorize(panel["dest"], sort=True)[0]
    clm = pd.factorize(panel["cluster"].astype(str) + "@" + panel["ym"].astype(str), sort=True)[0]
    mu_cm = rng.normal(0, dgp.sd_cm, cm.max() + 1)
    mu_cyq = rng.normal(0, dgp.sd_cyq, cyq.max() + 1)
    g_o = rng.normal(0, dgp.sd_trend, ocode.max() + 1)
    g_d = rng.normal(0, dgp.sd_trend, dcode.max() + 1)
    eta = rng.normal(0, 1, clm.max() + 1)
    nu = rng.normal(0, 1, n)
    t = panel["t"].to_numpy(float)
    y = dgp.base + mu_cm[cm] + mu_cyq[cyq] + (g_o[ocode] + g_d[dcode]) * t
    y = y + dgp.sigma * (np.sqrt(dgp.rho) * eta[clm] + np.sqrt(1 - dgp.rho) * nu)
    for k, b in beta.items():
        y = y + b * panel[k].to_numpy(float)
    if extra is not None:
        y = y + extra
    return y


def _attach_seats(panel, segments, log_seats):
    seats = np.maximum(np.rint(np.exp(log_seats)), 1).astype(np.int64)
    panel = panel.copy()
    panel["seats"] = seats
    panel["log_seats"] = np.log(seats.astype(float))
    key = ["year", "month", "carrier", "origin", "dest"]
    m = panel[key + ["seats"]].rename(columns={"carrier": "ticketing_carrier", "seats": "_s"})
    seg = segments.merge(m, on=["year", "month", "ticketing_carrier", "origin", "dest"], how="left")
    # rows below the serving threshold are not in the panel; give them a small seat count
    seg["seats"] = seg["_s"].fillna(seg["flights"] * 50).astype(np.int64)
    return panel, seg.drop(columns="_s")


def _quarter_range(start: YearMonth, n_months: int, mode=AlignmentMode.SHIFTED):
    idx = np.array([start.index, start.index + n_months - 1])
    q = _call_quarter_index(idx, mode)
    return int(q[0]) - 1, int(q[1]) + 1


def gen_panel(dgp: PanelDGP = PanelDGP(), registry: Optional[CarrierRegistry] = None) -> SyntheticPanel:
    """Carrier-market-month panel with log seats from the two-way fixed-effect model with carrier-market trends."""
    r_air, r_seg, r_talk, r_out = _streams(dgp.seed, 4)
    airports = airport_codes(dgp.n_airports, r_air)
    coords = airport_coordinates(airports, r_air)
    segments, _ = _serving_segments(dgp, r_seg, airports)
    q0, q1 = _quarter_range(YearMonth.parse(dgp.start), dgp.n_months)
    flags = communication_flags(list(dgp.legacy) + list(dgp.lcc), q0, q1, dgp.p_talk,
                                dgp.talk_persistence, dgp.p_missing, r_talk)
    registry = registry or CarrierRegistry(legacy=dgp.legacy, lcc=dgp.lcc)
    panel = build_panel(segments, flags, registry)
    y = _outcome(panel, dgp.beta, dgp, r_out)
    panel, segments = _attach_seats(panel, segments, y)
    truth = {"beta": dict(dgp.beta), "dgp": asdict(dgp), "rng": rng_info()}
    return SyntheticPanel(panel, segments, flags, coords, truth)


# --------------------------------------------------------------------------- endogenous structure


@dataclass
class EndogenousDGP:
    """Market structure driven by a cost shock that also moves seats.

    Each market has a primary legacy (always serving), a secondary legacy
    that enters exactly when the market is talk-eligible, and an LCC that
    serves whenever the secondary does not (so no market is a monopoly) and
    otherwise with probability one half. Talk-eligibility is
    ``1{u < p}`` with ``p = 0.5 + a_m + b_yq + sum_j sigma_j (D_j - 1)``,
    kept inside (0, 1) by construction. The cost shock ``kappa (u - 0.5)``
    enters log seats, so ``E[shock | TE, p] = -(kappa/2)(TE - p)`` and a
    linear control function is exact.
    """

    beta: dict = field(default_factory=lambda: {"CapacityDiscipline": TRUE_BETA, "TalkEligible": 0.0})
    kappa: float = 0.4
    sigma_d: dict = field(default_factory=lambda: {"AA": -0.10, "DL": -0.09, "UA": -0.08, "LCC": -0.08})
    legacy: tuple = ("AA", "DL", "UA")
    lcc: str = "WN"
    n_airports: int = 30
    n_pairs: int = 120
    start: str = "2008-01"
    n_months: int = 36
    sd_am: float = 0.10
    sd_byq: float = 0.03
    p_talk: float = 0.6
    talk_persistence: float = 0.3
    sd_cm: float = 0.5
    sd_cyq: float = 0.05
    sd_trend: float = 0.02
    sigma: float = 0.1
    rho: float = 0.3
    base: float = 8.0
    seed: int = 0

    def __post_init__(self):
        bound = 0.5 - self.sd_am - self.sd_byq - sum(abs(s) for s in self.sigma_d.values())
        if bound <= 0:
            raise ValueError("entry probability could leave (0, 1); shrink the coefficients")


def gen_endogenous_panel(dgp: EndogenousDGP = EndogenousDGP()) -> SyntheticPanel:
    """Panel with hub-distance instruments ``D_<legacy>`` and ``D_LCC`` and a planted
    correlation between market structure and the seat shock."""
    r_air, r_str, r_talk, r_out = _streams(dgp.seed, 4)
    airports = airport_codes(dgp.n_airports, r_air)
    coords = airport_coordinates(airports, r_air)
    pairs = list(itertools.combinations(airports, 2))
    pick = r_str.choice(len(pairs), size=min(dgp.n_pairs, len(pairs)), replace=False)
    pairs = [pairs[i] for i in np.sort(pick)]
    P, T = len(pairs), dgp.n_months
    start = YearMonth.parse(dgp.start)
    months = [start.shift(i) for i in range(T)]
    qidx = np.array([m.year * 4 + (m.month - 1) // 3 for m in months])
    qcodes = qidx - qidx.min()
    nq = qcodes.max() + 1
    inst = list(dgp.legacy) + ["LCC"]
    # instruments vary by market-quarter, uniform on [0, 2] thousand miles
    D = r_str.uniform(0.0, 2.0, (P, len(inst), nq))
    a_m = r_str.uniform(-dgp.sd_am, dgp.sd_am, P)
    b_q = r_str.uniform(-dgp.sd_byq, dgp.sd_byq, nq)
    sig = np.array([dgp.sigma_d.get(j, 0.0) for j in inst])
    p = 0.5 + a_m[:, None] + b_q[None, qcodes] + np.einsum("j,pjt->pt", sig, D[:, :, qcodes] - 1.0)
    u = r_str.random((P, T))
    te = u < p
    prim = r_str.integers(0, len(dgp.legacy), P)
    sec = (prim + 1 + r_str.integers(0, len(dgp.legacy) - 1, P)) % len(dgp.legacy)
    lcc_on = ~te | (r_str.random((P, T)) < 0.5)
    rows = []
    for i, (o, d) in enumerate(pairs):
        for t, ym in enumerate(months):
            serving = [dgp.legacy[prim[i]]]
            if te[i, t]:
                serving.append(dgp.legacy[sec[i]])
            if lcc_on[i, t]:
                serving.append(dgp.lcc)
            for c in serving:
                f = int(r_str.integers(20, 200))
                rows.append((ym.year, ym.month, c, o, d, 0, f))
                rows.append((ym.year, ym.month, c, d, o, 0, f))
    segments = pd.DataFrame(rows, columns=["year", "month", "ticketing_carrier", "origin", "dest", "seats", "flights"])
    q0, q1 = _quarter_range(start, T)
    flags = communication_flags(list(dgp.legacy) + [dgp.lcc], q0, q1, dgp.p_talk,
                                dgp.talk_persistence, 0.0, r_talk)
    registry = CarrierRegistry(legacy=dgp.legacy, lcc=(dgp.lcc,))
    panel = build_panel(segments, flags, registry)
    # attach instruments and the structural shock by unordered pair and month
    pos = {frozenset(pq): i for i, pq in enumerate(pairs)}
    pi = np.array([pos[frozenset((o, d))] for o, d in zip(panel["origin"], panel["dest"])])
    ti = panel["ym"].to_numpy() - start.index
    for k, j in enumerate(inst):
        panel[f"D_{j}"] = D[pi, k, qcodes[ti]]
    shock = dgp.kappa * (u[pi, ti] - 0.5)
    y = _outcome(panel, dgp.beta, dgp, r_out, extra=shock)
    panel, segments = _attach_seats(panel, segments, y)
    truth = {"beta": dict(dgp.beta), "instruments": [f"D_{j}" for j in inst],
             "residual_coef": -dgp.kappa / 2, "dgp": asdict(dgp), "rng": rng_info()}
    return SyntheticPanel(panel, segments, flags, coords, truth)


# --------------------------------------------------------------------------- lead test


def gen_lead_panel(n_markets: int = 150, n_months: int = 30, beta: float = TRUE_BETA,
                   feedback: float = 0.0, sigma: float = 0.1, seed: int = 0) -> pd.DataFrame:
    """Market-month panel whose treatment may respond to the previous shock.

    ``y = a_m + d_t + beta * CD + e``. The treatment follows a persistent
    binary process; with ``feedback > 0`` next month's treatment is more
    likely after a high ``e``, which violates strict exogeneity.
    """
    rng = np.random.default_rng(seed)
    a = rng.normal(0, 0.5, n_markets)
    d = rng.normal(0, 0.05, n_months)
    e = rng.normal(0, sigma, (n_markets, n_months))
    cd = np.zeros((n_markets, n_months), dtype=int)
    cd[:, 0] = rng.random(n_markets) < 0.4
    for t in range(1, n_months):
        z = -1.0 + 2.0 * cd[:, t - 1] + feedback * e[:, t - 1] / sigma + rng.logistic(size=n_markets)
        cd[:, t] = z > 0
    y = a[:, None] + d[None, :] + beta * cd + e
    m = np.repeat(np.arange(n_markets), n_months)
    t = np.tile(np.arange(n_months), n_markets)
    return pd.DataFrame({"market": [f"M{i:04d}" for i in m], "cluster": [f"M{i:04d}" for i in m],
                         "ym": t, "CapacityDiscipline": cd.ravel(), "y": y.ravel()})


# --------------------------------------------------------------------------- corpus


def pseudo_words(n: int, rng: np.random.Generator, length=(2, 3)) -> list[str]:
    """Pronounceable filler lemmas that the lemmatizer leaves unchanged."""
    lem, stop = default_lemmatizer(), default_stopwords()
    out, seen = [], set()
    while len(out) < n:
        k = int(rng.integers(length[0], length[1] + 1))
        w = "".join(str(rng.choice(list(_CONS))) + str(rng.choice(list(_VOWS))) for _ in range(k))
        if w in seen or w in stop or lem(w) != w:
            continue
        seen.add(w)
        out.append(w)
    return out


@dataclass
class PlantedCorpus:
    reports: list          # list of reports; each report is a list of lemma sentences
    planted: dict          # token -> co-occurrence rate
    controls: list
    anchors: tuple

    @property
    def sentences(self) -> list:
        return [s for r in self.reports for s in r]


def gen_corpus(planted: Optional[dict] = None, n_controls: int = 1, n_reports: int = 300,
               sentences_per_report: int = 20, sentence_length: int = 12, vocab_size: int = 400,
               p_anchor_report: float = 0.5, anchors: Sequence[str] = ("capacity", "discipline", "demand", "gdp"),
               seed: int = 0) -> PlantedCorpus:
    """Reports of filler sentences with planted neighbours of the anchor words.

    Each report is anchored with probability ``p_anchor_report``; an anchored
    report contains one sentence holding every anchor. A planted token with
    rate ``r`` appears in each report once; with probability ``r`` that
    occurrence is placed inside an anchored report's anchor sentence,
    otherwise in a random sentence of an unanchored report. Control tokens
    never appear in anchored reports. ``capacity discipline`` is emitted as
    two adjacent lemmas, as the text pipeline would produce it.
    """
    planted = {"plantedword": 1.0} if planted is None else dict(planted)
    rng = np.random.default_rng(seed)
    vocab = pseudo_words(vocab_size, rng)
    controls = [f"control{chr(97 + i)}" for i in range(n_controls)]
    zipf = 1.0 / np.arange(1, vocab_size + 1)
    zipf /= zipf.sum()
    reports = []
    anchored = rng.random(n_reports) < p_anchor_report
    anchored_idx = np.flatnonzero(anchored)
    plain_idx = np.flatnonzero(~anchored)
    for r in range(n_reports):
        sents = [rng.choice(vocab, sentence_length, p=zipf).tolist() for _ in range(sentences_per_report)]
        if anchored[r]:
            pos = int(rng.integers(0, sentence_length - 2))
            sents[0][pos:pos] = list(anchors)
        reports.append(sents)
    for tok, rate in planted.items():
        for _ in range(n_reports):
            near = rng.random() < rate
            pool = anchored_idx if near else plain_idx
            if pool.size == 0:
                continue
            r = int(rng.choice(pool))
            if near:
                s = reports[r][0]
                k = s.index(anchors[-1]) + 1
                s.insert(k, tok)
            else:
                s = reports[r][int(rng.integers(0, sentences_per_report))]
                s.insert(int(rng.integers(0, len(s) + 1)), tok)
    for tok in controls:
        for _ in range(n_reports):
            if plain_idx.size == 0:
                break
            r = int(rng.choice(plain_idx))
            s = reports[r][int(rng.integers(0, sentences_per_report))]
            s.insert(int(rng.integers(0, len(s) + 1)), tok)
    return PlantedCorpus(reports, planted, controls, tuple(anchors))


# --------------------------------------------------------------------------- networks


THREE_HUB_EDGES = [
    ("DFW", "CLT"), ("DFW", "JFK"), ("DFW", "ORD"), ("CLT", "JFK"), ("JFK", "ORD"),
    ("DFW", "LAX"), ("ORD", "LAX"),
    ("LAX", "SFO"), ("LAX", "LX1"), ("LAX", "LX3"),
    ("CLT", "CHO"), ("CLT", "CT1"), ("CLT", "CT3"),
    ("DFW", "PHX"), ("DFW", "DF1"),
]
# one extra spoke on ORD lifts ORD's centrality to about 0.18, above the 0.1
# hub threshold, so it is left out unless requested
THREE_HUB_ORD_SPOKE = ("ORD", "OR1")


def three_hub_network(with_ord_spoke: bool = False) -> Graph:
    edges = THREE_HUB_EDGES + ([THREE_HUB_ORD_SPOKE] if with_ord_spoke else [])
    return Graph(edges)


def ring_graph(n: int) -> Graph:
    return Graph([(f"N{i}", f"N{(i + 1) % n}") for i in range(n)])


def random_tree(n: int, rng: np.random.Generator) -> Graph:
    nodes = [f"N{i}" for i in range(n)]
    return Graph([(nodes[i], nodes[int(rng.integers(0, i))]) for i in range(1, n)], nodes)


def random_graph(n: int, p: float, rng: np.random.Generator) -> Graph:
    nodes = [f"N{i}" for i in range(n)]
    edges = [(a, b) for a, b in itertools.combinations(nodes, 2) if rng.random() < p]
    return Graph(edges, nodes)


def gen_network(n_nodes: int = 8, design: str = "random", p: float = 0.4, seed: int = 0) -> Graph:
    """``design`` is one of ``random``, ``tree``, ``ring``, ``star`` or ``three_hub``."""
    rng = np.random.default_rng(seed)
    if design == "random":
        return random_graph(n_nodes, p, rng)
    if design == "tree":
        return random_tree(n_nodes, rng)
    if design == "ring":
        return ring_graph(n_nodes)
    if design == "star":
        return Graph([("N0", f"N{i}") for i in range(1, n_nodes)])
    if design == "three_hub":
        return three_hub_network()
    raise ValueError(f"unknown network design {design!r}")


# --------------------------------------------------------------------------- file datasets


_OPENING = "Good morning and welcome to the quarterly earnings conference call."
_FILLER = (
    "We continue to focus on our network and on serving our customers well",
    "Unit revenue improved during the quarter on strong yields",
    "Fuel prices remain a significant headwind for the whole industry",
    "Our employees delivered solid operational performance and reliability",
    "Corporate travel trends look healthy in our core hub markets",
    "We are investing in new aircraft and in our airport facilities",
    "Ancillary revenue from bags and seat upgrades grew again",
    "Labor costs rose in line with our guidance for the year",
    "Our loyalty program keeps adding members at a steady pace",
    "Operating margins expanded compared with the prior year",
)
_TALK = (
    "We remain committed to capacity discipline across the domestic system",
    "Capacity discipline in the industry keeps supply in line with demand and gdp",
    "Continued capacity discipline lets us grow margins as demand and gdp recover",
)
_REVIEW = "We will match our capacity to demand as gdp growth softens"
_QUESTION = "Can you talk about capacity discipline among your competitors"
_OPERATOR_Q = "Our next question comes from the line of an equity analyst."


@dataclass
class DatasetDGP:
    """Parameters of a complete synthetic input dataset written to disk.

    Seats follow :class:`PanelDGP`; flights are seats over ``seats_per_flight``
    (at least the serving minimum); fares respond to the quarterly share of
    talking months with semi-elasticity ``fare_beta``.
    """

    panel: PanelDGP = field(default_factory=lambda: PanelDGP(
        n_airports=14, n_pairs=40, start="2009-01", n_months=24,
        legacy=("AA", "CO", "DL", "UA", "US"), lcc=("WN", "B6"), n_hubs=2))
    mergers: tuple = (("CO", "UA", "2010-10"),)
    seats_per_flight: float = 150.0
    fare_beta: float = 0.0059
    p_connect: float = 0.3
    p_review: float = 0.15
    p_label: float = 0.5
    ontime_days: tuple = (1, 15)
    seed: int = 0


def _transcript_text(flag: int, review: bool, rng: np.random.Generator) -> str:
    k = int(rng.integers(3, 6))
    mgmt = [_FILLER[i] for i in rng.choice(len(_FILLER), size=k, replace=False)]
    if flag:
        mgmt.insert(int(rng.integers(0, k + 1)), _TALK[int(rng.integers(0, len(_TALK)))])
    if review:
        mgmt.append(_REVIEW)
    answer = _FILLER[int(rng.integers(0, len(_FILLER)))]
    parts = [
        f"<<SPEAKER:operator>> {_OPENING}",
        "<<SPEAKER:management>> " + ". ".join(mgmt) + ".",
        f"<<SPEAKER:operator>> {_OPERATOR_Q}",
        f"<<SPEAKER:analyst>> {_QUESTION}?",
        f"<<SPEAKER:management>> {answer}.",
    ]
    return "\n".join(parts) + "\n"


def gen_dataset(out_dir, dgp: DatasetDGP = DatasetDGP()) -> dict:
    """Write every input file of the pipeline under ``out_dir``.

    Files: ``segments.csv``, ``status.csv``, ``labels.csv``,
    ``transcripts/CARRIER_YYYYQN.txt``, ``coordinates.csv``,
    ``populations.csv``, ``city_map.csv``, ``mergers.csv``, ``ontime.csv``,
    ``fares.csv``, ``config.txt`` and ``truth.json``. Returns the truth record.
    """
    import json

    from .io import write_table

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    pdgp = PanelDGP(**{**asdict(dgp.panel), "seed": dgp.seed})
    r_air, r_seg, r_talk, r_out = _streams(pdgp.seed, 4)
    r_txt, r_pop, r_ont, r_fare = _streams(pdgp.seed + 2**31, 4)
    airports = airport_codes(pdgp.n_airports, r_air)
    coords = airport_coordinates(airports, r_air)
    segments, _ = _serving_segments(pdgp, r_seg, airports)
    q0, q1 = _quarter_range(YearMonth.parse(pdgp.start), pdgp.n_months)
    carriers = list(pdgp.legacy) + list(pdgp.lcc)
    flags = communication_flags(carriers, q0, q1, pdgp.p_talk, pdgp.talk_persistence, pdgp.p_missing, r_talk)
    mergers = [MergerEvent(c, e, YearMonth.parse(s)) for c, e, s in dgp.mergers]
    registry = CarrierRegistry(legacy=pdgp.legacy, lcc=pdgp.lcc, mergers=mergers)
    panel = build_panel(segments, flags, registry)
    y = _outcome(panel, pdgp.beta, pdgp, r_out)
    panel, segments = _attach_seats(panel, segments, y)
    served = segments["flights"] >= 4
    segments.loc[served, "flights"] = np.maximum(
        4, np.rint(segments.loc[served, "seats"] / dgp.seats_per_flight)).astype(np.int64)
    lf = r_seg.uniform(0.6, 0.9, len(segments))
    segments["passengers"] = np.rint(segments["seats"] * lf).astype(np.int64)
    segments = segments.sort_values(["year", "month", "ticketing_carrier", "origin", "dest"],
                                     kind="mergesort").reset_index(drop=True)
    write_table(segments, out / "segments.csv")

    # transcripts, status and hand labels
    tdir = out / "transcripts"
    tdir.mkdir(exist_ok=True)
    for p in tdir.glob("*.txt"):
        p.unlink()
    labels = []
    for c, yr, q, st, fl in flags[["carrier", "year", "quarter", "status", "flag"]].itertuples(index=False):
        if st != "Collected":
            continue
        review = (not fl) and r_txt.random() < dgp.p_review
        text = _transcript_text(int(fl), review, r_txt)
        (tdir / f"{c}_{int(yr):04d}Q{int(q)}.txt").write_text(text, encoding="utf-8", newline="\n")
        if review and r_txt.random() < dgp.p_label:
            labels.append((c, int(yr), int(q), 0, "Authors"))
        elif fl and r_txt.random() < 0.1:
            labels.append((c, int(yr), int(q), 1, "RA"))
    write_table(flags[["carrier", "year", "quarter", "status"]], out / "status.csv")
    write_table(pd.DataFrame(labels, columns=["carrier", "year", "quarter", "label", "source"]),
                out / "labels.csv")

    write_table(coords, out / "coordinates.csv")
    years = sorted(segments["year"].unique())
    base_pop = np.exp(r_pop.normal(14.5, 1.0, len(airports)))
    bidx = r_pop.uniform(0.0, 1.0, len(airports))
    pops = [(a, int(yr), float(np.rint(base_pop[i] * (1.01 ** k))), float(bidx[i]))
            for i, a in enumerate(airports) for k, yr in enumerate(years)]
    write_table(pd.DataFrame(pops, columns=["airport", "year", "cbsa_pop", "business_index"]),
                out / "populations.csv")
    # neighbouring airport pairs share a metropolitan city code
    city = {a: a for a in airports}
    for a, b in zip(airports[0::4], airports[1::4]):
        city[b] = a
    write_table(pd.DataFrame(sorted(city.items()), columns=["airport", "city"]), out / "city_map.csv")
    write_table(pd.DataFrame([(c, e, YearMonth.parse(s).year, YearMonth.parse(s).month) for c, e, s in dgp.mergers],
                             columns=["carrier", "entity", "year", "month"]), out / "mergers.csv")

    # On-Time departures on sampled days
    rows = []
    for r in panel[["carrier", "origin", "dest", "year", "month", "flights"]].itertuples(index=False):
        n = int(min(8, max(2, r.flights // 30)))
        for day in dgp.ontime_days:
            deps = np.sort(r_ont.integers(300, 1380, n))
            for dmin in deps:
                rows.append((f"{int(r.year):04d}-{int(r.month):02d}-{day:02d}", r.carrier, r.origin, r.dest, int(dmin)))
    write_table(pd.DataFrame(rows, columns=["date", "carrier", "origin", "dest", "dep_minutes"]),
                out / "ontime.csv")

    # fares: nonstop routes plus one-stop routes through a random airport
    pq = panel.groupby(["carrier", "origin", "dest", "year", "quarter"], sort=True)["CapacityDiscipline"].mean()
    fare_fe = {c: r_fare.normal(0.0, 0.2) for c in carriers}
    frows = []
    for (c, o, d, yr, q), cd in pq.items():
        base = 5.3 + fare_fe[c] + dgp.fare_beta * cd
        pax = int(r_fare.integers(200, 3000))
        frows.append((c, o, d, f"{o}-{d}", pax, float(np.exp(base + r_fare.normal(0, 0.05))), int(yr), int(q)))
        if r_fare.random() < dgp.p_connect:
            via = [a for a in airports if a not in (o, d)]
            x = via[int(r_fare.integers(0, len(via)))]
            frows.append((c, o, d, f"{o}-{x}-{d}", int(r_fare.integers(20, 400)),
                          float(np.exp(base - 0.1 + r_fare.normal(0, 0.05))), int(yr), int(q)))
    write_table(pd.DataFrame(frows, columns=["carrier", "origin", "dest", "route", "passengers", "avg_fare",
                                             "year", "quarter"]), out / "fares.csv")

    config = [
        "# capdisc run configuration (paths relative to this file)",
        "segments = segments.csv", "transcripts = transcripts", "status = status.csv",
        "labels = labels.csv", "coordinates = coordinates.csv", "populations = populations.csv",
        "ontime = ontime.csv", "fares = fares.csv", "city_map = city_map.csv", "mergers = mergers.csv",
        f"legacy = {','.join(pdgp.legacy)}", f"lcc = {','.join(pdgp.lcc)}",
        "alignment = shifted", "granularity = airport", "fe = carrier-market", "treatment = main",
        f"seed = {dgp.seed}", "B = 20", "threads = 1",
    ]
    (out / "config.txt").write_text("\n".join(config) + "\n", encoding="utf-8", newline="\n")
    truth = {"beta": dict(pdgp.beta), "fare_beta": dgp.fare_beta,
             "dataset": {k: v for k, v in asdict(dgp).items() if k != "panel"},
             "panel_dgp": asdict(pdgp), "rng": {"generator": RNG_NAME}}
    (out / "truth.json").write_text(json.dumps(truth, indent=2, sort_keys=True, default=list) + "\n",
                                    encoding="utf-8", newline="\n")
    return truth
