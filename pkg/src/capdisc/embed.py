"""Skip-gram word vectors with negative sampling, and cosine token screening."""

from __future__ import annotations

import struct
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numba
import numpy as np
import pandas as pd

from .panel import MarketMonthContext, capacity_discipline
from .textproc import MERGED_PHRASE_TOKEN, TranscriptRecord, TranscriptStatus, merge_phrase

MAGIC = b"CDWV"
FORMAT_VERSION = 1
DEFAULT_ANCHORS = (MERGED_PHRASE_TOKEN, "demand", "gdp")


@dataclass(frozen=True)
class TrainingConfig:
    dims: int = 300
    window: int = 5
    negatives: int = 5
    epochs: int = 5
    lr: float = 0.025
    min_count: int = 5
    sample: float = 1e-4
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.dims < 2:
            raise ValueError("dims must be at least 2")
        if self.window < 1 or self.negatives < 0 or self.epochs < 1:
            raise ValueError("window >= 1, negatives >= 0 and epochs >= 1 required")


# --------------------------------------------------------------------------- kernels


@numba.njit(cache=True)
def _sigmoid(x):
    if x > 6.0:
        return 1.0
    if x < -6.0:
        return 0.0
    return 1.0 / (1.0 + np.exp(-x))


@numba.njit(cache=True)
def _train_sentence(buf, n, W, C, neg_cdf, window, negatives, lr, neu):
    dims = W.shape[1]
    for i in range(n):
        w = buf[i]
        b = np.random.randint(0, window)
        lo = max(0, i - window + b)
        hi = min(n, i + window - b + 1)
        for j in range(lo, hi):
            if j == i:
                continue
            ctx = buf[j]
            for d in range(dims):
                neu[d] = 0.0
            for k in range(negatives + 1):
                if k == 0:
                    target = ctx
                    label = 1.0
                else:
                    target = np.searchsorted(neg_cdf, np.random.random(), side="right")
                    if target >= neg_cdf.shape[0]:
                        target = neg_cdf.shape[0] - 1
                    if target == ctx:
                        continue
                    label = 0.0
                f = 0.0
                for d in range(dims):
                    f += W[w, d] * C[target, d]
                g = (label - _sigmoid(f)) * lr
                for d in range(dims):
                    neu[d] += g * C[target, d]
                    C[target, d] += g * W[w, d]
            for d in range(dims):
                W[w, d] += neu[d]


@numba.njit(cache=True)
def _train_serial(tokens, offsets, W, C, neg_cdf, keep, window, negatives, epochs, lr0, seed):
    np.random.seed(seed)
    nsent = offsets.shape[0] - 1
    total = tokens.shape[0] * epochs
    done = 0
    buf = np.empty(tokens.shape[0], dtype=np.int64)
    neu = np.zeros(W.shape[1])
    for ep in range(epochs):
        for s in range(nsent):
            n = 0
            for p in range(offsets[s], offsets[s + 1]):
                t = tokens[p]
                if keep[t] >= 1.0 or np.random.random() < keep[t]:
                    buf[n] = t
                    n += 1
            lr = lr0 * max(1e-4, 1.0 - done / (total + 1.0))
            _train_sentence(buf, n, W, C, neg_cdf, window, negatives, lr, neu)
            done += offsets[s + 1] - offsets[s]


@numba.njit(cache=True, parallel=True)
def _train_hogwild(tokens, offsets, W, C, neg_cdf, keep, window, negatives, epochs, lr0, seed):
    # unsynchronised updates; each thread draws from numba's per-thread stream
    np.random.seed(seed)
    nsent = offsets.shape[0] - 1
    total = tokens.shape[0] * epochs
    for ep in range(epochs):
        for s in numba.prange(nsent):
            m = offsets[s + 1] - offsets[s]
            buf = np.empty(m, dtype=np.int64)
            neu = np.zeros(W.shape[1])
            n = 0
            for p in range(offsets[s], offsets[s + 1]):
                t = tokens[p]
                if keep[t] >= 1.0 or np.random.random() < keep[t]:
                    buf[n] = t
                    n += 1
            done = ep * tokens.shape[0] + offsets[s]
            lr = lr0 * max(1e-4, 1.0 - done / (total + 1.0))
            _train_sentence(buf, n, W, C, neg_cdf, window, negatives, lr, neu)


# --------------------------------------------------------------------------- model


@dataclass
class Embedding:
    """Vocabulary with one dense row per token."""

    vocabulary: list
    vectors: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.vectors = np.ascontiguousarray(self.vectors, dtype=np.float32)
        if self.vectors.shape[0] != len(self.vocabulary):
            raise ValueError("one vector per vocabulary token required")
        if self.vectors.ndim != 2 or self.vectors.shape[1] < 2:
            raise ValueError("vectors must be |V| x N with N >= 2")
        self.index = {t: i for i, t in enumerate(self.vocabulary)}
        if len(self.index) != len(self.vocabulary):
            raise ValueError("duplicate vocabulary token")

    def __contains__(self, token):
        return token in self.index

    def __getitem__(self, token) -> np.ndarray:
        return self.vectors[self.index[token]]

    @property
    def dims(self) -> int:
        return self.vectors.shape[1]

    def similarity(self, a: str, b: str) -> float:
        return cosine(self[a].astype(float), self[b].astype(float))

    def similarities(self, token: str) -> pd.Series:
        """Cosine of ``token`` with every vocabulary token."""
        V = self.vectors.astype(float)
        norms = np.linalg.norm(V, axis=1)
        v = V[self.index[token]]
        with np.errstate(invalid="ignore", divide="ignore"):
            s = V @ v / (norms * np.linalg.norm(v))
        return pd.Series(np.clip(s, -1.0, 1.0), index=self.vocabulary)

    def most_similar(self, token: str, k: int = 10) -> pd.Series:
        s = self.similarities(token).drop(token)
        return s.sort_values(ascending=False, kind="mergesort").head(k)

    def save(self, path) -> None:
        """Write the binary format: header, vocabulary block, little-endian float32 rows."""
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<III", FORMAT_VERSION, len(self.vocabulary), self.dims))
            for tok in self.vocabulary:
                b = tok.encode("utf-8")
                if len(b) > 0xFFFF:
                    raise ValueError("token too long for the vocabulary block")
                fh.write(struct.pack("<H", len(b)))
                fh.write(b)
            fh.write(self.vectors.astype("<f4").tobytes(order="C"))

    @classmethod
    def load(cls, path) -> "Embedding":
        data = Path(path).read_bytes()
        if data[:4] != MAGIC:
            raise ValueError("not an embedding file (bad magic)")
        version, nv, dims = struct.unpack_from("<III", data, 4)
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported embedding format version {version}")
        pos = 16
        vocab = []
        for _ in range(nv):
            (ln,) = struct.unpack_from("<H", data, pos)
            pos += 2
            vocab.append(data[pos:pos + ln].decode("utf-8"))
            pos += ln
        expected = nv * dims * 4
        if len(data) - pos != expected:
            raise ValueError("embedding file truncated or padded")
        mat = np.frombuffer(data, dtype="<f4", count=nv * dims, offset=pos).reshape(nv, dims)
        return cls(vocab, mat.astype(np.float32))


def cosine(u, v) -> float:
    """``u.v / (|u| |v|)``, clipped to [-1, 1].

    Raises
    ------
    ValueError
        If either vector is zero.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise ValueError("cosine undefined for a zero vector")
    return float(np.clip(u @ v / (nu * nv), -1.0, 1.0))


def build_vocabulary(corpus: Iterable[Sequence[str]], min_count: int = 5) -> tuple[list, np.ndarray]:
    """Tokens with at least ``min_count`` occurrences, by descending count then text."""
    counts = Counter(t for s in corpus for t in s)
    vocab = sorted((t for t, c in counts.items() if c >= min_count), key=lambda t: (-counts[t], t))
    return vocab, np.array([counts[t] for t in vocab], dtype=np.int64)


def train_skipgram(corpus: Sequence[Sequence[str]], config: TrainingConfig = TrainingConfig(), **overrides) -> Embedding:
    """Train skip-gram vectors with negative sampling.

    Learning rate decays linearly from ``lr`` over all epochs. Frequent tokens
    are subsampled with the usual ``sqrt(s/f) + s/f`` keep rule. With
    ``workers=1`` the result is a deterministic function of the corpus and the
    seed; with more workers updates race and results vary run to run.
    """
    if overrides:
        config = TrainingConfig(**{**config.__dict__, **overrides})
    corpus = [list(s) for s in corpus]
    if not any(corpus):
        raise ValueError("empty corpus")
    vocab, counts = build_vocabulary(corpus, config.min_count)
    if not vocab:
        raise ValueError(f"empty vocabulary after min_count={config.min_count}")
    index = {t: i for i, t in enumerate(vocab)}
    sents = [[index[t] for t in s if t in index] for s in corpus]
    sents = [s for s in sents if s]
    tokens = np.fromiter((t for s in sents for t in s), dtype=np.int64)
    offsets = np.zeros(len(sents) + 1, dtype=np.int64)
    offsets[1:] = np.cumsum([len(s) for s in sents])
    total = counts.sum()
    if config.sample > 0:
        f = counts / total
        r = config.sample / f
        keep = np.minimum(1.0, np.sqrt(r) + r)
    else:
        keep = np.ones(len(vocab))
    p = counts.astype(float) ** 0.75
    neg_cdf = np.cumsum(p / p.sum())
    neg_cdf[-1] = 1.0

    rng = np.random.default_rng(config.seed)
    W = ((rng.random((len(vocab), config.dims)) - 0.5) / config.dims).astype(np.float64)
    C = np.zeros_like(W)
    kseed = int(rng.integers(0, 2**31 - 1))
    args = (tokens, offsets, W, C, neg_cdf, keep.astype(float), config.window, config.negatives,
            config.epochs, config.lr, kseed)
    if config.workers > 1:
        prev = numba.get_num_threads()
        numba.set_num_threads(min(config.workers, numba.config.NUMBA_NUM_THREADS))
        try:
            _train_hogwild(*args)
        finally:
            numba.set_num_threads(prev)
    else:
        _train_serial(*args)
    if not np.isfinite(W).all():
        raise FloatingPointError("non-finite vectors after training")
    meta = {k: getattr(config, k) for k in ("dims", "window", "negatives", "epochs", "lr",
                                            "min_count", "sample", "seed", "workers")}
    return Embedding(vocab, W.astype(np.float32), meta)


def training_corpus(records: Iterable[TranscriptRecord]) -> list[list[str]]:
    """Sentences of every collected transcript with the phrase merged into one token."""
    out = []
    for rec in records:
        if rec.status is TranscriptStatus.COLLECTED:
            out.extend(merge_phrase(rec.sentences))
    return out


# --------------------------------------------------------------------------- screening


@dataclass(frozen=True)
class TokenScreen:
    anchors: tuple = DEFAULT_ANCHORS
    d_lo: float = 0.55
    d_hi: float = 0.95
    cooccur_min: float = 0.5
    cooccur_mode: str = "all"

    def __post_init__(self):
        object.__setattr__(self, "anchors", tuple(self.anchors))
        if not (-1 <= self.d_lo <= self.d_hi <= 1):
            raise ValueError("need -1 <= d_lo <= d_hi <= 1")
        if not 0 <= self.cooccur_min <= 1:
            raise ValueError("cooccur_min must lie in [0, 1]")
        if self.cooccur_mode not in ("all", "each"):
            raise ValueError("cooccur_mode must be 'all' or 'each'")


def report_cooccurrence(reports: Iterable[Iterable[str]], anchors: Sequence[str] = DEFAULT_ANCHORS,
                        mode: str = "all") -> pd.DataFrame:
    """Per token, the share of reports containing it that also contain the anchors.

    A report is one carrier-quarter transcript, given as its tokens. In
    ``all`` mode a report counts when every anchor is present; in ``each``
    mode the column is the smallest per-anchor share.
    """
    anchors = list(anchors)
    n_tok = Counter()
    with_all = Counter()
    with_each = {a: Counter() for a in anchors}
    for rep in reports:
        toks = set(rep)
        n_tok.update(toks)
        present = [a in toks for a in anchors]
        if all(present):
            with_all.update(toks)
        for a, p in zip(anchors, present):
            if p:
                with_each[a].update(toks)
    tokens = sorted(n_tok)
    n = np.array([n_tok[t] for t in tokens], dtype=float)
    if mode == "all":
        share = np.array([with_all[t] for t in tokens]) / n
    elif mode == "each":
        share = np.min([[with_each[a][t] for t in tokens] for a in anchors], axis=0) / n if anchors else np.ones_like(n)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return pd.DataFrame({"n_reports": n.astype(int), "share": share}, index=pd.Index(tokens, name="token"))


def screen_tokens(emb: Embedding, screen: TokenScreen = TokenScreen(),
                  cooccurrence: Optional[pd.DataFrame] = None) -> list:
    """Tokens whose cosine with every anchor lies in ``[d_lo, d_hi]`` and whose
    report co-occurrence share is at least ``cooccur_min``, ordered by mean
    anchor similarity (descending, ties by token)."""
    missing = [a for a in screen.anchors if a not in emb]
    if missing:
        raise KeyError(f"anchors missing from vocabulary: {missing}")
    sims = pd.DataFrame({a: emb.similarities(a) for a in screen.anchors})
    sims = sims.drop(index=list(screen.anchors))
    ok = ((sims >= screen.d_lo) & (sims <= screen.d_hi)).all(axis=1)
    if cooccurrence is not None:
        share = cooccurrence["share"].reindex(sims.index).fillna(0.0)
        ok &= share >= screen.cooccur_min
    picked = sims.loc[ok].mean(axis=1)
    order = sorted(picked.index, key=lambda t: (-picked[t], t))
    return order


# --------------------------------------------------------------------------- Z variables


def token_flags(records: Iterable[TranscriptRecord], token: str) -> pd.DataFrame:
    """Per carrier-quarter flag for whether the (merged) token occurs in the transcript."""
    rows = []
    for rec in records:
        used = 0
        if rec.status is TranscriptStatus.COLLECTED:
            used = int(any(token in s for s in merge_phrase(rec.sentences)))
        rows.append((rec.carrier, rec.year_quarter.year, rec.year_quarter.quarter, rec.status.value, used))
    return pd.DataFrame(rows, columns=["carrier", "year", "quarter", "status", "flag"])


def z_panel_variable(ctx: MarketMonthContext, uses: Mapping[str, int]) -> int:
    """1 iff the market is talk-eligible and every serving legacy used the token."""
    alt = MarketMonthContext(ctx.market, ctx.year_month, ctx.serving, dict(uses), ctx.reports)
    return capacity_discipline(alt)
