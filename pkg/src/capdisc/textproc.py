"""Earnings-call transcripts to per-carrier-quarter communication flags.

Pipeline: keep management speech only, split into sentences, tokenize,
drop stop words, lemmatize with the shipped suffix-rule table, then code each
transcript on the adjacent-lemma phrase ``capacity discipline``. Transcripts
that only show ``capacity`` together with ``demand`` or ``gdp`` are routed to a
review queue unless a label override decides them.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Iterable, Mapping, Optional, Sequence

from .core import YearQuarter

RULES_FILE = "lemma_rules_v1.tsv"
STOPWORDS_FILE = "stopwords_en.txt"
PHRASE = ("capacity", "discipline")
MERGED_PHRASE_TOKEN = "capacity_discipline"

_TAG_RE = re.compile(r"<<SPEAKER:([A-Za-z_]+)>>")
_SENT_RE = re.compile(r"[.?!]+")
_WORD_RE = re.compile(r"[a-z]+(?:'[a-z]+)*")
_VOWEL_RE = re.compile(r"[aeiouy]")
ROLES = ("management", "analyst", "operator")


class TranscriptStatus(str, enum.Enum):
    COLLECTED = "Collected"
    BANKRUPTCY = "Bankruptcy"
    MERGER = "Merger"
    PRIVATE = "Private"
    OTHER = "Other"


class LabelSource(str, enum.Enum):
    AUTHORS = "Authors"
    RA = "RA"
    AUTOMATIC = "Automatic"


DEFAULT_PRIORITY = (LabelSource.AUTHORS, LabelSource.RA, LabelSource.AUTOMATIC)


# --------------------------------------------------------------------------- speakers


def management_spans(raw: str) -> list[tuple[int, int]]:
    """Character spans of management speech in speaker-tagged text.

    Text before the first tag carries no speaker and is kept.
    """
    spans = []
    pos, role = 0, "management"
    for m in _TAG_RE.finditer(raw):
        if role == "management" and m.start() > pos:
            spans.append((pos, m.start()))
        role = m.group(1).lower()
        if role not in ROLES:
            raise ValueError(f"unknown speaker role {m.group(1)!r} at offset {m.start()}")
        pos = m.end()
    if role == "management" and len(raw) > pos:
        spans.append((pos, len(raw)))
    return spans


def strip_nonmanagement(raw: str) -> str:
    parts = [raw[a:b].strip() for a, b in management_spans(raw)]
    return "\n".join(p for p in parts if p)


# --------------------------------------------------------------------------- lemmatizer


@dataclass(frozen=True)
class _InflectionRule:
    suffix: str
    replacement: str
    min_stem: int
    keep: bool
    needs_vowel: bool
    finish: bool
    not_after: str


class Lemmatizer:
    """Suffix-rule lemmatizer driven by a versioned rule table.

    Rules are applied repeatedly until the word stops changing, so the
    lemmatizer is idempotent on its own output.
    """

    def __init__(self, table: str):
        self.inflection: list[_InflectionRule] = []
        self.finish: list[tuple[re.Pattern, str]] = []
        self.exceptions: dict[str, str] = {}
        section = None
        for lineno, line in enumerate(table.splitlines(), 1):
            if not line.strip() or line.startswith("#"):
                continue
            if line.startswith("["):
                section = line.strip()[1:-1]
                continue
            cols = line.split("\t")
            if section == "inflection":
                flags = cols[3] if len(cols) > 3 else ""
                not_after = ""
                if "!" in flags:
                    flags, not_after = flags.split("!", 1)
                self.inflection.append(_InflectionRule(
                    cols[0], cols[1], int(cols[2]), "k" in flags, "v" in flags, "f" in flags, not_after))
            elif section == "finish":
                self.finish.append((re.compile(cols[0]), cols[1]))
            elif section == "exceptions":
                self.exceptions[cols[0]] = cols[1]
            else:
                raise ValueError(f"rule table line {lineno} outside a section")

    def _step(self, word: str) -> str:
        if word in self.exceptions:
            return self.exceptions[word]
        for r in self.inflection:
            if not word.endswith(r.suffix):
                continue
            stem = word[: len(word) - len(r.suffix)]
            if r.keep:
                return word
            if len(stem) < r.min_stem:
                continue
            if r.not_after and stem[-1] in r.not_after:
                continue
            if r.needs_vowel and not _VOWEL_RE.search(stem):
                continue
            if r.finish:
                for pat, rep in self.finish:
                    new, n = pat.subn(rep, stem, count=1)
                    if n:
                        return new
                return stem
            return stem + r.replacement
        return word

    def __call__(self, word: str) -> str:
        seen = set()
        while word not in seen:
            seen.add(word)
            nxt = self._step(word)
            if nxt == word:
                break
            word = nxt
        return word


@lru_cache(maxsize=None)
def default_lemmatizer() -> Lemmatizer:
    return Lemmatizer(resources.files("capdisc.data").joinpath(RULES_FILE).read_text("utf-8"))


@lru_cache(maxsize=None)
def default_stopwords() -> frozenset[str]:
    text = resources.files("capdisc.data").joinpath(STOPWORDS_FILE).read_text("utf-8")
    return frozenset(w.strip() for w in text.splitlines() if w.strip() and not w.startswith("#"))


def _words(text: str) -> list[str]:
    out = []
    for w in _WORD_RE.findall(text.lower()):
        if w.endswith("'s"):
            w = w[:-2]
        if w:
            out.append(w)
    return out


def tokenize_sentences(text: str, stopwords=None, lemmatizer=None) -> list[list[str]]:
    """Lemma sequences per sentence (split on ``.``, ``?`` and ``!``)."""
    stopwords = default_stopwords() if stopwords is None else stopwords
    lemmatizer = lemmatizer or default_lemmatizer()
    sentences = []
    for chunk in _SENT_RE.split(text):
        lemmas = [lemmatizer(w) for w in _words(chunk) if w not in stopwords]
        lemmas = [w for w in lemmas if w not in stopwords]
        if lemmas:
            sentences.append(lemmas)
    return sentences


def tokenize_lemmatize(text: str, stopwords=None, lemmatizer=None) -> list[str]:
    return [w for s in tokenize_sentences(text, stopwords, lemmatizer) for w in s]


# --------------------------------------------------------------------------- flags


def flag_phrase(tokens: Sequence[str], phrase: Sequence[str] = PHRASE) -> int:
    """1 if ``phrase`` occurs as a run of adjacent lemmas in ``tokens``."""
    k = len(phrase)
    if k == 0:
        raise ValueError("empty phrase")
    phrase = list(phrase)
    first = phrase[0]
    for i in range(len(tokens) - k + 1):
        if tokens[i] == first and list(tokens[i:i + k]) == phrase:
            return 1
    return 0


def flag_phrase_sentences(sentences: Iterable[Sequence[str]], phrase: Sequence[str] = PHRASE) -> int:
    return int(any(flag_phrase(s, phrase) for s in sentences))


def cooccurrence_flag(tokens: Iterable[str]) -> int:
    toks = set(tokens)
    return int("capacity" in toks and ("demand" in toks or "gdp" in toks))


def merge_phrase(sentences: Iterable[Sequence[str]], phrase: Sequence[str] = PHRASE,
                 token: str = MERGED_PHRASE_TOKEN) -> list[list[str]]:
    """Replace each occurrence of ``phrase`` by the single token ``token``."""
    k = len(phrase)
    phrase = list(phrase)
    out = []
    for s in sentences:
        s = list(s)
        merged, i = [], 0
        while i < len(s):
            if s[i:i + k] == phrase:
                merged.append(token)
                i += k
            else:
                merged.append(s[i])
                i += 1
        out.append(merged)
    return out


# --------------------------------------------------------------------------- records


@dataclass(frozen=True)
class LabelOverride:
    carrier: str
    year_quarter: YearQuarter
    label: int
    source: LabelSource

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label}")


@dataclass
class TranscriptRecord:
    carrier: str
    year_quarter: YearQuarter
    status: TranscriptStatus = TranscriptStatus.COLLECTED
    raw_text: str = ""
    sentences: list[list[str]] = field(default_factory=list)
    coded_flag: int = 0

    def __post_init__(self):
        self.status = TranscriptStatus(self.status)
        if self.status is not TranscriptStatus.COLLECTED:
            self.raw_text = ""
            self.sentences = []
            self.coded_flag = 0

    @property
    def tokens(self) -> list[str]:
        return [w for s in self.sentences for w in s]

    def tokenize(self) -> "TranscriptRecord":
        if self.status is TranscriptStatus.COLLECTED:
            self.sentences = tokenize_sentences(strip_nonmanagement(self.raw_text))
        return self


@dataclass(frozen=True)
class CodingResult:
    flag: int
    reason: str


def index_overrides(overrides: Iterable[LabelOverride]) -> dict:
    idx = {}
    for o in overrides:
        key = (o.carrier, o.year_quarter, LabelSource(o.source))
        if key in idx:
            raise ValueError(f"duplicate override for {o.carrier} {o.year_quarter} {o.source}")
        idx[key] = o.label
    return idx


def code_transcript(rec: TranscriptRecord, overrides=(), priority: Sequence = DEFAULT_PRIORITY) -> CodingResult:
    """Carrier-level capacity-discipline flag for one transcript.

    Reason codes: ``status:<Status>``, ``override:<Source>``, ``phrase``,
    ``review`` (co-occurrence only, awaiting a label) and ``none``.
    """
    if rec.status is not TranscriptStatus.COLLECTED:
        return CodingResult(0, f"status:{rec.status.value}")
    idx = overrides if isinstance(overrides, Mapping) else index_overrides(overrides)
    for src in priority:
        key = (rec.carrier, rec.year_quarter, LabelSource(src))
        if key in idx:
            return CodingResult(int(idx[key]), f"override:{LabelSource(src).value}")
    if flag_phrase_sentences(rec.sentences):
        return CodingResult(1, "phrase")
    if cooccurrence_flag(rec.tokens):
        return CodingResult(0, "review")
    return CodingResult(0, "none")


def code_corpus(records: Iterable[TranscriptRecord], overrides=(), priority=DEFAULT_PRIORITY):
    """Code every record; returns ``(results, review_queue)``.

    ``results`` maps ``(carrier, year_quarter)`` to a :class:`CodingResult`;
    ``review_queue`` lists the keys with reason ``review`` in input order.
    """
    idx = overrides if isinstance(overrides, Mapping) else index_overrides(overrides)
    results, queue = {}, []
    for rec in records:
        res = code_transcript(rec, idx, priority)
        rec.coded_flag = res.flag
        results[(rec.carrier, rec.year_quarter)] = res
        if res.reason == "review":
            queue.append((rec.carrier, rec.year_quarter))
    return results, queue
