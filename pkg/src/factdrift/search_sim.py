"""Versioned retrieval simulator: sentence-respecting passage splitting, a
BM25 inverted index in which historical document versions are first-class
entries, a Gaussian age decay on scores, and binary hit-rate metrics.

Scoring: ``score = bm25`` with decay off, ``bm25 * decay`` with decay on,
where ``decay = exp(ln(decay_at_scale) * (age / scale)^2)`` and age is days
since the version date beyond the grace offset. Ties are broken toward the
newer version, then doc id, then passage position.
"""

from __future__ import annotations

import logging
import math
import re
import sys
from dataclasses import dataclass, field
from datetime import date
from typing import Iterable, Mapping, Sequence

from .corpus import ArticleSnapshot
from .errors import ConfigError, DataError
from .textproc import TokenizerFn, split_sentences, tokenize

logger = logging.getLogger(__name__)

DEFAULT_PASSAGE_TOKENS = 256  # c_s
DEFAULT_OVERLAP_TOKENS = 32  # c_o
DEFAULT_K1 = 1.2
DEFAULT_B = 0.75

_WORD_RE = re.compile(r"\w+", re.UNICODE)

# (doc_id, version_date ISO string, passage_index)
PassageKey = tuple[str, str, int]


@dataclass(frozen=True)
class Passage:
    doc_id: str
    version_date: date
    article_title: str
    text: str
    token_count: int
    passage_index: int

    @property
    def key(self) -> PassageKey:
        return (self.doc_id, self.version_date.isoformat(), self.passage_index)

    def to_dict(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "version_date": self.version_date.isoformat(),
            "article_title": self.article_title,
            "text": self.text,
            "token_count": self.token_count,
            "passage_index": self.passage_index,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "Passage":
        return cls(
            doc_id=obj["doc_id"],
            version_date=date.fromisoformat(obj["version_date"]),
            article_title=obj["article_title"],
            text=obj["text"],
            token_count=obj["token_count"],
            passage_index=obj["passage_index"],
        )


@dataclass(frozen=True)
class DecayParams:
    """Gaussian decay configuration. Durations are in days; the multiplier is
    exactly 1 for ages within ``offset_days`` of the origin."""

    origin: date
    scale_days: float = 365.0
    decay_at_scale: float = 0.5
    offset_days: float = 0.0

    def __post_init__(self) -> None:
        if self.scale_days <= 0:
            raise ConfigError(f"scale_days must be positive, got {self.scale_days}")
        if not 0.0 < self.decay_at_scale < 1.0:
            raise ConfigError(
                f"decay_at_scale must be in (0, 1), got {self.decay_at_scale}"
            )
        if self.offset_days < 0:
            raise ConfigError(f"offset_days must be >= 0, got {self.offset_days}")


@dataclass(frozen=True)
class RetrievalResult:
    passage: Passage
    bm25: float
    decay: float
    score: float

    def to_dict(self) -> dict:
        return {
            "passage": self.passage.to_dict(),
            "bm25": self.bm25,
            "decay": self.decay,
            "score": self.score,
        }


def text_terms(text: str, tokenizer: str | TokenizerFn = "default") -> list[str]:
    """Casefolded word tokens; punctuation tokens are not index terms."""
    return [
        t.text.casefold()
        for t in tokenize(text, tokenizer)
        if _WORD_RE.fullmatch(t.text)
    ]


def split_passages(
    version: ArticleSnapshot,
    c_s: int = DEFAULT_PASSAGE_TOKENS,
    c_o: int = DEFAULT_OVERLAP_TOKENS,
    tokenizer: str | TokenizerFn = "default",
) -> list[Passage]:
    """Greedy whole-sentence packing into passages of at most ``c_s`` tokens,
    with consecutive passages re-including up to ``c_o`` tokens of trailing
    sentences. A single over-long sentence becomes its own passage."""
    if c_o >= c_s:
        raise ConfigError(f"overlap c_o={c_o} must be smaller than c_s={c_s}")
    sentences = split_sentences(version.text)
    if not sentences:
        return []
    counts = [len(tokenize(s.text, tokenizer)) for s in sentences]
    n = len(sentences)
    passages: list[Passage] = []
    start = 0
    while start < n:
        end = start
        total = 0
        while end < n and (end == start or total + counts[end] <= c_s):
            total += counts[end]
            end += 1
        if total > c_s:
            # Single sentence exceeding c_s: integrity exception.
            logger.warning(
                "passage %s/%s: sentence of %d tokens exceeds c_s=%d",
                version.article_id,
                version.snapshot_date,
                total,
                c_s,
            )
        text = version.text[sentences[start].char_offset : sentences[end - 1].char_end]
        passages.append(
            Passage(
                doc_id=version.article_id,
                version_date=version.snapshot_date,
                article_title=version.title,
                text=text,
                token_count=total,
                passage_index=len(passages),
            )
        )
        if end >= n:
            break
        # Walk back whole trailing sentences while they fit in the overlap.
        overlap_tokens = 0
        back = 0
        while end - 1 - back > start and overlap_tokens + counts[end - 1 - back] <= c_o:
            overlap_tokens += counts[end - 1 - back]
            back += 1
        start = end - back
    return passages


@dataclass
class SearchIndex:
    """Immutable-after-build inverted index over dated passages."""

    k1: float = DEFAULT_K1
    b: float = DEFAULT_B
    postings: dict[str, dict[PassageKey, int]] = field(default_factory=dict)
    doc_terms: dict[PassageKey, int] = field(default_factory=dict)
    passages: dict[PassageKey, Passage] = field(default_factory=dict)

    @property
    def size(self) -> int:
        return len(self.passages)

    @property
    def avg_len(self) -> float:
        if not self.doc_terms:
            return 0.0
        return sum(self.doc_terms.values()) / len(self.doc_terms)

    def idf(self, term: str) -> float:
        df = len(self.postings.get(term, ()))
        return math.log(1.0 + (self.size - df + 0.5) / (df + 0.5))

    def bm25(self, query_terms: Sequence[str], key: PassageKey) -> float:
        """Sum over the query terms as given (repeated terms count again)."""
        dl = self.doc_terms[key]
        avg = self.avg_len
        score = 0.0
        for term in query_terms:
            tf = self.postings.get(term, {}).get(key, 0)
            if tf == 0:
                continue
            norm = tf + self.k1 * (1.0 - self.b + self.b * dl / avg)
            score += self.idf(term) * (tf * (self.k1 + 1.0)) / norm
        return score

    def to_dict(self) -> dict:
        return {
            "k1": self.k1,
            "b": self.b,
            "passages": [p.to_dict() for p in self.passages.values()],
            "postings": {
                term: [[k[0], k[1], k[2], tf] for k, tf in sorted(entries.items())]
                for term, entries in sorted(self.postings.items())
            },
            "doc_terms": [[k[0], k[1], k[2], v] for k, v in sorted(self.doc_terms.items())],
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "SearchIndex":
        index = cls(k1=obj["k1"], b=obj["b"])
        for pd in obj["passages"]:
            passage = Passage.from_dict(pd)
            index.passages[passage.key] = passage
        for term, entries in obj["postings"].items():
            index.postings[term] = {
                (doc_id, day, idx): tf for doc_id, day, idx, tf in entries
            }
        index.doc_terms = {
            (doc_id, day, idx): v for doc_id, day, idx, v in obj["doc_terms"]
        }
        return index


def build_index(
    passages: Iterable[Passage],
    k1: float = DEFAULT_K1,
    b: float = DEFAULT_B,
    tokenizer: str | TokenizerFn = "default",
) -> SearchIndex:
    """Index current and historical passages alike; versions are distinct
    documents keyed by (doc_id, version_date, passage_index)."""
    index = SearchIndex(k1=k1, b=b)
    for passage in passages:
        key = passage.key
        if key in index.passages:
            raise DataError(f"duplicate passage key {key}")
        index.passages[key] = passage
        terms = text_terms(passage.text, tokenizer)
        index.doc_terms[key] = len(terms)
        for term in terms:
            index.postings.setdefault(term, {})
            index.postings[term][key] = index.postings[term].get(key, 0) + 1
    return index


def gaussian_decay(version_date: date, params: DecayParams) -> float:
    """Multiplier in (0, 1]: 1 at ages up to the offset, ``decay_at_scale`` at
    offset + scale, strictly decreasing beyond the offset.

    Floored at the smallest normal float so the multiplier stays positive
    even at ages extreme enough to underflow the exponential (tens of
    scale-lengths); past that point ties fall back to the date tie-break.
    """
    if version_date > params.origin:
        raise DataError(
            f"version date {version_date} is after the origin {params.origin}"
        )
    age = (params.origin - version_date).days
    effective = max(0.0, age - params.offset_days)
    if effective == 0.0:
        return 1.0
    value = math.exp(
        math.log(params.decay_at_scale) * (effective / params.scale_days) ** 2
    )
    return max(value, sys.float_info.min)


def search(
    index: SearchIndex,
    query: str,
    k: int,
    decay_on: bool = False,
    params: DecayParams | None = None,
    tokenizer: str | TokenizerFn = "default",
) -> list[RetrievalResult]:
    """Top-k passages by final score, descending; fully deterministic."""
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    if decay_on and params is None:
        raise ConfigError("decay_on requires DecayParams")
    query_terms = text_terms(query, tokenizer)
    candidates: set[PassageKey] = set()
    for term in set(query_terms):
        candidates.update(index.postings.get(term, ()))
    results = []
    for key in candidates:
        passage = index.passages[key]
        raw = index.bm25(query_terms, key)
        if raw <= 0.0:
            continue
        decay = gaussian_decay(passage.version_date, params) if decay_on else 1.0
        results.append(
            RetrievalResult(passage=passage, bm25=raw, decay=decay, score=raw * decay)
        )
    results.sort(
        key=lambda r: (
            -r.score,
            -r.passage.version_date.toordinal(),
            r.passage.doc_id,
            r.passage.passage_index,
        )
    )
    return results[:k]


def result_keys(results: Sequence[RetrievalResult]) -> list[PassageKey]:
    return [r.passage.key for r in results]


def hit_rate_at_k(
    run: Mapping[str, Sequence[PassageKey]],
    targets: Mapping[str, set[PassageKey]],
    k: int,
) -> float:
    """Mean binary hit rate: per query, 1 when any of the top-k ranked keys is
    in that query's target set. Queries with no results or no targets score 0."""
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    if not run:
        return 0.0
    hits = 0
    for query_id, ranked in run.items():
        target = targets.get(query_id, set())
        if any(key in target for key in list(ranked)[:k]):
            hits += 1
    return hits / len(run)


def hit_rate_table(
    run: Mapping[str, Sequence[PassageKey]],
    targets: Mapping[str, set[PassageKey]],
    ks: Sequence[int] = (5, 10, 20, 50),
) -> dict[int, float]:
    return {k: hit_rate_at_k(run, targets, k) for k in ks}
