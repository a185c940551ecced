"""Myers diff over generic sequences, plus the text-diff operations built on it:
modified-sentence-pair extraction, character/token span diffs, and the merged
marked-up rendering used as classifier input.

Markup syntax is a frozen contract: deleted token runs are wrapped ``~~...~~``,
inserted runs ``__...__``. Spacing in the merged string follows the new
sentence for equal/inserted regions; deleted runs get single surrounding
spaces.
"""

from __future__ import annotations

import operator
import re
from dataclasses import dataclass, field
from datetime import date
from typing import Callable, Sequence

from .corpus import ArticleVersionPair
from .errors import ConfigError
from .textproc import Sentence, TokenizerFn, split_sentences, tokenize

EQUAL = "equal"
DELETE = "delete"
INSERT = "insert"

_INSERT_SEG_RE = re.compile(r"__(.*?)__", re.DOTALL)
_DELETE_SEG_RE = re.compile(r"~~(.*?)~~", re.DOTALL)


@dataclass(frozen=True)
class DiffOp:
    """A contiguous run of one edit kind. Replaying equal+delete runs consumes
    the old sequence; equal+insert runs produce the new one."""

    kind: str
    items: tuple

    def __len__(self) -> int:
        return len(self.items)


@dataclass(frozen=True)
class DiffSpan:
    """An aligned span over element indices of both sequences.

    Ranges are [start, end) and jointly partition both sequences; deletes have
    an empty new range, inserts an empty old range.
    """

    kind: str
    old_range: tuple[int, int]
    new_range: tuple[int, int]

    def to_dict(self) -> dict:
        return {"kind": self.kind, "old": list(self.old_range), "new": list(self.new_range)}

    @classmethod
    def from_dict(cls, obj: dict) -> "DiffSpan":
        return cls(kind=obj["kind"], old_range=tuple(obj["old"]), new_range=tuple(obj["new"]))


@dataclass
class SentencePair:
    """A candidate factual change: one modified sentence across two snapshots.

    Carries the article identity and both snapshot dates so downstream QA
    records can be built without re-reading the corpora.
    """

    article_id: str
    title: str
    old_date: date
    new_date: date
    old_sentence: Sentence
    new_sentence: Sentence
    old_context: str
    new_context: str
    token_spans: list[DiffSpan] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "article_id": self.article_id,
            "title": self.title,
            "old_date": self.old_date.isoformat(),
            "new_date": self.new_date.isoformat(),
            "old_sentence": _sentence_to_dict(self.old_sentence),
            "new_sentence": _sentence_to_dict(self.new_sentence),
            "old_context": self.old_context,
            "new_context": self.new_context,
            "token_spans": [s.to_dict() for s in self.token_spans],
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "SentencePair":
        return cls(
            article_id=obj["article_id"],
            title=obj["title"],
            old_date=date.fromisoformat(obj["old_date"]),
            new_date=date.fromisoformat(obj["new_date"]),
            old_sentence=_sentence_from_dict(obj["old_sentence"]),
            new_sentence=_sentence_from_dict(obj["new_sentence"]),
            old_context=obj["old_context"],
            new_context=obj["new_context"],
            token_spans=[DiffSpan.from_dict(s) for s in obj["token_spans"]],
        )


@dataclass(frozen=True)
class RenderedDiff:
    """Both sentences merged into one marked-up string."""

    markup: str


def _sentence_to_dict(s: Sentence) -> dict:
    return {"text": s.text, "index": s.index, "char_offset": s.char_offset}


def _sentence_from_dict(obj: dict) -> Sentence:
    return Sentence(text=obj["text"], index=obj["index"], char_offset=obj["char_offset"])


def diff_sequences(
    a: Sequence, b: Sequence, eq: Callable[[object, object], bool] = operator.eq
) -> list[DiffOp]:
    """Myers' greedy O((N+M)*D) diff: a minimal insert/delete edit script.

    Equal runs carry the old-side elements; with the default equality that is
    enough to reconstruct either sequence exactly.
    """
    steps = _myers_steps(a, b, eq)
    ops: list[DiffOp] = []
    run_kind: str | None = None
    run_items: list = []
    for kind, item in steps:
        if kind != run_kind:
            if run_kind is not None:
                ops.append(DiffOp(run_kind, tuple(run_items)))
            run_kind = kind
            run_items = []
        run_items.append(item)
    if run_kind is not None:
        ops.append(DiffOp(run_kind, tuple(run_items)))
    return ops


def _myers_steps(a: Sequence, b: Sequence, eq) -> list[tuple[str, object]]:
    n, m = len(a), len(b)
    if n == 0 and m == 0:
        return []
    # Forward pass: furthest-reaching x per diagonal k, one snapshot per d.
    v: dict[int, int] = {1: 0}
    trace: list[dict[int, int]] = []
    final_d = -1
    for d in range(n + m + 1):
        trace.append(dict(v))
        for k in range(-d, d + 1, 2):
            if k == -d or (k != d and v.get(k - 1, 0) < v.get(k + 1, 0)):
                x = v.get(k + 1, 0)
            else:
                x = v.get(k - 1, 0) + 1
            y = x - k
            while x < n and y < m and eq(a[x], b[y]):
                x += 1
                y += 1
            v[k] = x
            if x >= n and y >= m:
                final_d = d
                break
        if final_d >= 0:
            break
    # Backtrack through the snapshots to recover the edit path.
    steps: list[tuple[str, object]] = []
    x, y = n, m
    for d in range(final_d, -1, -1):
        vd = trace[d]
        k = x - y
        if k == -d or (k != d and vd.get(k - 1, 0) < vd.get(k + 1, 0)):
            prev_k = k + 1
        else:
            prev_k = k - 1
        prev_x = vd.get(prev_k, 0)
        prev_y = prev_x - prev_k
        while x > prev_x and y > prev_y:
            steps.append((EQUAL, a[x - 1]))
            x -= 1
            y -= 1
        if d > 0:
            if x == prev_x:
                steps.append((INSERT, b[prev_y]))
            else:
                steps.append((DELETE, a[prev_x]))
        x, y = prev_x, prev_y
    steps.reverse()
    return steps


def span_diff(
    old: str,
    new: str,
    granularity: str = "token",
    tokenizer: str | TokenizerFn = "default",
) -> list[DiffSpan]:
    """Myers diff at character or token granularity, as index spans.

    Adjacent spans of the same kind are coalesced; span ranges partition both
    strings' element sequences.
    """
    if granularity == "char":
        ops = diff_sequences(old, new)
    elif granularity == "token":
        old_texts = [t.text for t in tokenize(old, tokenizer)]
        new_texts = [t.text for t in tokenize(new, tokenizer)]
        ops = diff_sequences(old_texts, new_texts)
    else:
        raise ConfigError(f"granularity must be 'char' or 'token', got {granularity!r}")
    spans: list[DiffSpan] = []
    i = j = 0
    for op in ops:
        n = len(op)
        if op.kind == EQUAL:
            spans.append(DiffSpan(EQUAL, (i, i + n), (j, j + n)))
            i += n
            j += n
        elif op.kind == DELETE:
            spans.append(DiffSpan(DELETE, (i, i + n), (j, j)))
            i += n
        else:
            spans.append(DiffSpan(INSERT, (i, i), (j, j + n)))
            j += n
    return coalesce_spans(spans)


def coalesce_spans(spans: list[DiffSpan]) -> list[DiffSpan]:
    """Merge adjacent same-kind spans. Mandatory before rendering so the
    screening input is stable."""
    merged: list[DiffSpan] = []
    for span in spans:
        if merged and merged[-1].kind == span.kind:
            prev = merged[-1]
            merged[-1] = DiffSpan(
                span.kind,
                (prev.old_range[0], span.old_range[1]),
                (prev.new_range[0], span.new_range[1]),
            )
        else:
            merged.append(span)
    return merged


def extract_modified_pairs(
    pair: ArticleVersionPair,
    tokenizer: str | TokenizerFn = "default",
    context_radius: int = 2,
) -> list[SentencePair]:
    """Diff the two article versions as sentence sequences and pair up the
    modified sentences.

    Within each hunk of adjacent deletions and insertions, the i-th deleted
    sentence is paired with the i-th inserted one; surplus sentences are pure
    adds/deletes and are not emitted. Each pair carries +-context_radius
    surrounding sentences from its own article version.
    """
    old_sents = split_sentences(pair.old.text)
    new_sents = split_sentences(pair.new.text)
    ops = diff_sequences([s.text for s in old_sents], [s.text for s in new_sents])

    pairs: list[SentencePair] = []
    hunk_old: list[int] = []
    hunk_new: list[int] = []

    def flush_hunk() -> None:
        for oi, nj in zip(hunk_old, hunk_new):
            old_s, new_s = old_sents[oi], new_sents[nj]
            if old_s.text == new_s.text:
                # A minimal script never pairs equal sentences; guard anyway.
                continue
            pairs.append(
                SentencePair(
                    article_id=pair.article_id,
                    title=pair.title,
                    old_date=pair.old.snapshot_date,
                    new_date=pair.new.snapshot_date,
                    old_sentence=old_s,
                    new_sentence=new_s,
                    old_context=_context(old_sents, oi, context_radius),
                    new_context=_context(new_sents, nj, context_radius),
                    token_spans=span_diff(old_s.text, new_s.text, "token", tokenizer),
                )
            )
        hunk_old.clear()
        hunk_new.clear()

    i = j = 0
    for op in ops:
        n = len(op)
        if op.kind == EQUAL:
            flush_hunk()
            i += n
            j += n
        elif op.kind == DELETE:
            hunk_old.extend(range(i, i + n))
            i += n
        else:
            hunk_new.extend(range(j, j + n))
            j += n
    flush_hunk()
    return pairs


def _context(sentences: list[Sentence], idx: int, radius: int) -> str:
    lo = max(0, idx - radius)
    return " ".join(s.text for s in sentences[lo : idx + radius + 1])


def render_markup(
    old_text: str,
    new_text: str,
    spans: list[DiffSpan],
    tokenizer: str | TokenizerFn = "default",
) -> RenderedDiff:
    """Merge both strings into one, marking deleted and inserted token runs."""
    old_toks = tokenize(old_text, tokenizer)
    new_toks = tokenize(new_text, tokenizer)
    parts: list[str] = []
    prev_side: str | None = None
    prev_new_end = 0
    for span in coalesce_spans(spans):
        if span.kind == DELETE:
            toks = old_toks[span.old_range[0] : span.old_range[1]]
            if not toks:
                continue
            chunk = old_text[toks[0].char_span[0] : toks[-1].char_span[1]]
            if parts:
                parts.append(" ")
            parts.append(f"~~{chunk}~~")
            prev_side = "old"
        else:
            toks = new_toks[span.new_range[0] : span.new_range[1]]
            if not toks:
                continue
            chunk = new_text[toks[0].char_span[0] : toks[-1].char_span[1]]
            if span.kind == INSERT:
                chunk = f"__{chunk}__"
            if prev_side == "new":
                parts.append(new_text[prev_new_end : toks[0].char_span[0]])
            elif prev_side == "old":
                parts.append(" ")
            parts.append(chunk)
            prev_side = "new"
            prev_new_end = toks[-1].char_span[1]
    return RenderedDiff(markup="".join(parts))


def render_marked_diff(
    pair: SentencePair, tokenizer: str | TokenizerFn = "default"
) -> RenderedDiff:
    """Render a sentence pair using its precomputed token spans."""
    return render_markup(
        pair.old_sentence.text, pair.new_sentence.text, pair.token_spans, tokenizer
    )


def deleted_fragments(markup: str) -> list[str]:
    """The contents of every ``~~...~~`` run, in order."""
    return _DELETE_SEG_RE.findall(markup)


def inserted_fragments(markup: str) -> list[str]:
    """The contents of every ``__...__`` run, in order."""
    return _INSERT_SEG_RE.findall(markup)


def strip_insertions(markup: str) -> str:
    """Drop inserted segments and unwrap deletions: the old-side text,
    up to the declared spacing policy."""
    text = _INSERT_SEG_RE.sub("", markup)
    text = _DELETE_SEG_RE.sub(r"\1", text)
    return re.sub(r"\s+", " ", text).strip()


def strip_deletions(markup: str) -> str:
    """Drop deleted segments and unwrap insertions: the new-side text,
    up to the declared spacing policy."""
    text = _DELETE_SEG_RE.sub("", markup)
    text = _INSERT_SEG_RE.sub(r"\1", text)
    return re.sub(r"\s+", " ", text).strip()
