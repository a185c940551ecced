"""Heuristic rejection of sentence pairs that are apparently not factual
changes: pronoun substitutions, spelling-level edits, statistically frequent
boilerplate replacements, and pairs whose edits are solely additions or
deletions.

A pair is dropped only when every one of its changes is explained by at least
one rule; anything with a single unexplained change survives.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .diffcore import EQUAL, SentencePair
from .errors import ConfigError
from .textproc import tokenize

RULE_PRONOUN = "pronoun"
RULE_SPELLING = "spelling"
RULE_FREQUENT = "frequent"
RULE_PURE_ADD_DELETE = "pure_add_delete"

DEFAULT_FREQUENCY_THRESHOLD = 50

_WS_RE = re.compile(r"\s+")


def _load_pronouns(path: str | Path | None = None) -> frozenset[str]:
    if path is None:
        data = (resources.files("factdrift").joinpath("data/pronouns.txt")).read_text(
            encoding="utf-8"
        )
    else:
        data = Path(path).read_text(encoding="utf-8")
    words = set()
    for line in data.splitlines():
        w = line.strip()
        if w and not w.startswith("#"):
            words.add(w.casefold())
    return frozenset(words)


PRONOUNS = _load_pronouns()


def edit_distance(a: str, b: str) -> int:
    """Unit-cost edit distance with adjacent transpositions (so a swapped
    letter pair like 'recieve' -> 'receive' counts as one edit)."""
    n, m = len(a), len(b)
    if n == 0:
        return m
    if m == 0:
        return n
    prev2: list[int] = []
    prev = list(range(m + 1))
    for i in range(1, n + 1):
        cur = [i] + [0] * m
        for j in range(1, m + 1):
            cost = 0 if a[i - 1] == b[j - 1] else 1
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + cost)
            if (
                i > 1
                and j > 1
                and a[i - 1] == b[j - 2]
                and a[i - 2] == b[j - 1]
            ):
                cur[j] = min(cur[j], prev2[j - 2] + 1)
        prev2, prev = prev, cur
    return prev[m]


@dataclass(frozen=True)
class ChangeGroup:
    """One maximal run of non-equal spans in a pair: the replaced fragments."""

    old_fragment: str
    new_fragment: str
    old_token_count: int
    new_token_count: int

    @property
    def is_replacement(self) -> bool:
        return bool(self.old_fragment) and bool(self.new_fragment)


@dataclass
class FrequencyTable:
    """Corpus-wide counts of normalized (old -> new) replacements."""

    threshold: int
    counts: dict[tuple[str, str], int] = field(default_factory=dict)

    def is_frequent(self, old_fragment: str, new_fragment: str) -> bool:
        key = (_normalize_fragment(old_fragment), _normalize_fragment(new_fragment))
        return self.counts.get(key, 0) >= self.threshold


@dataclass(frozen=True)
class FilterVerdict:
    keep: bool
    reasons: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        assert self.keep == (not self.reasons)


def _normalize_fragment(fragment: str) -> str:
    return _WS_RE.sub(" ", fragment).strip().casefold()


def change_groups(pair: SentencePair) -> list[ChangeGroup]:
    """Extract the maximal non-equal span runs of a pair as fragment pairs.

    Fragments are the exact substrings of the old/new sentences covered by the
    run's token ranges. A pair whose sentences differ only in ways invisible
    to the tokenizer (e.g. whitespace) yields a single whole-sentence group.
    """
    old_text = pair.old_sentence.text
    new_text = pair.new_sentence.text
    old_toks = tokenize(old_text)
    new_toks = tokenize(new_text)

    groups: list[ChangeGroup] = []
    run: list = []
    for span in pair.token_spans + [None]:  # trailing sentinel flushes the run
        if span is not None and span.kind != EQUAL:
            run.append(span)
            continue
        if run:
            old_lo = min(s.old_range[0] for s in run)
            old_hi = max(s.old_range[1] for s in run)
            new_lo = min(s.new_range[0] for s in run)
            new_hi = max(s.new_range[1] for s in run)
            groups.append(
                ChangeGroup(
                    old_fragment=_slice_text(old_text, old_toks, old_lo, old_hi),
                    new_fragment=_slice_text(new_text, new_toks, new_lo, new_hi),
                    old_token_count=old_hi - old_lo,
                    new_token_count=new_hi - new_lo,
                )
            )
            run = []
    if not groups and old_text != new_text:
        groups.append(
            ChangeGroup(
                old_fragment=old_text,
                new_fragment=new_text,
                old_token_count=len(old_toks),
                new_token_count=len(new_toks),
            )
        )
    return groups


def _slice_text(text: str, tokens: list, lo: int, hi: int) -> str:
    if hi <= lo:
        return ""
    return text[tokens[lo].char_span[0] : tokens[hi - 1].char_span[1]]


def build_frequency_table(
    pairs: list[SentencePair], threshold: int = DEFAULT_FREQUENCY_THRESHOLD
) -> FrequencyTable:
    """Count normalized replacements across one snapshot-comparison batch."""
    if threshold < 2:
        raise ConfigError(f"frequency threshold must be >= 2, got {threshold}")
    table = FrequencyTable(threshold=threshold)
    for pair in pairs:
        for group in change_groups(pair):
            if not group.is_replacement:
                continue
            key = (
                _normalize_fragment(group.old_fragment),
                _normalize_fragment(group.new_fragment),
            )
            table.counts[key] = table.counts.get(key, 0) + 1
    return table


def _contains_digit(s: str) -> bool:
    return any(ch.isdigit() for ch in s)


def _rules_for_group(group: ChangeGroup, table: FrequencyTable) -> set[str]:
    rules: set[str] = set()
    if group.is_replacement:
        if group.old_token_count == 1 and group.new_token_count == 1:
            old_is = group.old_fragment.casefold() in PRONOUNS
            new_is = group.new_fragment.casefold() in PRONOUNS
            # Pronoun-to-pronoun swaps can be factual corrections; keep those.
            if old_is != new_is:
                rules.add(RULE_PRONOUN)
        if table.is_frequent(group.old_fragment, group.new_fragment):
            rules.add(RULE_FREQUENT)
    if (
        edit_distance(group.old_fragment, group.new_fragment) < 2
        and not _contains_digit(group.old_fragment)
        and not _contains_digit(group.new_fragment)
    ):
        rules.add(RULE_SPELLING)
    return rules


def apply_heuristics(pair: SentencePair, table: FrequencyTable) -> FilterVerdict:
    """Keep the pair unless every change is explained by a rule, or the pair's
    edits are solely additions or solely deletions."""
    groups = change_groups(pair)
    if not groups:
        return FilterVerdict(keep=True)
    if all(not g.old_fragment for g in groups) or all(not g.new_fragment for g in groups):
        return FilterVerdict(keep=False, reasons=(RULE_PURE_ADD_DELETE,))
    fired: set[str] = set()
    for group in groups:
        rules = _rules_for_group(group, table)
        if not rules:
            return FilterVerdict(keep=True)
        fired |= rules
    return FilterVerdict(keep=False, reasons=tuple(sorted(fired)))


def filter_batch(
    pairs: list[SentencePair], table: FrequencyTable
) -> tuple[list[SentencePair], list[tuple[SentencePair, FilterVerdict]], dict]:
    """Apply the heuristics to a whole batch, with stage accounting."""
    kept: list[SentencePair] = []
    dropped: list[tuple[SentencePair, FilterVerdict]] = []
    drops_by_rule: dict[str, int] = {}
    for pair in pairs:
        verdict = apply_heuristics(pair, table)
        if verdict.keep:
            kept.append(pair)
        else:
            dropped.append((pair, verdict))
            for rule in verdict.reasons:
                drops_by_rule[rule] = drops_by_rule.get(rule, 0) + 1
    report = {
        "stage": "heuristic_filter",
        "in": len(pairs),
        "out": len(kept),
        "drops_by_rule": dict(sorted(drops_by_rule.items())),
    }
    return kept, dropped, report
