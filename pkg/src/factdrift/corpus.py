"""Snapshot corpus ingestion and cross-snapshot article pairing.

A snapshot is a JSON Lines file with one object per article:
``{"id": str, "title": str, "text": str}``. The snapshot date is supplied
out-of-band (CLI flag or a ``snapshot-YYYY-MM-DD.jsonl`` filename).
Articles shorter than ``MIN_ARTICLE_CHARS`` characters are dropped at load
time as low-quality.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Iterable, Iterator

from .errors import DataError

# Articles with strictly fewer characters than this are rejected; a text of
# exactly MIN_ARTICLE_CHARS is kept. Characters are Unicode scalars, not bytes.
MIN_ARTICLE_CHARS = 200

_SNAPSHOT_NAME_RE = re.compile(r"snapshot-(\d{4}-\d{2}-\d{2})\.jsonl$")


@dataclass(frozen=True)
class ArticleSnapshot:
    """One article's text as of a dated snapshot."""

    article_id: str
    title: str
    text: str
    snapshot_date: date


@dataclass(frozen=True)
class ArticleVersionPair:
    """The same article in an older and a newer snapshot."""

    article_id: str
    title: str
    old: ArticleSnapshot
    new: ArticleSnapshot

    def __post_init__(self) -> None:
        if self.old.article_id != self.new.article_id:
            raise DataError(
                f"version pair mixes articles {self.old.article_id!r} "
                f"and {self.new.article_id!r}"
            )
        if not self.old.snapshot_date < self.new.snapshot_date:
            raise DataError(
                f"article {self.article_id!r}: old snapshot date "
                f"{self.old.snapshot_date} is not before {self.new.snapshot_date}"
            )


@dataclass
class SnapshotCorpus:
    """All articles of one snapshot, keyed by article id. Immutable by convention."""

    snapshot_date: date
    articles: dict[str, ArticleSnapshot] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.articles)

    def __iter__(self) -> Iterator[ArticleSnapshot]:
        return iter(self.articles.values())

    def ids(self) -> set[str]:
        return set(self.articles)


@dataclass
class PairSkipReport:
    """Articles present in only one snapshot, skipped during pairing."""

    deleted: list[str] = field(default_factory=list)  # only in the old snapshot
    created: list[str] = field(default_factory=list)  # only in the new snapshot

    @property
    def total_skipped(self) -> int:
        return len(self.deleted) + len(self.created)


def date_from_snapshot_name(path: str | Path) -> date | None:
    """Extract the date from a ``snapshot-YYYY-MM-DD.jsonl`` filename, if present."""
    m = _SNAPSHOT_NAME_RE.search(Path(path).name)
    return date.fromisoformat(m.group(1)) if m else None


def load_snapshot(path: str | Path, snapshot_date: date) -> SnapshotCorpus:
    """Load one snapshot file, dropping articles shorter than MIN_ARTICLE_CHARS.

    Raises DataError naming the offending line for malformed records and the
    offending id for duplicates.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"snapshot file not found: {path}")
    corpus = SnapshotCorpus(snapshot_date=snapshot_date)
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            if not isinstance(obj, dict):
                raise DataError(f"{path}:{lineno}: expected a JSON object")
            try:
                article_id = obj["id"]
                title = obj["title"]
                text = obj["text"]
            except KeyError as exc:
                raise DataError(f"{path}:{lineno}: missing field {exc}") from exc
            if not isinstance(article_id, str) or not article_id:
                raise DataError(f"{path}:{lineno}: 'id' must be a non-empty string")
            if not isinstance(title, str) or not isinstance(text, str):
                raise DataError(f"{path}:{lineno}: 'title' and 'text' must be strings")
            if article_id in corpus.articles:
                raise DataError(f"{path}: duplicate article id {article_id!r}")
            if len(text) < MIN_ARTICLE_CHARS:
                continue
            corpus.articles[article_id] = ArticleSnapshot(
                article_id=article_id,
                title=title,
                text=text,
                snapshot_date=snapshot_date,
            )
    return corpus


def pair_versions(
    old: SnapshotCorpus, new: SnapshotCorpus
) -> tuple[list[ArticleVersionPair], PairSkipReport]:
    """Pair articles present in both snapshots; report the rest as skipped.

    Output is sorted by article id. Articles present in only one snapshot are
    not treated as wholesale changes; the pipeline works on modified sentence
    pairs only.
    """
    if not old.snapshot_date < new.snapshot_date:
        raise DataError(
            f"old snapshot date {old.snapshot_date} is not before "
            f"new snapshot date {new.snapshot_date}"
        )
    shared = old.ids() & new.ids()
    report = PairSkipReport(
        deleted=sorted(old.ids() - shared),
        created=sorted(new.ids() - shared),
    )
    pairs = [
        ArticleVersionPair(
            article_id=article_id,
            title=new.articles[article_id].title,
            old=old.articles[article_id],
            new=new.articles[article_id],
        )
        for article_id in sorted(shared)
    ]
    return pairs, report


def write_snapshot(corpus: SnapshotCorpus, path: str | Path) -> None:
    """Write a corpus back out in the snapshot JSONL format (sorted by id)."""
    lines = [
        json.dumps(
            {"id": a.article_id, "title": a.title, "text": a.text},
            ensure_ascii=False,
        )
        for a in sorted(corpus, key=lambda a: a.article_id)
    ]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def iter_jsonl(path: str | Path) -> Iterable[tuple[int, dict]]:
    """Yield (lineno, object) for each non-blank line of a JSONL file."""
    if not Path(path).exists():
        raise DataError(f"input file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            yield lineno, obj
