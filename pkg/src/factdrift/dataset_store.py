"""Persistent QA dataset model: records with answer chains, the evidence
index used to match re-changed facts, dataset statistics, and evaluation-set
sampling.

The on-disk format is JSONL, one record per line, dates as ``YYYY-MM-DD``.
A record's answer history is newest-first: the current answer, then
``outdated_infos`` in strictly decreasing date order.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import tempfile
import unicodedata
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Callable, Sequence

from .corpus import iter_jsonl
from .errors import AmbiguityError, ConfigError, DataError

_WS_RE = re.compile(r"\s+")


def normalize_evidence(text: str) -> str:
    """Evidence-matching normalization: NFC, collapsed whitespace, and
    insensitivity to trailing terminal punctuation."""
    text = unicodedata.normalize("NFC", text)
    text = _WS_RE.sub(" ", text).strip()
    return text.rstrip(".?!").rstrip()


def normalize_for_containment(text: str) -> str:
    """Looser normalization for substring checks (binding, passage labels)."""
    text = unicodedata.normalize("NFC", text)
    return _WS_RE.sub(" ", text).strip().casefold()


@dataclass(frozen=True)
class DocumentRef:
    id: str
    title: str


@dataclass(frozen=True)
class OutdatedInfo:
    """One superseded answer with the evidence that supported it."""

    answer: str
    evidence: str
    last_modified_time: date

    def to_dict(self) -> dict:
        return {
            "answer": self.answer,
            "evidence": self.evidence,
            "last_modified_time": self.last_modified_time.isoformat(),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "OutdatedInfo":
        return cls(
            answer=obj["answer"],
            evidence=obj["evidence"],
            last_modified_time=date.fromisoformat(obj["last_modified_time"]),
        )


@dataclass
class QARecord:
    question: str
    answer: str
    evidence: str
    last_modified_time: date
    outdated_infos: list[OutdatedInfo]
    document: DocumentRef
    domain: str | None = None

    def to_dict(self) -> dict:
        obj = {
            "question": self.question,
            "answer": self.answer,
            "evidence": self.evidence,
            "last_modified_time": self.last_modified_time.isoformat(),
            "outdated_infos": [o.to_dict() for o in self.outdated_infos],
            "document": {"id": self.document.id, "title": self.document.title},
        }
        if self.domain is not None:
            obj["domain"] = self.domain
        return obj

    @classmethod
    def from_dict(cls, obj: dict) -> "QARecord":
        return cls(
            question=obj["question"],
            answer=obj["answer"],
            evidence=obj["evidence"],
            last_modified_time=date.fromisoformat(obj["last_modified_time"]),
            outdated_infos=[OutdatedInfo.from_dict(o) for o in obj["outdated_infos"]],
            document=DocumentRef(id=obj["document"]["id"], title=obj["document"]["title"]),
            domain=obj.get("domain"),
        )

    @property
    def creation_date(self) -> date:
        """Earliest date known for this record: the oldest superseded entry's
        date, i.e. the snapshot the fact was first extracted from."""
        if self.outdated_infos:
            return self.outdated_infos[-1].last_modified_time
        return self.last_modified_time


def validate_record(record: QARecord, where: str = "record", check_binding: bool = False) -> None:
    """Check structural invariants; ``check_binding`` additionally requires
    each answer to appear inside its evidence (applied at write time)."""
    for name in ("question", "answer", "evidence"):
        if not getattr(record, name).strip():
            raise DataError(f"{where}: field {name!r} is empty")
    if not record.document.id:
        raise DataError(f"{where}: document id is empty")
    if not record.outdated_infos:
        raise DataError(f"{where}: outdated_infos is empty")
    prev = record.last_modified_time
    for i, info in enumerate(record.outdated_infos):
        if info.last_modified_time >= prev:
            raise DataError(
                f"{where}: outdated_infos[{i}].last_modified_time "
                f"{info.last_modified_time} is not older than {prev}"
            )
        prev = info.last_modified_time
    if check_binding:
        entries = [(record.answer, record.evidence, "answer")] + [
            (o.answer, o.evidence, f"outdated_infos[{i}].answer")
            for i, o in enumerate(record.outdated_infos)
        ]
        for answer, evidence, label in entries:
            if normalize_for_containment(answer) not in normalize_for_containment(evidence):
                raise DataError(f"{where}: {label} is not contained in its evidence")


def save_dataset(records: Sequence[QARecord], path: str | Path) -> None:
    """Validate and write the dataset atomically (temp file + rename)."""
    path = Path(path)
    for i, record in enumerate(records):
        validate_record(record, where=f"record {i}", check_binding=True)
    payload = "".join(
        json.dumps(r.to_dict(), ensure_ascii=False) + "\n" for r in records
    )
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_dataset(path: str | Path) -> list[QARecord]:
    records: list[QARecord] = []
    for lineno, obj in iter_jsonl(path):
        try:
            record = QARecord.from_dict(obj)
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"{path}:{lineno}: bad record: {exc}") from exc
        validate_record(record, where=f"{path}:{lineno}")
        records.append(record)
    return records


@dataclass
class EvidenceIndex:
    """Maps (document id, normalized current evidence) to a record position."""

    keys: dict[tuple[str, str], int] = field(default_factory=dict)

    @classmethod
    def build(cls, records: Sequence[QARecord]) -> "EvidenceIndex":
        index = cls()
        for pos, record in enumerate(records):
            key = (record.document.id, normalize_evidence(record.evidence))
            if key in index.keys:
                raise AmbiguityError(
                    f"records {index.keys[key]} and {pos} share evidence "
                    f"{record.evidence!r} in document {record.document.id!r}"
                )
            index.keys[key] = pos
        return index

    def lookup(self, document_id: str, sentence_text: str) -> int | None:
        return self.keys.get((document_id, normalize_evidence(sentence_text)))


def dataset_stats(records: Sequence[QARecord]) -> dict:
    """Counts by creation month, by outdated-chain length, and by domain tag.

    Every partition sums to the dataset size; untagged records are counted
    under ``"untagged"``.
    """
    by_month: dict[str, int] = {}
    by_chain: dict[int, int] = {}
    by_domain: dict[str, int] = {}
    for record in records:
        month = record.creation_date.strftime("%Y-%m")
        by_month[month] = by_month.get(month, 0) + 1
        chain = len(record.outdated_infos)
        by_chain[chain] = by_chain.get(chain, 0) + 1
        domain = record.domain if record.domain else "untagged"
        by_domain[domain] = by_domain.get(domain, 0) + 1
    return {
        "total": len(records),
        "by_creation_month": dict(sorted(by_month.items())),
        "by_chain_length": dict(sorted(by_chain.items())),
        "by_domain": dict(sorted(by_domain.items())),
    }


def _hash_bucket(question: str, clusters: int) -> int:
    digest = hashlib.sha256(question.encode("utf-8")).hexdigest()
    return int(digest, 16) % clusters


def _kmeans_buckets(
    vectors: "list[list[float]]", clusters: int, seed: int
) -> list[int]:
    import numpy as np

    data = np.asarray(vectors, dtype=float)
    rng = np.random.default_rng(seed)
    centers = data[rng.choice(len(data), size=clusters, replace=False)].copy()
    assignment = None
    for _iteration in range(50):
        dists = ((data[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_assignment = dists.argmin(axis=1)
        if assignment is not None and (new_assignment == assignment).all():
            break
        assignment = new_assignment
        for c in range(clusters):
            members = data[assignment == c]
            if len(members):
                centers[c] = members.mean(axis=0)
    return assignment.tolist()


def sample_eval_set(
    records: Sequence[QARecord],
    clusters: int = 10,
    per_cluster: int = 1000,
    embedder: Callable[[list[str]], "list[list[float]]"] | None = None,
    seed: int = 0,
) -> tuple[list[QARecord], dict]:
    """Cluster questions and sample uniformly from each cluster.

    With an embedder configured, clusters come from k-means over question
    embeddings; otherwise questions are hash-bucketed, which keeps sampling
    fully deterministic offline. Buckets smaller than ``per_cluster``
    contribute all their members and are listed in the report.
    """
    import random

    if clusters < 1:
        raise ConfigError(f"clusters must be >= 1, got {clusters}")
    if len(records) < clusters:
        raise DataError(f"dataset size {len(records)} is smaller than {clusters} clusters")
    if embedder is not None:
        vectors = embedder([r.question for r in records])
        buckets_of = _kmeans_buckets(vectors, clusters, seed)
    else:
        buckets_of = [_hash_bucket(r.question, clusters) for r in records]

    members: dict[int, list[int]] = {c: [] for c in range(clusters)}
    for pos, bucket in enumerate(buckets_of):
        members[bucket].append(pos)

    rng = random.Random(seed)
    chosen: list[int] = []
    short_buckets: list[int] = []
    for bucket in range(clusters):
        positions = members[bucket]
        if len(positions) <= per_cluster:
            chosen.extend(positions)
            if len(positions) < per_cluster:
                short_buckets.append(bucket)
        else:
            chosen.extend(rng.sample(positions, per_cluster))
    chosen.sort()
    report = {
        "clusters": clusters,
        "per_cluster": per_cluster,
        "method": "kmeans" if embedder is not None else "hash",
        "bucket_sizes": {c: len(members[c]) for c in range(clusters)},
        "short_buckets": short_buckets,
        "sampled": len(chosen),
    }
    return [records[pos] for pos in chosen], report
