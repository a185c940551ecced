"""LLM-driven QA generation with a five-part quality review and bounded
retry, plus automatic update of already-tracked facts via evidence matching.

All model calls go through the chat-completion protocol; prompts are
string.Template files under ``prompts/`` whose data lines are tagged
``[field] value`` so offline backends can answer deterministically.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from string import Template

from .clients import (
    ChatClient,
    extract_json_object,
    parse_tagged_lines,
    require_fields,
)
from .dataset_store import DocumentRef, OutdatedInfo, QARecord, EvidenceIndex
from .diffcore import (
    SentencePair,
    deleted_fragments,
    inserted_fragments,
    render_marked_diff,
)
from .errors import ConfigError, ProtocolError, TransportError
from .textproc import TokenizerFn

# Canonical order for reporting failed review checks.
REVIEW_CHECKS = (
    "same_answer",
    "answer_accuracy",
    "question_clarity",
    "question_completeness",
    "temporal_independence",
)

DEFAULT_MAX_ATTEMPTS = 3

_WS_RE = re.compile(r"\s+")


def _oneline(text: str) -> str:
    return _WS_RE.sub(" ", text).strip()


def load_template(name: str, template_dir: str | Path | None = None) -> Template:
    """Load a prompt template by file name, preferring an override directory."""
    if template_dir is not None:
        path = Path(template_dir) / name
        if path.exists():
            return Template(path.read_text(encoding="utf-8"))
    data = (resources.files("factdrift").joinpath(f"prompts/{name}")).read_text(
        encoding="utf-8"
    )
    return Template(data)


@dataclass(frozen=True)
class CandidateQA:
    """A generated question with its contradicting answer versions."""

    question: str
    old_answer: str
    new_answer: str
    source_pair: SentencePair

    def __post_init__(self) -> None:
        for name in ("question", "old_answer", "new_answer"):
            if not getattr(self, name).strip():
                raise ProtocolError(f"candidate QA field {name!r} is empty")


@dataclass(frozen=True)
class ReviewOutcome:
    passed: bool
    failed_checks: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        assert self.passed == (not self.failed_checks)


@dataclass(frozen=True)
class DiscardRecord:
    """Bookkeeping for a pair given up on after the retry budget."""

    article_id: str
    title: str
    failed_checks: tuple[str, ...]
    attempts: int
    error: str | None = None


def _generation_prompt(
    pair: SentencePair,
    tokenizer: str | TokenizerFn = "default",
    template_dir: str | Path | None = None,
) -> list[dict]:
    template = load_template("qa_generation.txt", template_dir)
    content = template.substitute(
        title=_oneline(pair.title),
        old_date=pair.old_date.isoformat(),
        new_date=pair.new_date.isoformat(),
        old_sentence=_oneline(pair.old_sentence.text),
        new_sentence=_oneline(pair.new_sentence.text),
        marked_diff=_oneline(render_marked_diff(pair, tokenizer).markup),
        old_context=_oneline(pair.old_context),
        new_context=_oneline(pair.new_context),
    )
    return [{"role": "user", "content": content}]


def generate_qa(
    client: ChatClient,
    pair: SentencePair,
    tokenizer: str | TokenizerFn = "default",
    template_dir: str | Path | None = None,
) -> CandidateQA:
    """One generation round trip; raises ProtocolError on unparseable output."""
    reply = client.complete(_generation_prompt(pair, tokenizer, template_dir))
    obj = require_fields(
        extract_json_object(reply), ("question", "old_answer", "new_answer")
    )
    return CandidateQA(
        question=obj["question"].strip(),
        old_answer=obj["old_answer"].strip(),
        new_answer=obj["new_answer"].strip(),
        source_pair=pair,
    )


def _parse_bool(obj: dict, name: str) -> bool:
    value = obj.get(name)
    if not isinstance(value, bool):
        raise ProtocolError(f"review reply missing boolean field {name!r}")
    return value


def review_qa(
    client: ChatClient,
    cand: CandidateQA,
    template_dir: str | Path | None = None,
) -> ReviewOutcome:
    """Five-part review: quality checks plus the same-answer check.

    Verbatim-identical answers fail same_answer locally, without a model call.
    """
    if cand.old_answer == cand.new_answer:
        return ReviewOutcome(passed=False, failed_checks=("same_answer",))

    failed: set[str] = set()

    quality = load_template("quality_review.txt", template_dir).substitute(
        question=_oneline(cand.question),
        old_answer=_oneline(cand.old_answer),
        new_answer=_oneline(cand.new_answer),
        old_sentence=_oneline(cand.source_pair.old_sentence.text),
        new_sentence=_oneline(cand.source_pair.new_sentence.text),
    )
    reply = extract_json_object(client.complete([{"role": "user", "content": quality}]))
    for check in REVIEW_CHECKS[1:]:
        if not _parse_bool(reply, check):
            failed.add(check)

    same = load_template("same_answer_check.txt", template_dir).substitute(
        question=_oneline(cand.question),
        answer_a=_oneline(cand.old_answer),
        answer_b=_oneline(cand.new_answer),
    )
    reply = extract_json_object(client.complete([{"role": "user", "content": same}]))
    if _parse_bool(reply, "same_answer"):
        failed.add("same_answer")

    ordered = tuple(c for c in REVIEW_CHECKS if c in failed)
    return ReviewOutcome(passed=not ordered, failed_checks=ordered)


def generate_with_retry(
    client: ChatClient,
    pair: SentencePair,
    max_attempts: int = DEFAULT_MAX_ATTEMPTS,
    discards: list[DiscardRecord] | None = None,
    tokenizer: str | TokenizerFn = "default",
    template_dir: str | Path | None = None,
) -> CandidateQA | None:
    """Generate-review loop: first passing candidate wins; a parse or
    transport error counts as a failed attempt. After ``max_attempts``
    failures the pair is discarded (recorded when a sink is given)."""
    if max_attempts < 1:
        raise ConfigError(f"max_attempts must be >= 1, got {max_attempts}")
    last_failed: tuple[str, ...] = ()
    last_error: str | None = None
    for _attempt in range(max_attempts):
        try:
            cand = generate_qa(client, pair, tokenizer, template_dir)
            outcome = review_qa(client, cand, template_dir)
        except (ProtocolError, TransportError) as exc:
            last_failed, last_error = (), str(exc)
            continue
        if outcome.passed:
            return cand
        last_failed, last_error = outcome.failed_checks, None
    if discards is not None:
        discards.append(
            DiscardRecord(
                article_id=pair.article_id,
                title=pair.title,
                failed_checks=last_failed,
                attempts=max_attempts,
                error=last_error,
            )
        )
    return None


def record_from_candidate(cand: CandidateQA) -> QARecord:
    """Turn a passing candidate into a stored record: the new sentence backs
    the current answer, the old one seeds the outdated chain."""
    pair = cand.source_pair
    return QARecord(
        question=cand.question,
        answer=cand.new_answer,
        evidence=pair.new_sentence.text,
        last_modified_time=pair.new_date,
        outdated_infos=[
            OutdatedInfo(
                answer=cand.old_answer,
                evidence=pair.old_sentence.text,
                last_modified_time=pair.old_date,
            )
        ],
        document=DocumentRef(id=pair.article_id, title=pair.title),
    )


def match_existing(pair: SentencePair, index: EvidenceIndex) -> int | None:
    """Position of the record whose current evidence matches the pair's old
    sentence under evidence normalization, or None."""
    return index.lookup(pair.article_id, pair.old_sentence.text)


def update_answer(
    client: ChatClient,
    record: QARecord,
    pair: SentencePair,
    max_attempts: int = DEFAULT_MAX_ATTEMPTS,
    discards: list[DiscardRecord] | None = None,
    tokenizer: str | TokenizerFn = "default",
    template_dir: str | Path | None = None,
) -> QARecord | None:
    """Generate and review an updated answer for an already-tracked fact.

    On success returns a new record: the question and document are preserved
    verbatim, the previous answer moves to the front of ``outdated_infos``.
    On failure returns None and leaves the record untouched.
    """
    if max_attempts < 1:
        raise ConfigError(f"max_attempts must be >= 1, got {max_attempts}")
    template = load_template("new_answer_generation.txt", template_dir)
    last_failed: tuple[str, ...] = ()
    last_error: str | None = None
    for _attempt in range(max_attempts):
        content = template.substitute(
            title=_oneline(record.document.title),
            question=_oneline(record.question),
            previous_answer=_oneline(record.answer),
            new_date=pair.new_date.isoformat(),
            new_sentence=_oneline(pair.new_sentence.text),
            marked_diff=_oneline(render_marked_diff(pair, tokenizer).markup),
            new_context=_oneline(pair.new_context),
        )
        try:
            reply = client.complete([{"role": "user", "content": content}])
            obj = require_fields(extract_json_object(reply), ("answer",))
            cand = CandidateQA(
                question=record.question,
                old_answer=record.answer,
                new_answer=obj["answer"].strip(),
                source_pair=pair,
            )
            outcome = review_qa(client, cand, template_dir)
        except (ProtocolError, TransportError) as exc:
            last_failed, last_error = (), str(exc)
            continue
        if outcome.passed:
            return replace(
                record,
                answer=cand.new_answer,
                evidence=pair.new_sentence.text,
                last_modified_time=pair.new_date,
                outdated_infos=[
                    OutdatedInfo(
                        answer=record.answer,
                        evidence=record.evidence,
                        last_modified_time=record.last_modified_time,
                    )
                ]
                + record.outdated_infos,
            )
        last_failed, last_error = outcome.failed_checks, None
    if discards is not None:
        discards.append(
            DiscardRecord(
                article_id=record.document.id,
                title=record.document.title,
                failed_checks=last_failed,
                attempts=max_attempts,
                error=last_error,
            )
        )
    return None


_NORM_ANSWER_RE = re.compile(r"\s+")


def _answers_equal(a: str, b: str) -> bool:
    return (
        _NORM_ANSWER_RE.sub(" ", a).strip().casefold()
        == _NORM_ANSWER_RE.sub(" ", b).strip().casefold()
    )


@dataclass
class OfflineQAClient:
    """Deterministic offline chat backend for the QA pipeline.

    Reads the tagged data lines of the prompt and fabricates structured
    replies: generation answers are the changed fragments of the marked diff
    (so they bind to their evidence sentences), quality review approves, and
    the same-answer check compares the two answers after normalization.
    """

    calls: int = 0
    generation_calls: int = 0

    def complete(
        self,
        messages: list[dict],
        temperature: float | None = None,
        max_tokens: int | None = None,
    ) -> str:
        self.calls += 1
        content = messages[-1]["content"]
        fields = parse_tagged_lines(content)
        if "answer_a" in fields:
            same = _answers_equal(fields["answer_a"], fields["answer_b"])
            return f'{{"same_answer": {"true" if same else "false"}}}'
        if "old_answer" in fields and "answer_accuracy" in content:
            return (
                '{"answer_accuracy": true, "question_clarity": true,'
                ' "question_completeness": true, "temporal_independence": true}'
            )
        if "previous_answer" in fields:
            markup = fields.get("marked_diff", "")
            inserted = inserted_fragments(markup)
            answer = inserted[0] if inserted else fields.get("new_sentence", "")
            return _json_str_object({"answer": answer})
        if "marked_diff" in fields:
            self.generation_calls += 1
            markup = fields["marked_diff"]
            deleted = deleted_fragments(markup)
            inserted = inserted_fragments(markup)
            old_answer = deleted[0] if deleted else fields.get("old_sentence", "")
            new_answer = inserted[0] if inserted else fields.get("new_sentence", "")
            title = fields.get("title", "this article")
            question = (
                f'What does "{title}" currently state where it previously said'
                f' "{old_answer}"?'
            )
            return _json_str_object(
                {
                    "question": question,
                    "old_answer": old_answer,
                    "new_answer": new_answer,
                }
            )
        raise ProtocolError("offline QA client cannot interpret this prompt")


def _json_str_object(obj: dict) -> str:
    import json

    return json.dumps(obj, ensure_ascii=False)
