"""RAG robustness experiments: labeling retrieved passages as relevant,
outdated, or distracting; composing and ordering contexts; time-aware
prompting; judge-based scoring; retrieval-category bucketing; and timeliness
awareness probes.

Judge verdicts map to fixed scores (perfect=1, missing=0, harmful=-1) and a
run's Score percentage is always perfect% - harmful%.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Mapping, Sequence

from .clients import ChatClient, parse_tagged_lines
from .dataset_store import QARecord, normalize_for_containment
from .errors import ConfigError, DataError, ProtocolError, TransportError
from .qa_pipeline import load_template
from .search_sim import (
    DecayParams,
    Passage,
    RetrievalResult,
    SearchIndex,
    search,
)

RELEVANT = "relevant"
OUTDATED = "outdated"
DISTRACTING = "distracting"

BUCKET_BOTH = "both"
BUCKET_RELEVANT = "relevant"
BUCKET_OUTDATED = "outdated"
BUCKET_NONE = "none"
BUCKETS = (BUCKET_BOTH, BUCKET_RELEVANT, BUCKET_OUTDATED, BUCKET_NONE)

ORDER_SCORE_DESC = "score_desc"
ORDER_DATE_DESC = "date_desc"
ORDER_DATE_ASC = "date_asc"
ORDERINGS = (ORDER_SCORE_DESC, ORDER_DATE_DESC, ORDER_DATE_ASC)

VERDICT_SCORES = {"perfect": 1, "missing": 0, "harmful": -1}

_WS_RE = re.compile(r"\s+")
_DOC_LINE_RE = re.compile(r"Document \d+ \(Last Modified Time: \d{4}-\d{2}-\d{2}\):\n(.+)")


@dataclass(frozen=True)
class Judgment:
    verdict: str
    score: int = field(init=False)

    def __post_init__(self) -> None:
        if self.verdict not in VERDICT_SCORES:
            raise DataError(f"unknown verdict {self.verdict!r}")
        object.__setattr__(self, "score", VERDICT_SCORES[self.verdict])


@dataclass(frozen=True)
class AwarenessFlags:
    a_c: bool  # recognizes the current fact as up-to-date
    a_o: bool  # recognizes the outdated fact as not current


@dataclass(frozen=True)
class ExperimentSpec:
    """One experiment condition: how many passages of each kind, their
    ordering, the answer style, and the evaluation's Current Date."""

    r_count: int
    o_count: int
    d_count: int
    ordering: str
    answer_mode: str
    current_date: date

    def __post_init__(self) -> None:
        for name in ("r_count", "o_count", "d_count"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.r_count + self.o_count + self.d_count < 1:
            raise ConfigError("an experiment needs at least one passage")
        if self.ordering not in ORDERINGS:
            raise ConfigError(f"unknown ordering {self.ordering!r}")
        if self.answer_mode not in ("short", "long"):
            raise ConfigError(f"unknown answer_mode {self.answer_mode!r}")

    def label(self) -> str:
        return (
            f"R{self.r_count} O{self.o_count} D{self.d_count} "
            f"{self.ordering} {self.answer_mode}"
        )

    def to_dict(self) -> dict:
        return {
            "r_count": self.r_count,
            "o_count": self.o_count,
            "d_count": self.d_count,
            "ordering": self.ordering,
            "answer_mode": self.answer_mode,
            "current_date": self.current_date.isoformat(),
        }


@dataclass(frozen=True)
class EngineDefaults:
    """End-to-end run parameters echoed in every report header."""

    k: int = 20
    c_s: int = 256
    c_o: int = 32
    n: int = 5


@dataclass(frozen=True)
class Prompt:
    system: str
    user: str

    def messages(self) -> list[dict]:
        return [
            {"role": "system", "content": self.system},
            {"role": "user", "content": self.user},
        ]

    @property
    def text(self) -> str:
        return self.system + "\n\n" + self.user


def _containment_key(evidence: str) -> str:
    key = normalize_for_containment(evidence)
    return key.rstrip(".?!").strip()


def label_passage(passage: Passage, record: QARecord) -> str:
    """Relevant when the passage contains the record's current evidence;
    outdated when it contains only superseded evidence; distracting otherwise.
    A passage holding both current and outdated evidence counts as relevant."""
    if not record.outdated_infos:
        raise DataError("labeling requires a record with outdated evidence")
    text = normalize_for_containment(passage.text)
    if _containment_key(record.evidence) in text:
        return RELEVANT
    for info in record.outdated_infos:
        if _containment_key(info.evidence) in text:
            return OUTDATED
    return DISTRACTING


def compose_context(
    spec: ExperimentSpec, pools: Mapping[str, Sequence[RetrievalResult]]
) -> list[RetrievalResult]:
    """Take the top-scored passages from each pool and order the union."""
    chosen: list[RetrievalResult] = []
    for pool_name, count in (
        (RELEVANT, spec.r_count),
        (OUTDATED, spec.o_count),
        (DISTRACTING, spec.d_count),
    ):
        pool = list(pools.get(pool_name, ()))
        if len(pool) < count:
            raise DataError(
                f"{pool_name} pool has {len(pool)} passages, {count} requested"
            )
        pool.sort(key=lambda r: -r.score)
        chosen.extend(pool[:count])
    return order_context(chosen, spec.ordering)


def order_context(
    items: Sequence[RetrievalResult], ordering: str
) -> list[RetrievalResult]:
    """Order a context per the experiment's strategy; date ties break by
    retrieval score descending."""
    out = list(items)
    if ordering == ORDER_SCORE_DESC:
        out.sort(key=lambda r: -r.score)
    elif ordering == ORDER_DATE_DESC:
        out.sort(key=lambda r: (-r.passage.version_date.toordinal(), -r.score))
    elif ordering == ORDER_DATE_ASC:
        out.sort(key=lambda r: (r.passage.version_date.toordinal(), -r.score))
    else:
        raise ConfigError(f"unknown ordering {ordering!r}")
    return out


def _document_block(i: int, passage: Passage) -> str:
    body = _WS_RE.sub(" ", passage.text).strip()
    return (
        f"Document {i} (Last Modified Time: {passage.version_date.isoformat()}):\n{body}"
    )


_SHORT_INSTRUCTION = (
    "Answer with the shortest span that answers the question. If you cannot "
    'answer confidently, reply exactly "Unsure".'
)
_LONG_INSTRUCTION = "Answer the question in complete sentences."


def build_prompt(
    question: str,
    passages: Sequence[RetrievalResult | Passage],
    spec: ExperimentSpec,
    template_dir: str | Path | None = None,
) -> Prompt:
    """Time-aware prompt: the Current Date sits in the system message, every
    document block carries its Last Modified Time. Zero passages produce the
    no-retrieval variant."""
    system = load_template("rag_system.txt", template_dir).substitute(
        current_date=spec.current_date.isoformat()
    )
    blocks = [
        _document_block(i + 1, _as_passage(p)) for i, p in enumerate(passages)
    ]
    instruction = _SHORT_INSTRUCTION if spec.answer_mode == "short" else _LONG_INSTRUCTION
    if blocks:
        user = (
            "\n\n".join(blocks)
            + f"\n\nQuestion: {_WS_RE.sub(' ', question).strip()}\n\n{instruction}"
        )
    else:
        user = (
            "No documents were retrieved; answer from your own knowledge.\n\n"
            f"Question: {_WS_RE.sub(' ', question).strip()}\n\n{instruction}"
        )
    return Prompt(system=system.strip(), user=user)


def _as_passage(item: RetrievalResult | Passage) -> Passage:
    return item.passage if isinstance(item, RetrievalResult) else item


def _parse_verdict(reply: str) -> str:
    cleaned = reply.strip().strip(".!\"'`").casefold()
    if cleaned in VERDICT_SCORES:
        return cleaned
    found = {v for v in VERDICT_SCORES if re.search(rf"\b{v}\b", reply, re.IGNORECASE)}
    if len(found) == 1:
        return found.pop()
    raise ProtocolError(f"cannot parse judge verdict from {reply[:200]!r}")


def judge(
    client: ChatClient,
    question: str,
    current_answer: str,
    outdated_answers: Sequence[str],
    response: str,
    template_dir: str | Path | None = None,
) -> Judgment:
    """Judge one response as perfect, missing, or harmful.

    Empty responses and an explicit "Unsure" are Missing without a model call.
    """
    stripped = response.strip()
    if not stripped or stripped.rstrip(".!").casefold() == "unsure":
        return Judgment("missing")
    content = load_template("judge.txt", template_dir).substitute(
        question=_WS_RE.sub(" ", question).strip(),
        current_answer=_WS_RE.sub(" ", current_answer).strip(),
        outdated_answers=" | ".join(_WS_RE.sub(" ", a).strip() for a in outdated_answers),
        response=_WS_RE.sub(" ", response).strip(),
    )
    reply = client.complete([{"role": "user", "content": content}])
    return Judgment(_parse_verdict(reply))


@dataclass(frozen=True)
class AggregateReport:
    perfect_pct: float
    missing_pct: float
    harmful_pct: float
    score_pct: float
    count: int

    @classmethod
    def from_judgments(cls, judgments: Sequence[Judgment]) -> "AggregateReport":
        if not judgments:
            raise DataError("cannot aggregate zero judgments")
        n = len(judgments)
        perfect = 100.0 * sum(1 for j in judgments if j.verdict == "perfect") / n
        missing = 100.0 * sum(1 for j in judgments if j.verdict == "missing") / n
        harmful = 100.0 * sum(1 for j in judgments if j.verdict == "harmful") / n
        return cls(
            perfect_pct=perfect,
            missing_pct=missing,
            harmful_pct=harmful,
            score_pct=100.0 * sum(j.score for j in judgments) / n,
            count=n,
        )

    @classmethod
    def from_percentages(
        cls, perfect_pct: float, missing_pct: float, harmful_pct: float, count: int = 0
    ) -> "AggregateReport":
        total = perfect_pct + missing_pct + harmful_pct
        if abs(total - 100.0) > 0.05:
            raise DataError(f"verdict percentages sum to {total}, expected 100")
        return cls(
            perfect_pct=perfect_pct,
            missing_pct=missing_pct,
            harmful_pct=harmful_pct,
            score_pct=perfect_pct - harmful_pct,
            count=count,
        )

    def to_dict(self) -> dict:
        return {
            "perfect_pct": self.perfect_pct,
            "missing_pct": self.missing_pct,
            "harmful_pct": self.harmful_pct,
            "score_pct": self.score_pct,
            "count": self.count,
        }


def aggregate(judgments: Sequence[Judgment]) -> AggregateReport:
    return AggregateReport.from_judgments(judgments)


def bucket_by_retrieval(labels: Sequence[str]) -> str:
    """Which of R/O made it into the retrieved set."""
    has_r = RELEVANT in labels
    has_o = OUTDATED in labels
    if has_r and has_o:
        return BUCKET_BOTH
    if has_r:
        return BUCKET_RELEVANT
    if has_o:
        return BUCKET_OUTDATED
    return BUCKET_NONE


def _parse_yes_no(reply: str) -> bool:
    word = reply.strip().split()[0].strip(".,!\"'`").casefold() if reply.strip() else ""
    if word == "yes":
        return True
    if word == "no":
        return False
    raise ProtocolError(f"cannot parse yes/no from {reply[:200]!r}")


def assess_timeliness(
    client: ChatClient,
    record: QARecord,
    passages: Sequence[RetrievalResult | Passage],
    current_date: date,
    template_dir: str | Path | None = None,
) -> AwarenessFlags:
    """Two probes in the ideal setting where the context holds both the
    current and the outdated evidence: does the model recognize the current
    answer as up-to-date (a_c) and the outdated answer as not current (a_o)?"""
    labels = [label_passage(_as_passage(p), record) for p in passages]
    if RELEVANT not in labels or OUTDATED not in labels:
        raise DataError(
            "timeliness probes need at least one relevant and one outdated passage"
        )
    template = load_template("timeliness.txt", template_dir)
    documents = "\n\n".join(
        _document_block(i + 1, _as_passage(p)) for i, p in enumerate(passages)
    )

    def probe(statement: str) -> bool:
        content = template.substitute(
            current_date=current_date.isoformat(),
            documents=documents,
            question=_WS_RE.sub(" ", record.question).strip(),
            statement=_WS_RE.sub(" ", statement).strip(),
        )
        return _parse_yes_no(client.complete([{"role": "user", "content": content}]))

    a_c = probe(record.answer)
    a_o = not probe(record.outdated_infos[0].answer)
    return AwarenessFlags(a_c=a_c, a_o=a_o)


def awareness_crosstab(
    results: Sequence[tuple[AwarenessFlags, Judgment]],
) -> list[dict]:
    """Verdict percentages for each (a_c, a_o) combination, in the fixed
    (no/no, no/yes, yes/no, yes/yes) row order."""
    rows = []
    for a_c, a_o in ((False, False), (False, True), (True, False), (True, True)):
        subset = [j for flags, j in results if flags.a_c == a_c and flags.a_o == a_o]
        row: dict = {"a_c": a_c, "a_o": a_o, "count": len(subset)}
        if subset:
            agg = AggregateReport.from_judgments(subset)
            row.update(
                perfect_pct=agg.perfect_pct,
                missing_pct=agg.missing_pct,
                harmful_pct=agg.harmful_pct,
            )
        else:
            row.update(perfect_pct=0.0, missing_pct=0.0, harmful_pct=0.0)
        rows.append(row)
    return rows


def run_experiment(
    records: Sequence[QARecord],
    grid: Sequence[ExperimentSpec],
    answer_client: ChatClient,
    judge_client: ChatClient,
    *,
    pools_by_question: Mapping[str, Mapping[str, Sequence[RetrievalResult]]] | None = None,
    index: SearchIndex | None = None,
    decay_on: bool = True,
    decay_params: DecayParams | None = None,
    defaults: EngineDefaults = EngineDefaults(),
    template_dir: str | Path | None = None,
) -> dict:
    """Run every spec in the grid over the records and aggregate.

    Contexts come either from per-question fixed pools (composition
    experiments) or from searching the index with the question (end-to-end
    mode, top ``defaults.n`` of ``defaults.k`` retrieved). Per-query errors
    skip the query and are counted, never aborting the run.
    """
    if (pools_by_question is None) == (index is None):
        raise ConfigError("provide exactly one of pools_by_question or index")
    rows = []
    for spec in grid:
        judgments: list[Judgment] = []
        skipped = 0
        bucket_counts = {b: 0 for b in BUCKETS}
        bucket_judgments: dict[str, list[Judgment]] = {b: [] for b in BUCKETS}
        for record in records:
            try:
                if pools_by_question is not None:
                    pools = pools_by_question[record.question]
                    context = compose_context(spec, pools)
                else:
                    # End-to-end mode: context is the top-n retrieved passages
                    # reordered per the spec; pool counts do not constrain it.
                    retrieved = search(
                        index,
                        record.question,
                        k=defaults.k,
                        decay_on=decay_on,
                        params=decay_params,
                    )
                    context = order_context(retrieved[: defaults.n], spec.ordering)
                labels = [label_passage(r.passage, record) for r in context]
                bucket = bucket_by_retrieval(labels)
                bucket_counts[bucket] += 1
                prompt = build_prompt(record.question, context, spec, template_dir)
                response = answer_client.complete(prompt.messages())
                judgment = judge(
                    judge_client,
                    record.question,
                    record.answer,
                    [o.answer for o in record.outdated_infos],
                    response,
                    template_dir,
                )
                judgments.append(judgment)
                bucket_judgments[bucket].append(judgment)
            except (TransportError, ProtocolError, KeyError, DataError):
                skipped += 1
        row: dict = {"spec": spec.to_dict(), "label": spec.label(), "skipped": skipped}
        if judgments:
            row.update(aggregate(judgments).to_dict())
        row["buckets"] = dict(bucket_counts)
        row["bucket_scores"] = {
            b: AggregateReport.from_judgments(js).to_dict()
            for b, js in bucket_judgments.items()
            if js
        }
        rows.append(row)
    return {
        "header": {
            "k": defaults.k,
            "c_s": defaults.c_s,
            "c_o": defaults.c_o,
            "n": defaults.n,
        },
        "rows": rows,
    }


def render_report_text(report: dict) -> str:
    """Aligned-text rendering mirroring the Per./Mis./Har./Score columns."""
    header = report["header"]
    lines = [
        "run defaults: k={k} c_s={c_s} c_o={c_o} n={n}".format(**header),
        f"{'condition':<34} {'Per.':>7} {'Mis.':>7} {'Har.':>7} {'Score':>7} {'skip':>5}",
    ]
    for row in report["rows"]:
        if "perfect_pct" in row:
            lines.append(
                f"{row['label']:<34} {row['perfect_pct']:>7.2f} "
                f"{row['missing_pct']:>7.2f} {row['harmful_pct']:>7.2f} "
                f"{row['score_pct']:>7.2f} {row['skipped']:>5}"
            )
        else:
            lines.append(f"{row['label']:<34} {'-':>7} {'-':>7} {'-':>7} {'-':>7} {row['skipped']:>5}")
    return "\n".join(lines)


@dataclass
class OfflineAnswerClient:
    """Deterministic offline answering backend: trusts the first retrieved
    document and echoes its text; with no documents it stays unsure."""

    calls: int = 0

    def complete(
        self,
        messages: list[dict],
        temperature: float | None = None,
        max_tokens: int | None = None,
    ) -> str:
        self.calls += 1
        content = messages[-1]["content"]
        docs = _DOC_LINE_RE.findall(content)
        return docs[0] if docs else "Unsure"


@dataclass
class OfflineJudgeClient:
    """Deterministic offline judge: perfect when the response contains the
    current answer, harmful when it contains only an outdated one, else
    missing."""

    calls: int = 0

    def complete(
        self,
        messages: list[dict],
        temperature: float | None = None,
        max_tokens: int | None = None,
    ) -> str:
        self.calls += 1
        fields = parse_tagged_lines(messages[-1]["content"])
        try:
            response = normalize_for_containment(fields["response"])
            current = normalize_for_containment(fields["current_answer"])
            outdated = [
                normalize_for_containment(a)
                for a in fields.get("outdated_answers", "").split(" | ")
                if a.strip()
            ]
        except KeyError as exc:
            raise ProtocolError(f"offline judge missing field: {exc}") from exc
        if current and current in response:
            return "perfect"
        if any(o in response for o in outdated):
            return "harmful"
        return "missing"
