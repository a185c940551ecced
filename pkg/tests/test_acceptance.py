"""Acceptance suite: one test per criterion, each printing a pass line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the checklist.
"""

from __future__ import annotations

import json
import math
import random
import socket
import time
from contextlib import contextmanager
from datetime import date, timedelta
from pathlib import Path

import pytest

from factdrift.clients import MockChatClient
from factdrift.cli import main
from factdrift.dataset_store import QARecord, load_dataset, save_dataset
from factdrift.diffcore import DELETE, EQUAL, INSERT, diff_sequences
from factdrift.eval_harness import AggregateReport
from factdrift.filters import (
    FrequencyTable,
    RULE_PRONOUN,
    RULE_PURE_ADD_DELETE,
    RULE_SPELLING,
    apply_heuristics,
    build_frequency_table,
    filter_batch,
)
from factdrift.qa_pipeline import DiscardRecord, generate_with_retry, update_answer
from factdrift.screening import eval_classifier
from factdrift.search_sim import (
    DecayParams,
    Passage,
    build_index,
    gaussian_decay,
    hit_rate_at_k,
    hit_rate_table,
    result_keys,
    search,
    text_terms,
)
from tests.conftest import make_pair

DATA = Path(__file__).parent / "data"
SYNTHETIC = DATA / "synthetic"


def passline(n: int, text: str) -> None:
    print(f"[PASS] criterion {n:2d}: {text}")


@contextmanager
def no_network():
    """Fail loudly if anything attempts a socket connection."""

    def blocked(*args, **kwargs):
        raise AssertionError("network access attempted during offline run")

    original = socket.socket.connect
    socket.socket.connect = blocked
    try:
        yield
    finally:
        socket.socket.connect = original


# --- criterion 1: Myers diff vs DP oracle -----------------------------------


def dp_edit_distance(a, b):
    n, m = len(a), len(b)
    dp = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n + 1):
        dp[i][0] = i
    for j in range(m + 1):
        dp[0][j] = j
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            if a[i - 1] == b[j - 1]:
                dp[i][j] = dp[i - 1][j - 1]
            else:
                dp[i][j] = min(dp[i - 1][j], dp[i][j - 1]) + 1
    return dp[n][m]


def test_criterion_01_diff_oracle():
    rng = random.Random(20240601)
    started = time.monotonic()
    checked = 0
    for _ in range(1200):
        a = [rng.choice("abcd") for _ in range(rng.randint(0, 12))]
        b = [rng.choice("abcd") for _ in range(rng.randint(0, 12))]
        ops = diff_sequences(a, b)
        cost = sum(len(op.items) for op in ops if op.kind != EQUAL)
        assert cost == dp_edit_distance(a, b)
        rebuilt, i = [], 0
        for op in ops:
            if op.kind == EQUAL:
                rebuilt.extend(a[i : i + len(op.items)])
                i += len(op.items)
            elif op.kind == DELETE:
                i += len(op.items)
            else:
                assert op.kind == INSERT
                rebuilt.extend(op.items)
        assert i == len(a)
        assert rebuilt == b
        checked += 1
    elapsed = time.monotonic() - started
    assert checked >= 1000
    assert elapsed < 10.0
    passline(1, f"Myers script == DP edit distance on {checked} random pairs "
                f"({elapsed:.2f}s)")


# --- criterion 2: heuristic-filter fixtures ---------------------------------


def test_criterion_02_heuristic_filter_fixtures():
    table = FrequencyTable(threshold=50)
    pronoun = make_pair("Later he scored the winner.", "Later James scored the winner.")
    verdict = apply_heuristics(pronoun, table)
    assert not verdict.keep and verdict.reasons == (RULE_PRONOUN,)

    spelling = make_pair("They recieve funds yearly.", "They receive funds yearly.")
    verdict = apply_heuristics(spelling, table)
    assert not verdict.keep and verdict.reasons == (RULE_SPELLING,)

    numeric = make_pair("The team scored 5 goals.", "The team scored 6 goals.")
    assert apply_heuristics(numeric, table).keep

    addition = make_pair("won the cup", "won the big cup")
    verdict = apply_heuristics(addition, table)
    assert not verdict.keep and verdict.reasons == (RULE_PURE_ADD_DELETE,)

    rng = random.Random(4242)
    words = ["alpha", "he", "she", "5", "beta", "recieve", "receive", "gamma"]
    for _ in range(100):
        batch = []
        for i in range(rng.randint(0, 10)):
            old = " ".join(rng.choice(words) for _ in range(rng.randint(1, 6))) + "."
            new = " ".join(rng.choice(words) for _ in range(rng.randint(1, 6))) + "."
            if old == new:
                new = old[:-1] + " tail."
            batch.append(make_pair(old, new, article_id=f"r{i}"))
        freq = build_frequency_table(batch, threshold=4)
        kept, dropped, report = filter_batch(batch, freq)
        assert {id(p) for p in kept} <= {id(p) for p in batch}
        assert len(kept) + len(dropped) == len(batch)
    passline(2, "B.1 rule fixtures exact; filter output subset of input on "
                "100 random batches")


# --- criterion 3: score identity over the transcribed tables ----------------

# (perfect, missing, harmful, score) for every transcribed row; 15 rows from
# the distracting-only table, 45 from the ordering table.
DISTRACTING_TABLE = [
    (93.24, 2.64, 4.12, 89.12), (90.34, 5.02, 4.64, 85.70), (79.82, 16.67, 3.51, 76.31),
    (92.99, 2.76, 4.25, 88.74), (89.43, 5.63, 4.94, 84.49), (77.18, 18.77, 4.05, 73.13),
    (92.73, 2.71, 4.56, 88.17), (88.40, 6.36, 5.24, 83.16), (76.21, 19.74, 4.05, 72.16),
    (92.85, 2.63, 4.52, 88.33), (87.87, 6.89, 5.24, 82.63), (76.14, 19.42, 4.44, 71.70),
    (92.57, 2.84, 4.59, 87.98), (86.91, 7.12, 5.97, 80.94), (74.86, 20.52, 4.62, 70.24),
]

ORDERING_TABLE = [
    # score-descending ordering
    (83.00, 6.95, 10.05, 72.95), (68.13, 14.67, 17.20, 50.93), (55.61, 22.71, 21.68, 33.93),
    (81.13, 4.74, 14.13, 67.00), (66.87, 14.44, 18.69, 48.18), (54.46, 25.65, 19.89, 34.57),
    (80.83, 4.56, 14.61, 66.22), (68.53, 12.08, 19.39, 49.14), (53.73, 26.37, 19.90, 33.83),
    (80.44, 4.17, 15.39, 65.05), (68.45, 11.55, 20.00, 48.45), (53.90, 25.58, 20.52, 33.38),
    (79.77, 4.34, 15.89, 63.88), (69.99, 9.26, 20.75, 49.24), (54.29, 24.86, 20.85, 33.44),
    # date-descending ordering
    (90.05, 3.78, 6.17, 83.88), (71.32, 12.91, 15.77, 55.55), (42.06, 23.64, 34.30, 7.76),
    (88.39, 2.67, 8.94, 79.45), (70.15, 8.74, 21.11, 49.04), (41.42, 23.85, 34.73, 6.69),
    (87.98, 2.60, 9.42, 78.56), (68.65, 7.08, 24.27, 44.38), (40.77, 23.38, 35.85, 4.92),
    (87.12, 2.70, 10.18, 76.94), (66.09, 6.13, 27.78, 38.31), (39.77, 21.79, 38.44, 1.33),
    (86.17, 2.72, 11.11, 75.06), (63.97, 4.52, 31.51, 32.46), (37.92, 21.39, 40.69, -2.77),
    # date-ascending ordering
    (75.07, 10.90, 14.03, 61.04), (63.74, 17.09, 19.17, 44.57), (70.04, 21.46, 8.50, 61.54),
    (73.50, 6.99, 19.51, 53.99), (62.01, 16.46, 21.53, 40.48), (63.88, 24.39, 11.73, 52.15),
    (74.44, 5.51, 20.05, 54.39), (64.21, 13.16, 22.63, 41.58), (61.71, 24.87, 13.42, 48.29),
    (73.97, 5.25, 20.78, 53.19), (64.79, 12.66, 22.55, 42.24), (61.63, 23.95, 14.42, 47.21),
    (73.23, 4.72, 22.05, 51.18), (64.95, 9.97, 25.08, 39.87), (60.40, 23.20, 16.40, 44.00),
]


def test_criterion_03_score_identity_on_all_transcribed_rows():
    rows = DISTRACTING_TABLE + ORDERING_TABLE
    assert len(rows) == 60
    for perfect, missing, harmful, expected_score in rows:
        report = AggregateReport.from_percentages(perfect, missing, harmful)
        assert report.score_pct == pytest.approx(perfect - harmful, abs=1e-9)
        assert report.score_pct == pytest.approx(expected_score, abs=0.01)
    # The two rows called out explicitly:
    assert AggregateReport.from_percentages(93.24, 2.64, 4.12).score_pct == pytest.approx(89.12, abs=0.01)
    assert AggregateReport.from_percentages(37.92, 21.39, 40.69).score_pct == pytest.approx(-2.77, abs=0.01)
    passline(3, f"score == perfect - harmful on all {len(rows)} transcribed rows")


# --- criterion 4: BM25 vs direct formula ------------------------------------


def bm25_oracle(texts, query_terms, target, k1=1.2, b=0.75):
    term_lists = [text_terms(t) for t in texts]
    n = len(term_lists)
    avg = sum(len(ts) for ts in term_lists) / n
    dl = len(term_lists[target])
    score = 0.0
    for term in query_terms:
        tf = term_lists[target].count(term)
        if tf == 0:
            continue
        df = sum(1 for ts in term_lists if term in ts)
        idf = math.log(1.0 + (n - df + 0.5) / (df + 0.5))
        score += idf * (tf * (k1 + 1.0)) / (tf + k1 * (1.0 - b + b * dl / avg))
    return score


def random_corpus(rng, max_passages=100):
    vocab = [f"term{i}" for i in range(40)]
    texts = [
        " ".join(rng.choice(vocab) for _ in range(rng.randint(2, 60)))
        for _ in range(rng.randint(2, max_passages))
    ]
    passages = [
        Passage(
            doc_id=f"d{i}",
            version_date=date(2024, 6, 1),
            article_title="T",
            text=t,
            token_count=len(t.split()),
            passage_index=0,
        )
        for i, t in enumerate(texts)
    ]
    return texts, passages, vocab


def test_criterion_04_bm25_oracle():
    rng = random.Random(77)
    for _ in range(50):
        texts, passages, vocab = random_corpus(rng)
        index = build_index(passages)
        query_terms = [rng.choice(vocab) for _ in range(rng.randint(1, 20))]
        for target in rng.sample(range(len(texts)), min(5, len(texts))):
            assert index.bm25(query_terms, passages[target].key) == pytest.approx(
                bm25_oracle(texts, query_terms, target), abs=1e-9
            )
    passline(4, "index BM25 == direct formula on 50 random corpora (1e-9)")


# --- criterion 5: decay properties ------------------------------------------


def test_criterion_05_decay_properties():
    rng = random.Random(55)
    origin = date(2024, 11, 1)
    for _ in range(100):
        scale = rng.randint(10, 800)
        lam = rng.uniform(0.05, 0.95)
        offset = rng.choice([0, 0, rng.randint(1, 30)])
        params = DecayParams(
            origin=origin, scale_days=scale, decay_at_scale=lam, offset_days=offset
        )
        assert gaussian_decay(origin, params) == 1.0
        at_scale = gaussian_decay(origin - timedelta(days=scale + offset), params)
        assert at_scale == pytest.approx(lam, abs=1e-12)
        # Strict decrease tested over the resolvable regime (the multiplier
        # underflows to the float floor tens of scale-lengths out).
        ages = sorted(rng.sample(range(offset + 1, offset + 5 * scale), 20))
        values = [gaussian_decay(origin - timedelta(days=a), params) for a in ages]
        assert all(x > y for x, y in zip(values, values[1:]))
        assert all(0.0 < v <= 1.0 for v in values)
        deep_tail = gaussian_decay(origin - timedelta(days=offset + 200 * scale), params)
        assert 0.0 < deep_tail <= 1.0
        # A newer exact duplicate must always outrank its older copy.
        text = "identical duplicated passage text"
        older = origin - timedelta(days=rng.randint(100, 900))
        newer = older + timedelta(days=rng.randint(1, 90))
        passages = [
            Passage("doc", older, "T", text, 4, 0),
            Passage("doc", newer, "T", text, 4, 0),
        ]
        index = build_index(passages)
        results = search(index, text, k=2, decay_on=True, params=params)
        assert results[0].passage.version_date == newer
        assert results[0].score >= results[1].score
        if gaussian_decay(newer, params) > gaussian_decay(older, params):
            assert results[0].score > results[1].score
    passline(5, "decay exact at origin/scale, strictly decreasing, newer duplicates first (100 trials)")


# --- criterion 6: hit-rate monotonicity and oracle --------------------------


def test_criterion_06_hit_rate_monotone_and_oracle():
    # Bundled synthetic 200-query run over a versioned corpus.
    rng = random.Random(606)
    shared = [f"common{i}" for i in range(5)]
    passages = []
    for i in range(300):
        body = " ".join(rng.choice(shared) for _ in range(rng.randint(3, 12)))
        passages.append(
            Passage(
                doc_id=f"d{i}",
                version_date=date(2024, rng.randint(1, 10), 1),
                article_title="T",
                text=f"{body} special{i} marker",
                token_count=10,
                passage_index=0,
            )
        )
    index = build_index(passages)
    run = {}
    targets = {}
    for q in range(200):
        target = rng.randrange(300)
        # Some queries name the target precisely, others only vaguely.
        if q % 3 == 0:
            query = f"special{target} marker"
        elif q % 3 == 1:
            query = f"marker {rng.choice(shared)}"
        else:
            query = " ".join(rng.choice(shared) for _ in range(3))
        run[f"q{q}"] = result_keys(search(index, query, k=60))
        targets[f"q{q}"] = {passages[target].key}
    table = hit_rate_table(run, targets, ks=(5, 10, 20, 50))
    assert table[5] <= table[10] <= table[20] <= table[50]
    assert len(run) == 200

    # Brute-force oracle equality on small corpora.
    for trial in range(10):
        texts, small, vocab = random_corpus(rng, max_passages=100)
        small_index = build_index(small)
        oracle_run, fast_run, small_targets = {}, {}, {}
        for q in range(12):
            query = " ".join(rng.choice(vocab) for _ in range(rng.randint(1, 5)))
            query_terms = text_terms(query)
            scored = []
            for pos, passage in enumerate(small):
                s = bm25_oracle(texts, query_terms, pos)
                if s > 0:
                    scored.append((s, passage))
            scored.sort(
                key=lambda x: (
                    -x[0],
                    -x[1].version_date.toordinal(),
                    x[1].doc_id,
                    x[1].passage_index,
                )
            )
            oracle_run[f"q{q}"] = [p.key for _, p in scored]
            fast_run[f"q{q}"] = result_keys(search(small_index, query, k=len(small)))
            small_targets[f"q{q}"] = {small[rng.randrange(len(small))].key}
        for k in (1, 3, 5, 10, 50):
            assert hit_rate_at_k(fast_run, small_targets, k) == pytest.approx(
                hit_rate_at_k(oracle_run, small_targets, k)
            )
    passline(6, "HR@5<=HR@10<=HR@20<=HR@50 on the 200-query run; equals brute-force oracle")


# --- criterion 7: QA pipeline policy and example fixtures -------------------

GOOD_QA = json.dumps(
    {"question": "Who is the mayor?", "old_answer": "Alice", "new_answer": "Brian"}
)
PASS_REVIEW = (
    '{"answer_accuracy": true, "question_clarity": true,'
    ' "question_completeness": true, "temporal_independence": true}'
)
FAIL_REVIEW = (
    '{"answer_accuracy": false, "question_clarity": true,'
    ' "question_completeness": true, "temporal_independence": true}'
)
NOT_SAME = '{"same_answer": false}'


def generation_calls(client):
    return len([c for c in client.calls if "marked_diff" in c[0]["content"]])


def test_criterion_07_qa_policy_and_examples(tmp_path):
    pair = make_pair("The mayor is Alice.", "The mayor is Brian.")
    # Passing on attempt k means exactly k generation calls, capped at 3.
    for attempts_to_pass in (1, 2, 3):
        script = ["not json"] * (attempts_to_pass - 1) + [GOOD_QA, PASS_REVIEW, NOT_SAME]
        client = MockChatClient(responses=list(script))
        cand = generate_with_retry(client, pair, max_attempts=3)
        assert cand is not None
        assert generation_calls(client) == attempts_to_pass
    # Never passing: exactly 3 generation calls, then a discard.
    client = MockChatClient(responses=[GOOD_QA, FAIL_REVIEW, NOT_SAME] * 3)
    discards: list[DiscardRecord] = []
    assert generate_with_retry(client, pair, max_attempts=3, discards=discards) is None
    assert generation_calls(client) == 3
    assert len(discards) == 1 and discards[0].attempts == 3

    # Examples 1-3 round-trip byte-identically through the store.
    examples_path = DATA / "qa_examples.jsonl"
    records = load_dataset(examples_path)
    out = tmp_path / "examples.jsonl"
    save_dataset(records, out)
    assert out.read_bytes() == examples_path.read_bytes()

    # Replaying Example 1's October -> November update rebuilds its chain.
    otago_after = records[0]
    before_dict = otago_after.to_dict()
    before_dict["answer"] = otago_after.outdated_infos[0].answer
    before_dict["evidence"] = otago_after.outdated_infos[0].evidence
    before_dict["last_modified_time"] = "2024-10-01"
    before_dict["outdated_infos"] = before_dict["outdated_infos"][1:]
    before = QARecord.from_dict(before_dict)
    pair = make_pair(
        otago_after.outdated_infos[0].evidence,
        otago_after.evidence,
        article_id="w-otago",
        title="Otago",
        old_date=date(2024, 10, 1),
        new_date=date(2024, 11, 1),
    )
    client = MockChatClient(
        responses=[json.dumps({"answer": otago_after.answer}), PASS_REVIEW, NOT_SAME]
    )
    assert update_answer(client, before, pair) == otago_after
    passline(7, "retry budget exact, discards recorded, Examples 1-3 round-trip, "
                "Example 1 update replay")


# --- criterion 8: offline end-to-end run ------------------------------------

CONFIG_TEXT = """\
seed = 7
filter_threshold = 6
classifier_backend = keep_all
chat_backend = offline
judge_backend = offline
current_date = 2024-11-01
"""


def run_cli(workdir: Path, *args: str) -> int:
    return main(
        ["--config", str(workdir / "factdrift.conf"), "--workdir", str(workdir)]
        + list(args)
    )


def run_full_pipeline(workdir: Path) -> None:
    (workdir / "factdrift.conf").write_text(CONFIG_TEXT)
    for snap in ("snapshot-2024-06-01.jsonl", "snapshot-2024-07-01.jsonl"):
        assert run_cli(
            workdir, "ingest",
            "--snapshot", str(SYNTHETIC / snap),
            "--out", str(workdir / snap),
        ) == 0
    assert run_cli(
        workdir, "extract",
        "--old", str(workdir / "snapshot-2024-06-01.jsonl"),
        "--new", str(workdir / "snapshot-2024-07-01.jsonl"),
        "--out", str(workdir / "pairs.jsonl"),
    ) == 0
    assert run_cli(
        workdir, "filter",
        "--pairs", str(workdir / "pairs.jsonl"),
        "--out", str(workdir / "kept.jsonl"),
        "--dropped", str(workdir / "dropped.jsonl"),
    ) == 0
    assert run_cli(
        workdir, "screen",
        "--pairs", str(workdir / "kept.jsonl"),
        "--out", str(workdir / "screened.jsonl"),
    ) == 0
    assert run_cli(
        workdir, "generate",
        "--pairs", str(workdir / "screened.jsonl"),
        "--dataset", str(workdir / "dataset.jsonl"),
        "--discards", str(workdir / "discards.jsonl"),
    ) == 0


def test_criterion_08_end_to_end_offline_recall(tmp_path):
    manifest = json.loads((SYNTHETIC / "manifest.json").read_text())
    started = time.monotonic()
    with no_network():
        run_full_pipeline(tmp_path)
    elapsed = time.monotonic() - started
    assert elapsed < 60.0

    screened = [
        json.loads(line)
        for line in (tmp_path / "screened.jsonl").read_text().splitlines()
    ]
    kept_by_id = {row["article_id"] for row in screened}
    factual = {entry["id"] for entry in manifest["factual"]}
    assert kept_by_id == factual  # 100% recall of the 12 seeded changes
    assert len(screened) == 12
    for row in screened:
        seeded = next(e for e in manifest["factual"] if e["id"] == row["article_id"])
        assert row["old_sentence"]["text"] == seeded["old"]
        assert row["new_sentence"]["text"] == seeded["new"]

    dropped = [
        json.loads(line)
        for line in (tmp_path / "dropped.jsonl").read_text().splitlines()
    ]
    decoy_ids = {
        e["id"]
        for group in ("pronoun", "spelling", "frequent")
        for e in manifest[group]
    }
    assert {row["article_id"] for row in dropped} == decoy_ids
    records = load_dataset(tmp_path / "dataset.jsonl")
    assert len(records) == 12
    passline(8, f"offline pipeline: 12/12 seeded changes recovered, "
                f"{len(decoy_ids)} decoys dropped, {elapsed:.1f}s, no network")


# --- criterion 9: classifier metrics ----------------------------------------


def test_criterion_09_classifier_metric_fixtures():
    predictions = [True] * 2 + [True] + [False] + [False] * 6
    labels = [True] * 2 + [False] + [True] + [False] * 6
    metrics = eval_classifier(predictions, labels)
    assert metrics.confusion == {"tp": 2, "fp": 1, "fn": 1, "tn": 6}
    assert metrics.accuracy == pytest.approx(0.800, abs=1e-9)
    assert metrics.f1 == pytest.approx(0.6667, abs=1e-4)
    assert metrics.f1 == pytest.approx(2 / 3, abs=1e-9)
    perfect = eval_classifier([True, False], [True, False])
    assert (perfect.accuracy, perfect.f1) == (1.0, 1.0)
    # The reported 96.8% accuracy / 95.1% F1 of the fine-tuned screening model
    # is a live-mode reference only; it needs the real classifier behind the
    # HTTP backend and is deliberately not gated here.
    passline(9, "confusion-matrix fixtures exact (acc 0.800, f1 0.6667)")


# --- criterion 10: determinism ----------------------------------------------


def test_criterion_10_every_subcommand_deterministic(tmp_path):
    outputs = []
    for name in ("one", "two"):
        workdir = tmp_path / name
        workdir.mkdir()
        run_full_pipeline(workdir)
        # update cycle against a third snapshot derived deterministically
        august = workdir / "snapshot-2024-08-01.jsonl"
        august.write_text(
            (workdir / "snapshot-2024-07-01.jsonl")
            .read_text()
            .replace("Brian Soto", "Carla Ruiz")
        )
        assert run_cli(
            workdir, "extract",
            "--old", str(workdir / "snapshot-2024-07-01.jsonl"),
            "--new", str(august),
            "--out", str(workdir / "pairs2.jsonl"),
        ) == 0
        assert run_cli(
            workdir, "update",
            "--pairs", str(workdir / "pairs2.jsonl"),
            "--dataset", str(workdir / "dataset.jsonl"),
        ) == 0
        assert run_cli(
            workdir, "stats",
            "--dataset", str(workdir / "dataset.jsonl"),
            "--out", str(workdir / "stats.json"),
        ) == 0
        corpus_rows = []
        for snap, day in (
            ("snapshot-2024-06-01.jsonl", "2024-06-01"),
            ("snapshot-2024-07-01.jsonl", "2024-07-01"),
        ):
            for line in (workdir / snap).read_text().splitlines():
                obj = json.loads(line)
                corpus_rows.append(
                    json.dumps(
                        {
                            "doc_id": obj["id"],
                            "title": obj["title"],
                            "version_date": day,
                            "text": obj["text"],
                        },
                        ensure_ascii=False,
                    )
                )
        (workdir / "corpus.jsonl").write_text("\n".join(corpus_rows) + "\n")
        assert run_cli(
            workdir, "index",
            "--corpus", str(workdir / "corpus.jsonl"),
            "--out", str(workdir / "index.json"),
        ) == 0
        assert run_cli(
            workdir, "search",
            "--index", str(workdir / "index.json"),
            "--query", "mayor of Hillvale",
            "--out", str(workdir / "hits.json"),
        ) == 0
        assert run_cli(
            workdir, "evaluate",
            "--dataset", str(workdir / "dataset.jsonl"),
            "--index", str(workdir / "index.json"),
            "--out", str(workdir / "report.json"),
        ) == 0
        assert run_cli(workdir, "report", "--out", str(workdir / "stages.txt")) == 0
        outputs.append(
            {
                out_name: (workdir / out_name).read_bytes()
                for out_name in (
                    "snapshot-2024-06-01.jsonl",
                    "snapshot-2024-07-01.jsonl",
                    "pairs.jsonl",
                    "kept.jsonl",
                    "dropped.jsonl",
                    "screened.jsonl",
                    "dataset.jsonl",
                    "discards.jsonl",
                    "pairs2.jsonl",
                    "stats.json",
                    "index.json",
                    "hits.json",
                    "report.json",
                    "stages.txt",
                    "stage_counts.json",
                )
            }
        )
    assert outputs[0] == outputs[1]
    passline(10, "all seeded subcommands byte-identical across fresh reruns")
