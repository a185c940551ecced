from __future__ import annotations

import json
from datetime import date
from pathlib import Path

import pytest

from factdrift.clients import MockChatClient
from factdrift.dataset_store import EvidenceIndex, load_dataset
from factdrift.errors import ConfigError, ProtocolError
from factdrift.qa_pipeline import (
    CandidateQA,
    DiscardRecord,
    OfflineQAClient,
    generate_qa,
    generate_with_retry,
    match_existing,
    record_from_candidate,
    review_qa,
    update_answer,
)

EXAMPLES = Path(__file__).parent / "data" / "qa_examples.jsonl"

GOOD_QA = json.dumps(
    {
        "question": "Who is the mayor?",
        "old_answer": "Alice",
        "new_answer": "Brian",
    }
)
ALL_PASS_REVIEW = (
    '{"answer_accuracy": true, "question_clarity": true,'
    ' "question_completeness": true, "temporal_independence": true}'
)
DIFFERENT_ANSWERS = '{"same_answer": false}'
SAME_ANSWERS = '{"same_answer": true}'


def passing_script():
    return [GOOD_QA, ALL_PASS_REVIEW, DIFFERENT_ANSWERS]


def test_generate_parses_mock_payload(pair_factory):
    pair = pair_factory("The mayor is Alice.", "The mayor is Brian.")
    client = MockChatClient(responses=[GOOD_QA])
    cand = generate_qa(client, pair)
    assert (cand.question, cand.old_answer, cand.new_answer) == (
        "Who is the mayor?",
        "Alice",
        "Brian",
    )
    prompt = client.calls[0][0]["content"]
    assert "The mayor is Alice." in prompt
    assert "The mayor is Brian." in prompt
    assert "~~Alice~~" in prompt and "__Brian__" in prompt


def test_generate_parses_title_holder_shaped_payload(pair_factory):
    # Parsing fixture shaped like the Master of the Horse example: a current
    # office holder superseding the previous one.
    pair = pair_factory(
        "The Master of the Horse is Lord de Mauley.",
        "The current Master of the Horse is the Lord Ashton of Hyde.",
        article_id="w-moth",
        title="Master of the Horse",
    )
    payload = json.dumps(
        {
            "question": "Who is the current Master of the Horse?",
            "old_answer": "Lord de Mauley",
            "new_answer": "The Lord Ashton of Hyde",
        }
    )
    cand = generate_qa(MockChatClient(responses=[payload]), pair)
    assert cand.question == "Who is the current Master of the Horse?"
    record = record_from_candidate(cand)
    from factdrift.dataset_store import validate_record

    validate_record(record, check_binding=True)
    assert record.outdated_infos[0].answer == "Lord de Mauley"


def test_generate_prose_without_fields_is_parse_error(pair_factory):
    pair = pair_factory("a b.", "a c.")
    client = MockChatClient(responses=["I cannot produce JSON, sorry."])
    with pytest.raises(ProtocolError):
        generate_qa(client, pair)


def test_generate_rejects_empty_fields(pair_factory):
    pair = pair_factory("a b.", "a c.")
    client = MockChatClient(
        responses=[json.dumps({"question": "q", "old_answer": "", "new_answer": "x"})]
    )
    with pytest.raises(ProtocolError):
        generate_qa(client, pair)


def test_review_all_checks_pass(pair_factory):
    cand = CandidateQA("q?", "Alice", "Brian", pair_factory("x Alice.", "x Brian."))
    client = MockChatClient(responses=[ALL_PASS_REVIEW, DIFFERENT_ANSWERS])
    outcome = review_qa(client, cand)
    assert outcome.passed and outcome.failed_checks == ()
    assert client.call_count == 2


def test_review_verbatim_equal_answers_short_circuits(pair_factory):
    cand = CandidateQA("q?", "Same", "Same", pair_factory("x Same.", "y Same."))
    client = MockChatClient(responses=[])
    outcome = review_qa(client, cand)
    assert outcome.failed_checks == ("same_answer",)
    assert client.call_count == 0  # no model round trip


def test_review_single_failed_check_passthrough(pair_factory):
    cand = CandidateQA("q?", "Alice", "Brian", pair_factory("x Alice.", "x Brian."))
    failing = (
        '{"answer_accuracy": true, "question_clarity": true,'
        ' "question_completeness": true, "temporal_independence": false}'
    )
    client = MockChatClient(responses=[failing, DIFFERENT_ANSWERS])
    outcome = review_qa(client, cand)
    assert outcome.failed_checks == ("temporal_independence",)


def test_review_semantic_same_answer_fails(pair_factory):
    cand = CandidateQA("q?", "Alice", "alice  smith", pair_factory("x Alice.", "x alice smith."))
    client = MockChatClient(responses=[ALL_PASS_REVIEW, SAME_ANSWERS])
    outcome = review_qa(client, cand)
    assert outcome.failed_checks == ("same_answer",)


def test_retry_passes_first_attempt_with_one_generation_call(pair_factory):
    pair = pair_factory("The mayor is Alice.", "The mayor is Brian.")
    client = MockChatClient(responses=passing_script())
    cand = generate_with_retry(client, pair)
    assert cand is not None
    gen_calls = [c for c in client.calls if "marked_diff" in c[0]["content"]]
    assert len(gen_calls) == 1


def test_retry_three_failures_discards_with_exactly_three_attempts(pair_factory):
    pair = pair_factory("The mayor is Alice.", "The mayor is Brian.")
    bad_review = (
        '{"answer_accuracy": false, "question_clarity": true,'
        ' "question_completeness": true, "temporal_independence": true}'
    )
    client = MockChatClient(
        responses=[GOOD_QA, bad_review, DIFFERENT_ANSWERS] * 3
    )
    discards: list[DiscardRecord] = []
    cand = generate_with_retry(client, pair, max_attempts=3, discards=discards)
    assert cand is None
    gen_calls = [c for c in client.calls if "marked_diff" in c[0]["content"]]
    assert len(gen_calls) == 3
    assert len(discards) == 1
    assert discards[0].failed_checks == ("answer_accuracy",)
    assert discards[0].attempts == 3


def test_retry_fail_twice_then_pass_uses_three_attempts(pair_factory):
    pair = pair_factory("The mayor is Alice.", "The mayor is Brian.")
    responses = ["not json", "still not json"] + passing_script()
    client = MockChatClient(responses=responses)
    cand = generate_with_retry(client, pair, max_attempts=3)
    assert cand is not None
    gen_calls = [c for c in client.calls if "marked_diff" in c[0]["content"]]
    assert len(gen_calls) == 3


def test_retry_validates_max_attempts(pair_factory):
    with pytest.raises(ConfigError):
        generate_with_retry(MockChatClient(), pair_factory("a b.", "a c."), max_attempts=0)


def test_record_from_candidate_field_mapping(pair_factory):
    pair = pair_factory(
        "The mayor is Alice.",
        "The mayor is Brian.",
        article_id="town",
        title="Town",
    )
    record = record_from_candidate(CandidateQA("Who is the mayor?", "Alice", "Brian", pair))
    assert record.answer == "Brian"
    assert record.evidence == "The mayor is Brian."
    assert record.last_modified_time == pair.new_date
    assert record.outdated_infos[0].answer == "Alice"
    assert record.outdated_infos[0].evidence == "The mayor is Alice."
    assert record.outdated_infos[0].last_modified_time == pair.old_date
    assert record.document.id == "town" and record.document.title == "Town"


def test_match_existing_byte_equal_and_normalized(pair_factory):
    records = load_dataset(EXAMPLES)
    index = EvidenceIndex.build(records)
    horse = records[1]
    exact = pair_factory(
        horse.evidence, "The current Master of the Horse is Lord Somewhere.",
        article_id="w-moth",
    )
    assert match_existing(exact, index) == 1
    spaced = pair_factory(
        "The current Master of the Horse is  the Lord Ashton of Hyde.",
        "irrelevant new text.",
        article_id="w-moth",
    )
    assert match_existing(spaced, index) == 1
    unrelated = pair_factory("Nothing matches here.", "Still nothing.", article_id="w-moth")
    assert match_existing(unrelated, index) is None


def update_script(new_answer: str) -> list[str]:
    return [json.dumps({"answer": new_answer}), ALL_PASS_REVIEW, DIFFERENT_ANSWERS]


def test_update_replays_otago_example(pair_factory):
    records = load_dataset(EXAMPLES)
    otago_after = records[0]
    # Reconstruct the pre-update record (current answer as of 2024-10-01).
    before = json.loads(json.dumps(otago_after.to_dict()))
    before["answer"] = otago_after.outdated_infos[0].answer
    before["evidence"] = otago_after.outdated_infos[0].evidence
    before["last_modified_time"] = "2024-10-01"
    before["outdated_infos"] = before["outdated_infos"][1:]
    from factdrift.dataset_store import QARecord

    record = QARecord.from_dict(before)

    pair = pair_factory(
        otago_after.outdated_infos[0].evidence,
        otago_after.evidence,
        article_id="w-otago",
        title="Otago",
        old_date=date(2024, 10, 1),
        new_date=date(2024, 11, 1),
    )
    client = MockChatClient(responses=update_script(otago_after.answer))
    updated = update_answer(client, record, pair)
    assert updated == otago_after


def test_update_same_answer_leaves_record_untouched(pair_factory):
    records = load_dataset(EXAMPLES)
    record = records[1]
    pair = pair_factory(
        record.evidence,
        "The current Master of the Horse is the Lord Ashton of Hyde today.",
        article_id="w-moth",
        old_date=date(2024, 7, 1),
        new_date=date(2024, 8, 1),
    )
    client = MockChatClient(
        responses=[json.dumps({"answer": record.answer})] * 3
    )
    discards: list[DiscardRecord] = []
    result = update_answer(client, record, pair, discards=discards)
    assert result is None
    assert records[1] == record  # untouched
    assert discards[0].failed_checks == ("same_answer",)


def test_second_update_extends_chain_newest_first(pair_factory):
    records = load_dataset(EXAMPLES)
    horse = records[1]
    pair1 = pair_factory(
        horse.evidence,
        "The current Master of the Horse is Lady Example.",
        article_id="w-moth",
        old_date=date(2024, 7, 1),
        new_date=date(2024, 8, 1),
    )
    client = MockChatClient(responses=update_script("Lady Example"))
    once = update_answer(client, horse, pair1)
    pair2 = pair_factory(
        once.evidence,
        "The current Master of the Horse is Sir Second.",
        article_id="w-moth",
        old_date=date(2024, 8, 1),
        new_date=date(2024, 9, 1),
    )
    client = MockChatClient(responses=update_script("Sir Second"))
    twice = update_answer(client, once, pair2)
    assert twice.question == horse.question
    assert twice.document == horse.document
    assert [o.answer for o in twice.outdated_infos] == [
        "Lady Example",
        "The Lord Ashton of Hyde",
        "Lord de Mauley",
    ]
    dates = [twice.last_modified_time] + [o.last_modified_time for o in twice.outdated_infos]
    assert dates == sorted(dates, reverse=True)


def test_offline_client_generates_binding_answers(pair_factory):
    pair = pair_factory(
        "The mayor of Hillvale is Alice Turner.",
        "The mayor of Hillvale is Brian Soto.",
        title="Hillvale",
    )
    client = OfflineQAClient()
    cand = generate_with_retry(client, pair)
    assert cand is not None
    assert cand.old_answer == "Alice Turner"
    assert cand.new_answer == "Brian Soto"
    record = record_from_candidate(cand)
    from factdrift.dataset_store import validate_record

    validate_record(record, check_binding=True)


def test_offline_client_update_path(pair_factory):
    records = load_dataset(EXAMPLES)
    horse = records[1]
    pair = pair_factory(
        "The current Master of the Horse is the Lord Ashton of Hyde.",
        "The current Master of the Horse is Lady Example.",
        article_id="w-moth",
        title="Master of the Horse",
        old_date=date(2024, 7, 1),
        new_date=date(2024, 8, 1),
    )
    updated = update_answer(OfflineQAClient(), horse, pair)
    assert updated is not None
    assert updated.answer == "Lady Example"
    assert updated.outdated_infos[0].answer == "The Lord Ashton of Hyde"
