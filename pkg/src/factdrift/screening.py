"""Semantic screening of heuristically-surviving pairs through a pluggable
binary classifier, plus training-data export and classifier evaluation.

The classifier itself is external; this module owns the input contract (the
marked-diff markup), the HTTP wire protocol, offline backends, and metrics.
Wire contract: POST ``{"input": str}``, response
``{"is_factual": bool, "confidence": number}``.
"""

from __future__ import annotations

import json
import os
import random
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import requests

from .diffcore import SentencePair, render_marked_diff
from .errors import ConfigError, DataError, ProtocolError, TransportError
from .textproc import TokenizerFn


@dataclass(frozen=True)
class ScreeningInput:
    """What the classifier sees: the merged marked-up diff. The title rides
    along as provenance but is not part of the wire input."""

    rendered: str
    article_title: str

    def __post_init__(self) -> None:
        if not self.rendered:
            raise DataError("screening input has empty rendered markup")


@dataclass(frozen=True)
class FactualChangeVerdict:
    is_factual: bool
    confidence: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise DataError(f"confidence {self.confidence} outside [0, 1]")


@dataclass(frozen=True)
class ClassifierMetrics:
    accuracy: float
    f1: float
    confusion: dict


class ClassifierClient(Protocol):
    def classify(self, input: ScreeningInput) -> FactualChangeVerdict: ...


@dataclass
class KeepAllClassifier:
    """Offline fallback: passes everything through so downstream stages stay
    runnable; confidence is fixed at 0.5 to flag the non-judgment."""

    calls: int = 0

    def classify(self, input: ScreeningInput) -> FactualChangeVerdict:
        self.calls += 1
        return FactualChangeVerdict(is_factual=True, confidence=0.5)


@dataclass
class MockClassifier:
    """Scripted verdicts for tests, consumed in order."""

    verdicts: list[FactualChangeVerdict] = field(default_factory=list)
    inputs: list[ScreeningInput] = field(default_factory=list)

    def classify(self, input: ScreeningInput) -> FactualChangeVerdict:
        self.inputs.append(input)
        if not self.verdicts:
            raise TransportError("mock classifier script exhausted")
        return self.verdicts.pop(0)


@dataclass
class ScriptedClassifier:
    """File-backed scripted classifier: JSONL lines of
    ``{"is_factual": bool, "confidence": number}`` consumed in order."""

    script_path: str
    _verdicts: list[FactualChangeVerdict] = field(default_factory=list, repr=False)
    _loaded: bool = field(default=False, repr=False)
    calls: int = 0

    def classify(self, input: ScreeningInput) -> FactualChangeVerdict:
        if not self._loaded:
            try:
                with open(self.script_path, encoding="utf-8") as fh:
                    for line in fh:
                        if line.strip():
                            obj = json.loads(line)
                            self._verdicts.append(
                                FactualChangeVerdict(
                                    is_factual=bool(obj["is_factual"]),
                                    confidence=float(obj.get("confidence", 1.0)),
                                )
                            )
            except (OSError, ValueError, KeyError) as exc:
                raise ConfigError(
                    f"bad classifier script {self.script_path!r}: {exc}"
                ) from exc
            self._loaded = True
        if self.calls >= len(self._verdicts):
            raise TransportError(f"classifier script {self.script_path!r} exhausted")
        verdict = self._verdicts[self.calls]
        self.calls += 1
        return verdict


@dataclass
class HttpClassifier:
    """Client for an HTTP classifier endpoint implementing the wire contract."""

    base_url: str
    timeout: float = 30.0
    retries: int = 3
    retry_delay: float = 1.0
    token_env: str = "FACTDRIFT_CLASSIFIER_TOKEN"

    def classify(self, input: ScreeningInput) -> FactualChangeVerdict:
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(self.token_env)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        last_exc: Exception | None = None
        for attempt in range(self.retries):
            try:
                resp = requests.post(
                    self.base_url,
                    json={"input": input.rendered},
                    headers=headers,
                    timeout=self.timeout,
                )
            except requests.RequestException as exc:
                last_exc = exc
                if attempt < self.retries - 1:
                    time.sleep(self.retry_delay * (attempt + 1))
                continue
            if resp.status_code in (429, 500, 502, 503, 504):
                last_exc = TransportError(f"HTTP {resp.status_code} from {self.base_url}")
                if attempt < self.retries - 1:
                    time.sleep(self.retry_delay * (attempt + 1))
                continue
            if resp.status_code != 200:
                raise ProtocolError(f"HTTP {resp.status_code} from {self.base_url}")
            try:
                obj = resp.json()
                return FactualChangeVerdict(
                    is_factual=bool(obj["is_factual"]),
                    confidence=float(obj["confidence"]),
                )
            except (ValueError, KeyError, TypeError) as exc:
                raise ProtocolError(f"malformed classifier response: {exc}") from exc
        raise TransportError(
            f"classifier request failed after {self.retries} attempts"
        ) from last_exc


def build_screening_input(
    pair: SentencePair, tokenizer: str | TokenizerFn = "default"
) -> ScreeningInput:
    """Deterministic classifier input for one pair: its rendered marked diff."""
    rendered = render_marked_diff(pair, tokenizer).markup
    return ScreeningInput(rendered=rendered, article_title=pair.title)


def classify(client: ClassifierClient, input: ScreeningInput) -> FactualChangeVerdict:
    return client.classify(input)


def classify_batch(
    client: ClassifierClient,
    inputs: Sequence[ScreeningInput],
    max_in_flight: int = 4,
) -> list[FactualChangeVerdict]:
    """Classify a batch with bounded concurrency; results come back in input
    order regardless of completion order."""
    if max_in_flight < 1:
        raise ConfigError(f"max_in_flight must be >= 1, got {max_in_flight}")
    if max_in_flight == 1 or len(inputs) <= 1:
        return [client.classify(i) for i in inputs]
    with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
        return list(pool.map(client.classify, inputs))


def export_training_data(
    labeled: Sequence[tuple[SentencePair, int]],
    train_path: str | Path,
    test_path: str | Path,
    split_ratio: float = 0.8,
    seed: int = 0,
    tokenizer: str | TokenizerFn = "default",
) -> tuple[Path, Path]:
    """Write a stratified, seeded train/test split as JSONL
    ``{"input": markup, "label": 0|1}`` records."""
    if not 0.0 < split_ratio < 1.0:
        raise ConfigError(f"split_ratio must be in (0, 1), got {split_ratio}")
    by_label: dict[int, list[SentencePair]] = {0: [], 1: []}
    for pair, label in labeled:
        if label not in (0, 1):
            raise DataError(f"label must be 0 or 1, got {label!r}")
        by_label[label].append(pair)
    for label, items in by_label.items():
        if len(items) < 2:
            raise DataError(
                f"need at least 2 examples of label {label}, got {len(items)}"
            )
    rng = random.Random(seed)
    train: list[tuple[SentencePair, int]] = []
    test: list[tuple[SentencePair, int]] = []
    for label in (0, 1):
        items = list(by_label[label])
        rng.shuffle(items)
        n_train = round(split_ratio * len(items))
        train.extend((p, label) for p in items[:n_train])
        test.extend((p, label) for p in items[n_train:])
    rng.shuffle(train)
    rng.shuffle(test)
    train_path, test_path = Path(train_path), Path(test_path)
    for path, rows in ((train_path, train), (test_path, test)):
        with open(path, "w", encoding="utf-8") as fh:
            for pair, label in rows:
                rendered = build_screening_input(pair, tokenizer).rendered
                fh.write(
                    json.dumps({"input": rendered, "label": label}, ensure_ascii=False)
                    + "\n"
                )
    return train_path, test_path


def eval_classifier(
    predictions: Sequence[bool], labels: Sequence[bool]
) -> ClassifierMetrics:
    """Accuracy and positive-class F1 from parallel prediction/label vectors."""
    if len(predictions) != len(labels):
        raise DataError(
            f"length mismatch: {len(predictions)} predictions vs {len(labels)} labels"
        )
    if not predictions:
        raise DataError("cannot evaluate an empty prediction set")
    tp = fp = fn = tn = 0
    for pred, label in zip(predictions, labels):
        if pred and label:
            tp += 1
        elif pred and not label:
            fp += 1
        elif not pred and label:
            fn += 1
        else:
            tn += 1
    total = tp + fp + fn + tn
    accuracy = (tp + tn) / total
    denom = 2 * tp + fp + fn
    f1 = (2 * tp / denom) if denom else 0.0
    return ClassifierMetrics(
        accuracy=accuracy,
        f1=f1,
        confusion={"tp": tp, "fp": fp, "fn": fn, "tn": tn},
    )
