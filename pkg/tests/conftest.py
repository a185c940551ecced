from __future__ import annotations

from datetime import date

import pytest

from factdrift.diffcore import SentencePair, span_diff
from factdrift.textproc import Sentence

OLD_DATE = date(2024, 6, 1)
NEW_DATE = date(2024, 7, 1)


def make_pair(
    old_text: str,
    new_text: str,
    article_id: str = "a1",
    title: str = "Test Article",
    old_date: date = OLD_DATE,
    new_date: date = NEW_DATE,
    old_context: str | None = None,
    new_context: str | None = None,
) -> SentencePair:
    """Build a SentencePair straight from two sentence strings."""
    return SentencePair(
        article_id=article_id,
        title=title,
        old_date=old_date,
        new_date=new_date,
        old_sentence=Sentence(text=old_text, index=0, char_offset=0),
        new_sentence=Sentence(text=new_text, index=0, char_offset=0),
        old_context=old_context if old_context is not None else old_text,
        new_context=new_context if new_context is not None else new_text,
        token_spans=span_diff(old_text, new_text, "token"),
    )


@pytest.fixture
def pair_factory():
    return make_pair
