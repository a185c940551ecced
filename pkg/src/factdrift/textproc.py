"""Sentence segmentation and pluggable tokenization.

Both operations are lossless: sentence and token spans never overlap, appear
in source order, and everything between two consecutive spans is whitespace,
so the original string can always be reassembled from spans plus gaps.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable

from .errors import ConfigError

# Word runs, or any single non-space/non-word character (punctuation stays
# a one-character token: "3-1" -> "3", "-", "1").
_WORD_OR_PUNCT_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)

_TERMINALS = ".!?"
_CLOSERS = "\"'”’»)]}"
_OPENING_QUOTES = "\"'“‘«"


@dataclass(frozen=True)
class Sentence:
    """One sentence of an article, with its position in the source text."""

    text: str
    index: int
    char_offset: int

    @property
    def char_end(self) -> int:
        return self.char_offset + len(self.text)


@dataclass(frozen=True)
class Token:
    """A token and its [start, end) character span in the source string."""

    text: str
    char_span: tuple[int, int]


TokenizerFn = Callable[[str], "list[Token]"]


def _load_abbreviations(path: str | Path | None = None) -> frozenset[str]:
    if path is None:
        data = (
            resources.files("factdrift").joinpath("data/abbreviations.txt")
        ).read_text(encoding="utf-8")
    else:
        data = Path(path).read_text(encoding="utf-8")
    abbrevs = set()
    for line in data.splitlines():
        word = line.strip()
        if not word or word.startswith("#"):
            continue
        if not word.endswith("."):
            word += "."
        abbrevs.add(word.casefold())
    return frozenset(abbrevs)


_DEFAULT_ABBREVIATIONS = _load_abbreviations()


def _is_boundary(text: str, pos: int, abbreviations: frozenset[str]) -> bool:
    """Decide whether the terminal punctuation at ``pos`` ends a sentence."""
    # Skip closing quotes/brackets attached to the terminal.
    after = pos + 1
    while after < len(text) and text[after] in _CLOSERS:
        after += 1
    if after >= len(text):
        return True
    if not text[after].isspace():
        return False
    # Require the next sentence to open with an uppercase letter or a quote.
    follow = after
    while follow < len(text) and text[follow].isspace():
        follow += 1
    if follow >= len(text):
        return True
    ch = text[follow]
    if not (ch.isupper() or ch in _OPENING_QUOTES):
        return False
    if text[pos] != ".":
        return True
    # Abbreviation handling applies to periods only.
    start = pos
    while start > 0 and not text[start - 1].isspace():
        start -= 1
    word = text[start : pos + 1].lstrip("\"'“‘«([{")
    if word.casefold() in abbreviations:
        return False
    # A single capital letter before the period is an initial ("J. K. Rowling").
    if len(word) == 2 and word[0].isalpha() and word[0].isupper():
        return False
    return True


def split_sentences(
    text: str, abbreviations: frozenset[str] | None = None
) -> list[Sentence]:
    """Split on terminal punctuation followed by whitespace and an
    uppercase letter or opening quote, with an abbreviation exception list.

    Empty text yields an empty list. Whitespace between sentences is not part
    of any sentence; text that never ends in terminal punctuation becomes one
    trailing sentence.
    """
    if abbreviations is None:
        abbreviations = _DEFAULT_ABBREVIATIONS
    sentences: list[Sentence] = []
    start = 0
    pos = 0
    n = len(text)
    while pos < n:
        ch = text[pos]
        if ch in _TERMINALS and _is_boundary(text, pos, abbreviations):
            end = pos + 1
            while end < n and text[end] in _CLOSERS:
                end += 1
            _append_sentence(sentences, text, start, end)
            start = end
            pos = end
        else:
            pos += 1
    _append_sentence(sentences, text, start, n)
    return sentences


def _append_sentence(sentences: list[Sentence], text: str, start: int, end: int) -> None:
    chunk = text[start:end]
    stripped = chunk.strip()
    if not stripped:
        return
    offset = start + (len(chunk) - len(chunk.lstrip()))
    sentences.append(Sentence(text=stripped, index=len(sentences), char_offset=offset))


def _default_tokenize(text: str) -> list[Token]:
    return [
        Token(text=m.group(), char_span=(m.start(), m.end()))
        for m in _WORD_OR_PUNCT_RE.finditer(text)
    ]


_TOKENIZERS: dict[str, TokenizerFn] = {"default": _default_tokenize}


def register_tokenizer(name: str, fn: TokenizerFn, overwrite: bool = False) -> None:
    """Register a tokenizer under ``name``. Registered entries are immutable
    unless ``overwrite`` is set (intended for tests)."""
    if name in _TOKENIZERS and not overwrite:
        raise ConfigError(f"tokenizer {name!r} is already registered")
    _TOKENIZERS[name] = fn


def get_tokenizer(name: str) -> TokenizerFn:
    try:
        return _TOKENIZERS[name]
    except KeyError:
        raise ConfigError(
            f"unknown tokenizer {name!r}; registered: {sorted(_TOKENIZERS)}"
        ) from None


def tokenize(text: str, tokenizer: str | TokenizerFn = "default") -> list[Token]:
    """Tokenize with a registered tokenizer (by name) or a tokenizer function."""
    fn = get_tokenizer(tokenizer) if isinstance(tokenizer, str) else tokenizer
    return fn(text)


def token_texts(tokens: Iterable[Token]) -> list[str]:
    return [t.text for t in tokens]
