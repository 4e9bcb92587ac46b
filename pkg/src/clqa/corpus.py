"""Passage and QA-pair collections: JSONL I/O, cleaning, splitting.

Passage JSONL::

    {"id": str, "lang": str, "title": str, "text": str}

QA JSONL::

    {"id": str, "question": str, "answer": str, "lang": str,
     "label": str | null, "source_passage_id": str | null}
"""

from __future__ import annotations

import enum
import json
import logging
import random
import re
import unicodedata
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from .errors import ArgumentError, ConflictError, ParseError, SizeError
from .tokenization import (
    NON_SPACING_LANGS,
    SUPPORTED_LANGS,
    TokenizerHandle,
    get_tokenizer,
    split_sentences,
)

logger = logging.getLogger(__name__)

MAX_SUBPASSAGE_TOKENS = 512


class FilterLabel(str, enum.Enum):
    NUMBER = "Number"
    WHO = "Who"
    HOW_MANY = "HowMany"
    CONTAINS_NUMBER = "ContainsNumber"
    DATE = "Date"


@dataclass(frozen=True)
class Passage:
    id: str
    lang: str
    title: str
    text: str

    def __post_init__(self):
        if not self.id:
            raise ValueError("passage id must be nonempty")
        if self.lang not in SUPPORTED_LANGS:
            raise ValueError(f"passage {self.id!r}: unsupported lang {self.lang!r}")
        if not self.text.strip():
            raise ValueError(f"passage {self.id!r}: empty text")

    def to_json(self) -> dict:
        return {"id": self.id, "lang": self.lang, "title": self.title, "text": self.text}


@dataclass(frozen=True)
class QAPair:
    id: str
    question: str
    answer: str
    lang: str
    label: FilterLabel | None = None
    source_passage_id: str | None = None

    def __post_init__(self):
        if not self.id:
            raise ValueError("QA pair id must be nonempty")
        if not self.question.strip() or not self.answer.strip():
            raise ValueError(f"QA pair {self.id!r}: question and answer must be nonempty")
        if self.lang not in SUPPORTED_LANGS:
            raise ValueError(f"QA pair {self.id!r}: unsupported lang {self.lang!r}")

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "question": self.question,
            "answer": self.answer,
            "lang": self.lang,
            "label": self.label.value if self.label is not None else None,
            "source_passage_id": self.source_passage_id,
        }


@dataclass(frozen=True)
class SubPassage:
    parent_id: str
    index: int
    text: str
    token_count: int
    lang: str = "en"
    oversized: bool = False


# ---------------------------------------------------------------------------
# JSONL I/O


def iter_jsonl(path: str | Path) -> Iterator[tuple[int, dict]]:
    """Yield ``(line_number, object)`` for each nonblank line of a JSONL file."""
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON ({exc.msg})", lineno, str(path)) from None
            if not isinstance(obj, dict):
                raise ParseError("expected a JSON object", lineno, str(path))
            yield lineno, obj


def write_jsonl(path: str | Path, records: Iterable[dict]) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False))
            fh.write("\n")


def _require_str(obj: dict, key: str, lineno: int, path: str, optional: bool = False):
    if key not in obj:
        if optional:
            return None
        raise ParseError(f"missing field {key!r}", lineno, path)
    val = obj[key]
    if val is None and optional:
        return None
    if not isinstance(val, str):
        raise ParseError(f"field {key!r} must be a string", lineno, path)
    return val


def _unique(items: Iterable, path: str):
    seen: dict[str, int] = {}
    out = []
    for lineno, item in items:
        if item.id in seen:
            raise ConflictError(
                f"{path}:{lineno}: duplicate id {item.id!r} (first seen on line {seen[item.id]})"
            )
        seen[item.id] = lineno
        out.append(item)
    return out


def passage_from_json(obj: dict, lineno: int = 0, path: str = "<memory>") -> Passage:
    fields = {k: _require_str(obj, k, lineno, path) for k in ("id", "lang", "title", "text")}
    try:
        return Passage(**fields)
    except ValueError as exc:
        raise ParseError(str(exc), lineno, path) from None


def load_passages(path: str | Path, format: str = "jsonl") -> list[Passage]:
    """Read a passage collection, rejecting malformed records and duplicate ids."""
    if format != "jsonl":
        raise ArgumentError(f"unsupported corpus format {format!r}")
    spath = str(path)
    return _unique(
        ((lineno, passage_from_json(obj, lineno, spath)) for lineno, obj in iter_jsonl(path)),
        spath,
    )


def qa_from_json(obj: dict, lineno: int = 0, path: str = "<memory>") -> QAPair:
    fields = {k: _require_str(obj, k, lineno, path) for k in ("id", "question", "answer", "lang")}
    label = _require_str(obj, "label", lineno, path, optional=True)
    source = _require_str(obj, "source_passage_id", lineno, path, optional=True)
    try:
        parsed_label = FilterLabel(label) if label is not None else None
    except ValueError:
        raise ParseError(f"unknown label {label!r}", lineno, path) from None
    try:
        return QAPair(**fields, label=parsed_label, source_passage_id=source)
    except ValueError as exc:
        raise ParseError(str(exc), lineno, path) from None


def load_qa_pairs(path: str | Path) -> list[QAPair]:
    spath = str(path)
    return _unique(
        ((lineno, qa_from_json(obj, lineno, spath)) for lineno, obj in iter_jsonl(path)),
        spath,
    )


def write_passages(path: str | Path, passages: Iterable[Passage]) -> None:
    write_jsonl(path, (p.to_json() for p in passages))


def write_qa_pairs(path: str | Path, pairs: Iterable[QAPair]) -> None:
    write_jsonl(path, (p.to_json() for p in pairs))


# ---------------------------------------------------------------------------
# Cleaning

_URL_RE = re.compile(r"(?:\b(?:https?|ftp)://|\bwww\.)\S+", re.IGNORECASE)
_EMAIL_RE = re.compile(r"[\w.+-]+@[\w-]+(?:\.[\w-]+)+")
_EMOJI_CLASS = (
    "\U0001F000-\U0001F2FF"  # mahjong, domino, playing cards, enclosed alnum/ideographic
    "\U0001F300-\U0001F5FF"
    "\U0001F600-\U0001F64F"
    "\U0001F680-\U0001F6FF"
    "\U0001F700-\U0001F7FF"
    "\U0001F900-\U0001F9FF"
    "\U0001FA00-\U0001FAFF"
    "\u2600-\u27bf"
    "\u2b50\u2b55\u2b1b\u2b1c"
)
# an emoji plus any modifiers, variation selectors or ZWJ-joined continuation
_EMOJI_RE = re.compile(
    f"[{_EMOJI_CLASS}](?:[\ufe0e\ufe0f\U0001F3FB-\U0001F3FF]|\u200d[{_EMOJI_CLASS}])*"
)
_REPEAT_RE = re.compile(r"(.)\1+", re.DOTALL)
_WS_RE = re.compile(r"\s+")


def _collapse_punct(m: re.Match) -> str:
    ch = m.group(1)
    return ch if unicodedata.category(ch).startswith("P") else m.group(0)


def _clean_once(text: str) -> str:
    text = _URL_RE.sub(" ", text)
    text = _EMAIL_RE.sub(" ", text)
    text = _EMOJI_RE.sub(" ", text)
    text = _REPEAT_RE.sub(_collapse_punct, text)
    return _WS_RE.sub(" ", text).strip()


def clean_text(text: str) -> str:
    """Strip URLs, emails and emoji; collapse repeated punctuation and whitespace.

    Removed spans are replaced by a space so that neighbours never fuse into
    a new URL or email. The passes repeat until nothing changes, which makes
    the function idempotent.

    >>> clean_text("mail me: a@b.com!!")
    'mail me: !'
    """
    for _ in range(16):
        cleaned = _clean_once(text)
        if cleaned == text:
            break
        text = cleaned
    return text


def clean_passage(p: Passage) -> Passage | None:
    """Cleaned copy of ``p``, or ``None`` if nothing survives cleaning."""
    text = clean_text(p.text)
    if not text:
        return None
    return Passage(p.id, p.lang, clean_text(p.title), text)


# ---------------------------------------------------------------------------
# Sub-passages


def split_into_subpassages(
    p: Passage,
    tokenizer: TokenizerHandle | None = None,
    max_tokens: int = MAX_SUBPASSAGE_TOKENS,
) -> list[SubPassage]:
    """Greedily pack whole sentences of ``p`` into chunks of at most ``max_tokens``.

    A sentence that alone exceeds the budget becomes its own chunk with
    ``oversized=True``. Sentences without any token (stray punctuation) ride
    along with their neighbours and are never dropped.
    """
    tokenizer = tokenizer or get_tokenizer(p.lang)
    joiner = "" if tokenizer.lang in NON_SPACING_LANGS else " "
    sentences = split_sentences(p.text, tokenizer.lang)

    groups: list[tuple[list[str], int, bool]] = []
    current: list[str] = []
    count = 0
    for sent in sentences:
        n = len(tokenizer.tokenize(sent))
        if n > max_tokens:
            if current and count:
                groups.append((current, count, False))
                current, count = [], 0
            groups.append((current + [sent], n, True))
            current = []
            continue
        if count + n > max_tokens:
            groups.append((current, count, False))
            current, count = [], 0
        current.append(sent)
        count += n
    if current:
        if count == 0 and groups:
            last, last_count, last_flag = groups[-1]
            groups[-1] = (last + current, last_count, last_flag)
        elif count:
            groups.append((current, count, False))

    return [
        SubPassage(p.id, i, joiner.join(sents), n, tokenizer.lang, oversized)
        for i, (sents, n, oversized) in enumerate(groups)
    ]


def first_k_subpassages(subs: Sequence[SubPassage], k: int = 3) -> list[SubPassage]:
    if k < 1:
        raise ArgumentError(f"k must be positive, got {k}")
    return list(subs[:k])


def train_val_split(
    passages: Sequence[Passage],
    n_train: int = 7000,
    n_val: int = 700,
    seed: int = 0,
) -> tuple[list[Passage], list[Passage]]:
    """Disjoint random train/validation subsets of exact sizes, reproducible under ``seed``."""
    need = n_train + n_val
    if n_train < 0 or n_val < 0:
        raise ArgumentError("split sizes must be non-negative")
    if len(passages) < need:
        raise SizeError(
            f"need {need} passages for a {n_train}/{n_val} split, only {len(passages)} available"
        )
    picked = random.Random(seed).sample(range(len(passages)), need)
    return [passages[i] for i in picked[:n_train]], [passages[i] for i in picked[n_train:]]


def group_by_lang(passages: Iterable[Passage]) -> dict[str, list[Passage]]:
    out: dict[str, list[Passage]] = {}
    for p in passages:
        out.setdefault(p.lang, []).append(p)
    return out
