"""Synthetic QA augmentation: filtering, translation, negative contexts, assembly.

Generated English pairs are kept only if they pass a fixed sequence of
heuristics, translated into the target languages, and paired with their seed
passage (the positive) plus sampled negative contexts. Two variants:

* ``AUG-QA``  keeps the English passage next to the translated pair.
* ``AUG-QAP`` translates the passage into the pair's language as well.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from typing import Mapping, Protocol, Sequence

import numpy as np

from .corpus import (
    FilterLabel,
    Passage,
    QAPair,
    SubPassage,
    first_k_subpassages,
    split_into_subpassages,
)
from .errors import (
    ArgumentError,
    ExhaustionError,
    MissingReferenceError,
    TranslationError,
)
from .tokenization import check_lang, token_spans, trim_to_tokens

logger = logging.getLogger(__name__)

VARIANTS = ("AUG-QA", "AUG-QAP")
PLACEMENTS = ("shuffle", "top")
SHUFFLE_WINDOW = 3

# ---------------------------------------------------------------------------
# Filtering

_NUMBER_RE = re.compile(r"[+-]?(?:\d+(?:[,.]\d+)*)")
_WHO_RE = re.compile(r"who\b", re.IGNORECASE)
_HOW_MANY_RE = re.compile(r"how\s+many\b", re.IGNORECASE)
_DIGIT_RUN_RE = re.compile(r"\d+")
_MONTHS = (
    "January|February|March|April|May|June|July|August|September|October|November|December"
    "|Jan|Feb|Mar|Apr|Jun|Jul|Aug|Sep|Sept|Oct|Nov|Dec"
)
_DATE_RES = (
    # month names are matched capitalized only, so "may" the verb is not a date
    re.compile(rf"\b(?:{_MONTHS})\b\.?"),
    re.compile(r"\b\d{1,4}[/.\-]\d{1,2}[/.\-]\d{1,4}\b"),
    re.compile(r"\b\d{4}\b"),
)


def is_number(text: str) -> bool:
    """Whole string is a number once thousands separators and decimal points are allowed."""
    return _NUMBER_RE.fullmatch(text.strip()) is not None


def is_date(text: str) -> bool:
    return any(r.search(text) for r in _DATE_RES)


def filter_qa_pair(question: str, answer: str) -> FilterLabel | None:
    """Label of the first heuristic the pair satisfies, or ``None`` to reject it.

    Rules in order: answer is a number; question starts with "who"; question
    starts with "how many"; answer looks like a date; answer contains a digit.
    """
    q = question.strip()
    if is_number(answer):
        return FilterLabel.NUMBER
    if _WHO_RE.match(q):
        return FilterLabel.WHO
    if _HOW_MANY_RE.match(q):
        return FilterLabel.HOW_MANY
    if is_date(answer):
        return FilterLabel.DATE
    if _DIGIT_RUN_RE.search(answer):
        return FilterLabel.CONTAINS_NUMBER
    return None


def filter_pairs(pairs: Sequence[QAPair]) -> list[QAPair]:
    """Keep the pairs that pass a heuristic, each stamped with its label."""
    kept = []
    for p in pairs:
        label = filter_qa_pair(p.question, p.answer)
        if label is not None:
            kept.append(QAPair(p.id, p.question, p.answer, p.lang, label, p.source_passage_id))
    return kept


# ---------------------------------------------------------------------------
# Translation


class Translator(Protocol):
    def translate(self, text: str, source: str, target: str) -> str: ...


class IdentityTranslator:
    """Returns its input unchanged; a deterministic stand-in for an MT service."""

    def translate(self, text: str, source: str, target: str) -> str:
        check_lang(source)
        check_lang(target)
        return text


class DictionaryTranslator:
    """Looks translations up in ``{(text, target): translation}``; raises on a miss."""

    def __init__(self, table: Mapping[tuple[str, str], str], passthrough_same_lang: bool = True):
        self.table = dict(table)
        self.passthrough_same_lang = passthrough_same_lang

    def translate(self, text: str, source: str, target: str) -> str:
        if self.passthrough_same_lang and source == target:
            return text
        try:
            return self.table[(text, target)]
        except KeyError:
            raise TranslationError(f"no {source}->{target} translation for {text[:40]!r}") from None


@dataclass
class TranslationReport:
    pairs: list[QAPair]
    failures: dict[str, str] = field(default_factory=dict)


def translated_id(pair_id: str, lang: str) -> str:
    return f"{pair_id}-{lang}"


def translate_pairs_report(
    pairs: Sequence[QAPair], targets: Sequence[str], translator: Translator
) -> TranslationReport:
    """Translate every pair into every target, then drop failed pairs everywhere.

    Keeping only pairs that translated into all targets gives every language
    the same number of pairs.
    """
    for p in pairs:
        if p.lang != "en":
            raise ArgumentError(f"pair {p.id!r} has lang {p.lang!r}; translation source must be en")
    for t in targets:
        check_lang(t)

    done: dict[str, list[QAPair]] = {t: [] for t in targets}
    failures: dict[str, str] = {}
    for p in pairs:
        for t in targets:
            try:
                q = translator.translate(p.question, "en", t)
                a = translator.translate(p.answer, "en", t)
                done[t].append(
                    QAPair(translated_id(p.id, t), q, a, t, p.label, p.source_passage_id)
                )
            except Exception as exc:  # any translator failure excludes the pair
                failures.setdefault(p.id, f"{t}: {exc}")
                logger.warning("translation of pair %s into %s failed: %s", p.id, t, exc)
    failed_ids = {translated_id(pid, t) for pid in failures for t in targets}
    out = [qa for t in targets for qa in done[t] if qa.id not in failed_ids]
    return TranslationReport(out, failures)


def translate_pairs(
    pairs: Sequence[QAPair], targets: Sequence[str], translator: Translator
) -> list[QAPair]:
    return translate_pairs_report(pairs, targets, translator).pairs


# ---------------------------------------------------------------------------
# Negative contexts


def sample_negative_contexts(
    pool: Sequence[SubPassage],
    answer: str,
    n: int,
    max_tokens: int = 100,
    seed: int | np.random.Generator = 0,
) -> list[Passage]:
    """Draw ``n`` distinct sub-passages that do not mention ``answer``.

    Candidates are visited in a seeded random order. Each is trimmed to its
    first ``max_tokens`` tokens, and it is rejected when the lowercased answer
    occurs in the lowercased trimmed text.
    """
    if not pool:
        raise ArgumentError("negative-context pool is empty")
    if n < 0:
        raise ArgumentError(f"n must be non-negative, got {n}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    needle = answer.lower()
    chosen: list[Passage] = []
    for i in rng.permutation(len(pool)):
        if len(chosen) == n:
            break
        sub = pool[int(i)]
        text = trim_to_tokens(sub.text, sub.lang, max_tokens)
        if not token_spans(text, sub.lang) or needle in text.lower():
            continue
        chosen.append(Passage(f"{sub.parent_id}#{sub.index}", sub.lang, "", text))
    if len(chosen) < n:
        raise ExhaustionError(
            f"only {len(chosen)} of {n} negative contexts avoid the answer {answer!r}",
            deficit=n - len(chosen),
        )
    return chosen


def build_negative_pool(passages: Sequence[Passage], k: int = 3) -> list[SubPassage]:
    """First ``k`` sub-passages of every seed passage, the material QA pairs were generated from."""
    pool: list[SubPassage] = []
    for p in passages:
        pool.extend(first_k_subpassages(split_into_subpassages(p), k))
    return pool


# ---------------------------------------------------------------------------
# Assembly


@dataclass(frozen=True)
class AugExample:
    qa: QAPair
    positive_passage: Passage
    negative_passages: tuple[Passage, ...]
    variant: str
    positive_position: int = 0

    @property
    def passages(self) -> list[Passage]:
        """Positive and negatives in presentation order."""
        out = list(self.negative_passages)
        out.insert(self.positive_position, self.positive_passage)
        return out

    def to_json(self) -> dict:
        return {
            "qa": self.qa.to_json(),
            "positive": self.positive_passage.to_json(),
            "negatives": [p.to_json() for p in self.negative_passages],
            "variant": self.variant,
            "positive_position": self.positive_position,
        }


def build_aug_dataset(
    pairs: Sequence[QAPair],
    seed_passages: Mapping[str, Passage],
    translator: Translator,
    variant: str = "AUG-QA",
    negatives_per_example: int = 14,
    placement: str = "shuffle",
    seed: int = 0,
    negative_pool: Sequence[SubPassage] | None = None,
    max_negative_tokens: int = 100,
) -> list[AugExample]:
    """Pair each QA pair with its seed passage and sampled negative contexts.

    Every example draws from its own generator, seeded with ``(seed, i)``.
    Placement ``top`` puts the positive first. ``shuffle`` puts it at a random
    index in the first three slots. Negatives never come from the pair's own
    seed passage.
    """
    if variant not in VARIANTS:
        raise ArgumentError(f"variant must be one of {VARIANTS}, got {variant!r}")
    if placement not in PLACEMENTS:
        raise ArgumentError(f"placement must be one of {PLACEMENTS}, got {placement!r}")
    if negatives_per_example < 0:
        raise ArgumentError("negatives_per_example must be non-negative")
    if negative_pool is None:
        negative_pool = build_negative_pool(list(seed_passages.values()))

    examples = []
    for i, qa in enumerate(pairs):
        pid = qa.source_passage_id
        if pid is None or pid not in seed_passages:
            raise MissingReferenceError(f"pair {qa.id!r} references unknown seed passage {pid!r}")
        seed_p = seed_passages[pid]
        positive = seed_p
        if variant == "AUG-QAP":
            try:
                positive = Passage(
                    translated_id(seed_p.id, qa.lang),
                    qa.lang,
                    translator.translate(seed_p.title, seed_p.lang, qa.lang) if seed_p.title else "",
                    translator.translate(seed_p.text, seed_p.lang, qa.lang),
                )
            except Exception as exc:
                raise TranslationError(f"pair {qa.id!r}: passage translation failed: {exc}") from exc

        rng = np.random.default_rng((seed, i))
        pool = [s for s in negative_pool if s.parent_id != seed_p.id]
        if negatives_per_example and not pool:
            raise ExhaustionError(
                f"pair {qa.id!r}: no negative candidates outside its seed passage",
                deficit=negatives_per_example,
            )
        negatives = (
            sample_negative_contexts(pool, qa.answer, negatives_per_example, max_negative_tokens, rng)
            if negatives_per_example
            else []
        )
        if placement == "top":
            position = 0
        else:
            position = int(rng.integers(0, min(SHUFFLE_WINDOW, len(negatives) + 1)))
        examples.append(AugExample(qa, positive, tuple(negatives), variant, position))
    return examples
