"""Token-level F1 and the two-level macro averaging used to rank systems.

Per dataset, F1 is averaged over questions within each language, then
languages are averaged with equal weight. The overall score is the plain
mean of the dataset macros (XOR-TyDi QA and MKQA in the shared task).
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Mapping, Sequence

from .corpus import iter_jsonl
from .errors import ArgumentError, ConflictError, CoverageError, ParseError
from .tokenization import tokenize

DEFAULT_DATASET = "default"


def _f1(pred: list[str], gold: list[str]) -> float:
    if not pred or not gold:
        return 0.0
    common = sum((Counter(pred) & Counter(gold)).values())
    if common == 0:
        return 0.0
    precision = common / len(pred)
    recall = common / len(gold)
    return 2 * precision * recall / (precision + recall)


def token_f1(prediction: str, golds: Sequence[str], lang: str) -> float:
    """Best multiset token F1 of ``prediction`` against any gold answer."""
    if isinstance(golds, str):
        golds = [golds]
    if not golds:
        raise ArgumentError("token_f1 needs at least one gold answer")
    pred = tokenize(prediction, lang)
    return max(_f1(pred, tokenize(g, lang)) for g in golds)


def macro_average(per_question_scores: Mapping[str, Sequence[float]]) -> tuple[dict[str, float], float]:
    """Per-language mean F1 in percent, and their unweighted mean.

    >>> macro_average({"ar": [1.0, 0.0]})
    ({'ar': 50.0}, 50.0)
    """
    if not per_question_scores:
        raise CoverageError("no languages to average")
    per_lang = {}
    for lang, scores in per_question_scores.items():
        if len(scores) == 0:
            raise CoverageError(f"language {lang!r} has no scored questions")
        per_lang[lang] = 100.0 * math.fsum(scores) / len(scores)
    return per_lang, mean_of(per_lang.values())


def mean_of(values) -> float:
    values = list(values)
    return math.fsum(values) / len(values)


def overall_score(xor_macro: float, mkqa_macro: float) -> float:
    for name, v in (("xor_macro", xor_macro), ("mkqa_macro", mkqa_macro)):
        if not 0.0 <= v <= 100.0:
            raise ArgumentError(f"{name}={v} outside [0, 100]")
    return (xor_macro + mkqa_macro) / 2.0


def display_round(x: float, places: int = 2) -> Decimal:
    """Half-up rounding for reports (27.545 -> 27.55).

    The value is first cut to 9 decimals so binary noise such as
    ``27.544999999999998`` rounds the way the decimal figure would.
    """
    q = Decimal(1).scaleb(-places)
    return Decimal(repr(round(x, 9))).quantize(q, rounding=ROUND_HALF_UP)


@dataclass(frozen=True)
class EvalReport:
    per_language: dict[str, dict[str, float]]  # dataset -> lang -> F1 %
    dataset_macro: dict[str, float]
    overall: float

    def to_json(self) -> dict:
        return {
            "per_language": self.per_language,
            "dataset_macro": self.dataset_macro,
            "overall": self.overall,
            "display": {
                "dataset_macro": {k: str(display_round(v)) for k, v in self.dataset_macro.items()},
                "overall": str(display_round(self.overall)),
            },
        }


def build_report(scores: Mapping[str, Mapping[str, Sequence[float]]]) -> EvalReport:
    """Report from ``dataset -> lang -> per-question F1 in [0, 1]``."""
    if not scores:
        raise CoverageError("no datasets to report")
    per_language = {}
    macros = {}
    for dataset in sorted(scores):
        per_lang, macro = macro_average(scores[dataset])
        per_language[dataset] = dict(sorted(per_lang.items()))
        macros[dataset] = macro
    if len(macros) == 2:
        overall = overall_score(*macros.values())
    else:
        overall = mean_of(macros.values())
    return EvalReport(per_language, macros, overall)


@dataclass(frozen=True)
class GoldRecord:
    id: str
    lang: str
    answers: tuple[str, ...]
    dataset: str = DEFAULT_DATASET


def load_gold(path: str | Path) -> dict[str, GoldRecord]:
    """Gold JSONL: ``{"id", "lang", "answers": [str], "dataset"?}``."""
    out: dict[str, GoldRecord] = {}
    for lineno, obj in iter_jsonl(path):
        try:
            rec = GoldRecord(
                str(obj["id"]),
                str(obj["lang"]),
                tuple(str(a) for a in obj["answers"]),
                str(obj.get("dataset", DEFAULT_DATASET)),
            )
        except (KeyError, TypeError) as exc:
            raise ParseError(f"bad gold record ({exc})", lineno, str(path)) from None
        if not rec.answers:
            raise ParseError("gold record has no answers", lineno, str(path))
        if rec.id in out:
            raise ConflictError(f"{path}:{lineno}: duplicate gold id {rec.id!r}")
        out[rec.id] = rec
    return out


def load_predictions(path: str | Path) -> dict[str, str]:
    """Predictions JSONL: ``{"id", "lang", "prediction"}``."""
    out: dict[str, str] = {}
    for lineno, obj in iter_jsonl(path):
        try:
            pid, pred = str(obj["id"]), obj["prediction"]
        except KeyError as exc:
            raise ParseError(f"missing field {exc}", lineno, str(path)) from None
        if not isinstance(pred, str):
            raise ParseError("prediction must be a string", lineno, str(path))
        if pid in out:
            raise ConflictError(f"{path}:{lineno}: duplicate prediction id {pid!r}")
        out[pid] = pred
    return out


def evaluate_predictions(predictions: Mapping[str, str], gold: Mapping[str, GoldRecord]) -> EvalReport:
    """Score every gold question; a missing prediction counts as empty (F1 = 0)."""
    scores: dict[str, dict[str, list[float]]] = {}
    for rec in gold.values():
        f1 = token_f1(predictions.get(rec.id, ""), rec.answers, rec.lang)
        scores.setdefault(rec.dataset, {}).setdefault(rec.lang, []).append(f1)
    return build_report(scores)
