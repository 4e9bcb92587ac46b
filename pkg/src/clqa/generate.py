"""Answer-generation contract and two deterministic baseline generators.

A generator maps a :class:`GenerationRequest` (question, its language, and
the top retrieved passages in rank order) to an answer string. Neural
generators live outside this package. They read requests as JSONL and write
predictions JSONL.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

from .corpus import Passage, passage_from_json
from .errors import ArgumentError, FormatError, GenerationError
from .tokenization import check_lang, token_spans, trim_to_tokens

MAX_PASSAGES = 15
MAX_INPUT_TOKENS = 16000


@dataclass(frozen=True)
class GenerationRequest:
    question: str
    lang: str
    passages: tuple[Passage, ...] = ()
    max_input_tokens: int = MAX_INPUT_TOKENS
    id: str = ""
    # gold answers; only the oracle-extractive baseline looks at them
    answers: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        check_lang(self.lang)
        object.__setattr__(self, "passages", tuple(self.passages))
        object.__setattr__(self, "answers", tuple(self.answers))

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "question": self.question,
            "lang": self.lang,
            "passages": [p.to_json() for p in self.passages],
            "max_input_tokens": self.max_input_tokens,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "GenerationRequest":
        try:
            return cls(
                question=str(obj["question"]),
                lang=str(obj["lang"]),
                passages=tuple(passage_from_json(p) for p in obj.get("passages", [])),
                max_input_tokens=int(obj.get("max_input_tokens", MAX_INPUT_TOKENS)),
                id=str(obj.get("id", "")),
                answers=tuple(obj.get("answers", ())),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"malformed generation request: {exc}") from None


def make_request(
    question: str,
    lang: str,
    ranked_passages: Sequence[Passage],
    top_n: int = MAX_PASSAGES,
    **kwargs,
) -> GenerationRequest:
    """Request built from the ``top_n`` best-ranked passages."""
    if top_n < 1:
        raise ArgumentError(f"top_n must be >= 1, got {top_n}")
    return GenerationRequest(question, lang, tuple(ranked_passages[:top_n]), **kwargs)


def _count(text: str, lang: str) -> int:
    return len(token_spans(text, lang))


def truncate_input(req: GenerationRequest, limit: int = MAX_INPUT_TOKENS) -> GenerationRequest:
    """Cut the question + passages token stream after ``limit`` tokens.

    The question always survives whole. Passages keep their order; the one
    that crosses the limit is trimmed, and later ones are dropped. Passage
    tokens are counted with each passage's own language rules; titles are
    not counted.
    """
    budget = limit - _count(req.question, req.lang)
    if budget <= 0:
        raise ArgumentError(
            f"limit {limit} leaves no room for passages after the question"
        )
    kept = []
    for p in req.passages:
        if budget == 0:
            break
        n = _count(p.text, p.lang)
        if n <= budget:
            kept.append(p)
            budget -= n
        else:
            kept.append(Passage(p.id, p.lang, p.title, trim_to_tokens(p.text, p.lang, budget)))
            budget = 0
    return replace(req, passages=tuple(kept), max_input_tokens=limit)


Generator = Callable[[GenerationRequest], str]


class EchoGenerator:
    """Returns the first ``max_tokens`` tokens of the top passage, original casing kept."""

    name = "echo"

    def __init__(self, max_tokens: int = 10):
        self.max_tokens = max_tokens

    def __call__(self, req: GenerationRequest) -> str:
        if not req.passages:
            return ""
        top = req.passages[0]
        return trim_to_tokens(top.text, top.lang, self.max_tokens)


class OracleExtractiveGenerator:
    """Returns the first gold answer whose lowercase form occurs in some passage, else ``""``.

    Only useful for probing retrieval: the score is the fraction of
    questions whose answer was retrieved.
    """

    name = "oracle-extractive"

    def __call__(self, req: GenerationRequest) -> str:
        texts = [p.text.lower() for p in req.passages]
        for gold in req.answers:
            needle = gold.lower()
            if needle and any(needle in t for t in texts):
                return gold
        return ""


GENERATORS: Mapping[str, Callable[[], Generator]] = {
    "echo": EchoGenerator,
    "oracle-extractive": OracleExtractiveGenerator,
}


def get_generator(name: str) -> Generator:
    try:
        return GENERATORS[name]()
    except KeyError:
        raise ArgumentError(f"unknown generator {name!r}; choose from {sorted(GENERATORS)}") from None


def generate(req: GenerationRequest, generator: Generator) -> str:
    try:
        return generator(req)
    except Exception as exc:
        raise GenerationError(f"generation failed for question {req.id!r}: {exc}") from exc
