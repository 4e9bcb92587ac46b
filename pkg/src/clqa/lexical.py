"""Per-language Okapi BM25 over an exact inverted index.

An index holds the passages of a single language. At training time the
index is queried with the gold answer (``oracle_answer`` mode) to surface
answer-bearing passages; at inference time it is queried with the question.
"""

from __future__ import annotations

import io
import math
import struct
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import Passage
from .errors import (
    ArgumentError,
    ConflictError,
    EmptyIndexError,
    FormatError,
    LanguageMismatchError,
)
from .tokenization import check_lang, tokenize

QUERY_MODES = ("question", "oracle_answer", "question_answer")
INDEX_MAGIC = b"BMI1"


@dataclass(frozen=True)
class RankedList:
    """Passage ids with scores for one query, best first."""

    query_id: str
    entries: tuple[tuple[str, float], ...]
    source: str = ""

    @property
    def ids(self) -> list[str]:
        return [pid for pid, _ in self.entries]

    def __len__(self) -> int:
        return len(self.entries)

    def to_json(self) -> dict:
        return {
            "query_id": self.query_id,
            "source": self.source,
            "entries": [{"id": pid, "score": score} for pid, score in self.entries],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "RankedList":
        try:
            entries = tuple((str(e["id"]), float(e["score"])) for e in obj["entries"])
            return cls(str(obj["query_id"]), entries, str(obj.get("source", "")))
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"malformed ranked list: {exc}") from None


def sort_ranked(scores: Iterable[tuple[str, float]], k: int) -> list[tuple[str, float]]:
    """Top ``k`` by descending score, ties broken by ascending id."""
    return sorted(scores, key=lambda e: (-e[1], e[0]))[:k]


@dataclass
class InvertedIndex:
    lang: str
    postings: dict[str, list[tuple[str, int]]]
    doc_lengths: dict[str, int]
    avg_doc_length: float
    k1: float = 1.2
    b: float = 0.75
    _doc_tf: dict[str, dict[str, int]] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self._doc_tf is None:
            self._doc_tf = {pid: {} for pid in self.doc_lengths}
            for term, plist in self.postings.items():
                for pid, tf in plist:
                    self._doc_tf[pid][term] = tf

    @property
    def doc_count(self) -> int:
        return len(self.doc_lengths)

    def df(self, term: str) -> int:
        return len(self.postings.get(term, ()))

    def idf(self, term: str) -> float:
        df = self.df(term)
        return math.log(1.0 + (self.doc_count - df + 0.5) / (df + 0.5))

    def term_frequency(self, term: str, passage_id: str) -> int:
        return self._doc_tf[passage_id].get(term, 0)

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(dump_index(self))

    @classmethod
    def load(cls, path: str | Path) -> "InvertedIndex":
        return parse_index(Path(path).read_bytes())


def term_weight(idf: float, tf: int, dl: int, avgdl: float, k1: float, b: float) -> float:
    """Contribution of one query term occurring ``tf`` times in a document of length ``dl``."""
    return idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * dl / avgdl))


def build_index(
    passages: Sequence[Passage],
    lang: str,
    k1: float = 1.2,
    b: float = 0.75,
) -> InvertedIndex:
    check_lang(lang)
    if not passages:
        raise EmptyIndexError(f"cannot build a {lang} index from an empty collection")
    if k1 < 0 or not 0.0 <= b <= 1.0:
        raise ArgumentError(f"invalid BM25 parameters k1={k1}, b={b}")
    postings: dict[str, list[tuple[str, int]]] = {}
    doc_lengths: dict[str, int] = {}
    for p in passages:
        if p.lang != lang:
            raise LanguageMismatchError(
                f"passage {p.id!r} has lang {p.lang!r}, index is {lang!r}"
            )
        if p.id in doc_lengths:
            raise ConflictError(f"duplicate passage id {p.id!r}")
        tokens = tokenize(p.text, lang)
        doc_lengths[p.id] = len(tokens)
        for term, tf in Counter(tokens).items():
            postings.setdefault(term, []).append((p.id, tf))
    total = sum(doc_lengths.values())
    if total == 0:
        raise EmptyIndexError(f"no tokens in the {lang} collection")
    return InvertedIndex(lang, postings, doc_lengths, total / len(doc_lengths), k1, b)


def bm25_score(index: InvertedIndex, query_tokens: Sequence[str], passage_id: str) -> float:
    """BM25 score of one passage; repeated query terms contribute once per occurrence."""
    if passage_id not in index.doc_lengths:
        raise KeyError(f"passage {passage_id!r} is not in the {index.lang} index")
    dl = index.doc_lengths[passage_id]
    score = 0.0
    for term in query_tokens:
        tf = index.term_frequency(term, passage_id)
        if tf:
            score += term_weight(index.idf(term), tf, dl, index.avg_doc_length, index.k1, index.b)
    return score


def compose_query(question: str, answer: str | None, mode: str) -> str:
    """Text to send to the index for a given query mode.

    ``question_answer`` concatenates both and is offered for experiments only.
    """
    if mode == "question":
        return question
    if answer is None:
        raise ArgumentError(f"mode {mode!r} needs an answer string")
    if mode == "oracle_answer":
        return answer
    if mode == "question_answer":
        return f"{question} {answer}"
    raise ArgumentError(f"unknown query mode {mode!r}")


def query(
    index: InvertedIndex,
    text: str,
    mode: str = "question",
    k: int = 100,
    query_id: str = "",
) -> RankedList:
    """Top-``k`` passages for ``text``.

    Every indexed passage is a candidate, so a ``k`` beyond the number of
    matching passages is filled with zero-scored ones in id order.
    """
    if mode not in QUERY_MODES:
        raise ArgumentError(f"unknown query mode {mode!r}")
    if k < 1:
        raise ArgumentError(f"k must be >= 1, got {k}")
    tokens = tokenize(text, index.lang)
    if not tokens:
        return RankedList(query_id, (), f"bm25:{mode}")

    # accumulate term-by-term in query order; matches bm25_score bit for bit
    scores = dict.fromkeys(index.doc_lengths, 0.0)
    avgdl, k1, b = index.avg_doc_length, index.k1, index.b
    for term in tokens:
        plist = index.postings.get(term)
        if not plist:
            continue
        idf = index.idf(term)
        for pid, tf in plist:
            scores[pid] += term_weight(idf, tf, index.doc_lengths[pid], avgdl, k1, b)
    return RankedList(query_id, tuple(sort_ranked(scores.items(), k)), f"bm25:{mode}")


# ---------------------------------------------------------------------------
# Binary layout (little-endian):
#   b"BMI1" | u32 doc_count | f64 avg_doc_length | f64 k1 | f64 b
#   | str lang
#   | doc_count x (str passage_id, u32 doc_length)
#   | u32 term_count | term_count x (str term, u32 n, n x (u32 doc_index, u32 tf))
# where str is u32 byte length followed by UTF-8 bytes. Terms are written in
# sorted order and postings in document order, so the encoding is canonical.


def _put_str(buf: io.BytesIO, s: str) -> None:
    data = s.encode("utf-8")
    buf.write(struct.pack("<I", len(data)))
    buf.write(data)


def dump_index(index: InvertedIndex) -> bytes:
    buf = io.BytesIO()
    buf.write(INDEX_MAGIC)
    buf.write(struct.pack("<Iddd", index.doc_count, index.avg_doc_length, index.k1, index.b))
    _put_str(buf, index.lang)
    doc_pos = {}
    for i, (pid, dl) in enumerate(index.doc_lengths.items()):
        doc_pos[pid] = i
        _put_str(buf, pid)
        buf.write(struct.pack("<I", dl))
    buf.write(struct.pack("<I", len(index.postings)))
    for term in sorted(index.postings):
        plist = sorted(index.postings[term], key=lambda e: doc_pos[e[0]])
        _put_str(buf, term)
        buf.write(struct.pack("<I", len(plist)))
        for pid, tf in plist:
            buf.write(struct.pack("<II", doc_pos[pid], tf))
    return buf.getvalue()


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, fmt: str):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.data):
            raise FormatError(f"truncated index at byte {self.pos}")
        vals = struct.unpack_from(fmt, self.data, self.pos)
        self.pos += size
        return vals

    def string(self) -> str:
        (n,) = self.take("<I")
        if self.pos + n > len(self.data):
            raise FormatError(f"truncated string at byte {self.pos}")
        raw = self.data[self.pos : self.pos + n]
        self.pos += n
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError(f"invalid UTF-8 at byte {self.pos - n}") from None


def parse_index(data: bytes) -> InvertedIndex:
    if data[:4] != INDEX_MAGIC:
        raise FormatError("not a BM25 index file (bad magic)")
    r = _Reader(data)
    r.pos = 4
    doc_count, avgdl, k1, b = r.take("<Iddd")
    lang = r.string()
    doc_ids = []
    doc_lengths: dict[str, int] = {}
    for _ in range(doc_count):
        pid = r.string()
        (dl,) = r.take("<I")
        doc_ids.append(pid)
        doc_lengths[pid] = dl
    (term_count,) = r.take("<I")
    postings: dict[str, list[tuple[str, int]]] = {}
    for _ in range(term_count):
        term = r.string()
        (n,) = r.take("<I")
        plist = []
        for _ in range(n):
            idx, tf = r.take("<II")
            if idx >= doc_count:
                raise FormatError(f"posting for term {term!r} references doc {idx} of {doc_count}")
            plist.append((doc_ids[idx], tf))
        postings[term] = plist
    if r.pos != len(data):
        raise FormatError(f"{len(data) - r.pos} trailing bytes after index payload")
    return InvertedIndex(lang, postings, doc_lengths, avgdl, k1, b)
