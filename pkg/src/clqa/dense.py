"""Cosine retrieval over precomputed embeddings, and average-rank ensembling.

Embeddings come from external sentence encoders and are read from disk:

* JSONL, one ``{"id": str, "vec": [float, ...]}`` per line;
* binary: ``b"EMB1"``, u32 count, u32 dim, then per record a u32-length
  prefixed UTF-8 id followed by ``dim`` little-endian f32 values.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .corpus import iter_jsonl
from .errors import ArgumentError, ConflictError, FormatError, NormalizationError, ShapeError
from .lexical import RankedList

EMB_MAGIC = b"EMB1"
UNIT_TOL = 1e-6


@dataclass(frozen=True)
class EmbeddingStore:
    ids: tuple[str, ...]
    matrix: np.ndarray
    normalized: bool = True

    def __post_init__(self):
        if self.matrix.ndim != 2 or self.matrix.shape[0] != len(self.ids):
            raise ShapeError(
                f"matrix shape {self.matrix.shape} does not match {len(self.ids)} ids"
            )
        self.matrix.setflags(write=False)
        object.__setattr__(self, "_row", {pid: i for i, pid in enumerate(self.ids)})
        if len(self._row) != len(self.ids):
            raise ConflictError("duplicate ids in embedding store")

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def __len__(self) -> int:
        return len(self.ids)

    def __contains__(self, pid: str) -> bool:
        return pid in self._row

    def vector(self, pid: str) -> np.ndarray:
        return self.matrix[self._row[pid]]

    @property
    def vectors(self) -> dict[str, np.ndarray]:
        return {pid: self.matrix[i] for i, pid in enumerate(self.ids)}

    @classmethod
    def from_vectors(
        cls, items: Iterable[tuple[str, Sequence[float]]], normalize: bool = True
    ) -> "EmbeddingStore":
        ids: list[str] = []
        rows: list[np.ndarray] = []
        seen: set[str] = set()
        dim = None
        for pid, vec in items:
            arr = np.asarray(vec, dtype=np.float64)
            if arr.ndim != 1 or arr.size == 0:
                raise FormatError(f"embedding {pid!r} is not a nonempty flat vector")
            if dim is None:
                dim = arr.size
            elif arr.size != dim:
                raise FormatError(f"embedding {pid!r} has dim {arr.size}, expected {dim}")
            if pid in seen:
                raise ConflictError(f"duplicate embedding id {pid!r}")
            if not np.all(np.isfinite(arr)):
                raise FormatError(f"embedding {pid!r} has non-finite values")
            if normalize:
                arr = unit(arr, name=pid)
            seen.add(pid)
            ids.append(pid)
            rows.append(arr)
        matrix = np.vstack(rows) if rows else np.zeros((0, dim or 0))
        return cls(tuple(ids), matrix, normalize)


def unit(vec: np.ndarray, name: str = "vector") -> np.ndarray:
    norm = float(np.linalg.norm(vec))
    if norm == 0.0 or not np.isfinite(norm):
        raise NormalizationError(f"{name} has zero (or non-finite) norm")
    return vec / norm


def load_embeddings(path: str | Path) -> EmbeddingStore:
    """Read an embedding file (JSONL or EMB1 binary, sniffed by magic) and L2-normalize it."""
    path = Path(path)
    with path.open("rb") as fh:
        head = fh.read(4)
    if head == EMB_MAGIC:
        return EmbeddingStore.from_vectors(_read_binary(path.read_bytes()))
    return EmbeddingStore.from_vectors(_read_jsonl(path))


def _read_jsonl(path: Path):
    for lineno, obj in iter_jsonl(path):
        pid, vec = obj.get("id"), obj.get("vec")
        if not isinstance(pid, str) or not isinstance(vec, list):
            raise FormatError(f"{path}:{lineno}: expected {{'id': str, 'vec': [float]}}")
        yield pid, vec


def _read_binary(data: bytes):
    if len(data) < 12:
        raise FormatError("truncated EMB1 header")
    count, dim = struct.unpack_from("<II", data, 4)
    pos = 12
    vec_size = 4 * dim
    for _ in range(count):
        if pos + 4 > len(data):
            raise FormatError("truncated EMB1 record")
        (n,) = struct.unpack_from("<I", data, pos)
        pos += 4
        if pos + n + vec_size > len(data):
            raise FormatError("truncated EMB1 record")
        pid = data[pos : pos + n].decode("utf-8")
        pos += n
        vec = np.frombuffer(data, dtype="<f4", count=dim, offset=pos).astype(np.float64)
        pos += vec_size
        yield pid, vec
    if pos != len(data):
        raise FormatError(f"{len(data) - pos} trailing bytes in EMB1 file")


def save_embeddings_jsonl(path: str | Path, items: Iterable[tuple[str, Sequence[float]]]) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for pid, vec in items:
            # json uses repr() for floats, which round-trips exactly
            fh.write(json.dumps({"id": pid, "vec": [float(x) for x in vec]}, ensure_ascii=False))
            fh.write("\n")


def save_embeddings_binary(path: str | Path, items: Sequence[tuple[str, Sequence[float]]]) -> None:
    items = list(items)
    dim = len(items[0][1]) if items else 0
    buf = io.BytesIO()
    buf.write(EMB_MAGIC)
    buf.write(struct.pack("<II", len(items), dim))
    for pid, vec in items:
        if len(vec) != dim:
            raise FormatError(f"embedding {pid!r} has dim {len(vec)}, expected {dim}")
        raw = pid.encode("utf-8")
        buf.write(struct.pack("<I", len(raw)))
        buf.write(raw)
        buf.write(np.asarray(vec, dtype="<f4").tobytes())
    Path(path).write_bytes(buf.getvalue())


def cosine_top_k(
    store: EmbeddingStore,
    query_vec: Sequence[float],
    k: int = 100,
    query_id: str = "",
    source: str = "dense",
) -> RankedList:
    """Top-``k`` stored ids by cosine similarity to ``query_vec``, ties by ascending id."""
    if k < 1:
        raise ArgumentError(f"k must be >= 1, got {k}")
    q = np.asarray(query_vec, dtype=np.float64)
    if q.shape != (store.dim,):
        raise ShapeError(f"query has shape {q.shape}, store dim is {store.dim}")
    q = unit(q, name="query vector")
    if len(store) == 0:
        return RankedList(query_id, (), source)
    mat = store.matrix
    if not store.normalized:
        mat = mat / np.linalg.norm(mat, axis=1, keepdims=True)
    scores = mat @ q
    if k < len(scores):
        # keep everything tied with the k-th best so the id tie-break stays exact
        kth = np.partition(-scores, k - 1)[k - 1]
        cand = np.flatnonzero(-scores <= kth)
    else:
        cand = np.arange(len(scores))
    ranked = sorted(((store.ids[i], float(scores[i])) for i in cand), key=lambda e: (-e[1], e[0]))
    return RankedList(query_id, tuple(ranked[:k]), source)


def ensemble_rank(
    lists: Sequence[RankedList],
    k: int = 100,
    absent_rank: Callable[[RankedList], int] | int | None = None,
) -> RankedList:
    """Fuse rankers by averaging each document's 1-based rank.

    A document missing from a list gets rank ``len(list) + 1`` there unless
    ``absent_rank`` says otherwise (a fixed rank or a per-list callable). The
    output score is the negated mean rank, so scores stay non-increasing.
    """
    if not lists:
        raise ArgumentError("ensemble_rank needs at least one ranked list")
    if k < 1:
        raise ArgumentError(f"k must be >= 1, got {k}")
    qids = {rl.query_id for rl in lists}
    if len(qids) > 1:
        raise ArgumentError(f"ranked lists answer different queries: {sorted(qids)}")

    positions: list[Mapping[str, int]] = []
    for rl in lists:
        pos = {pid: r for r, pid in enumerate(rl.ids, start=1)}
        if len(pos) != len(rl):
            raise ArgumentError(f"ranked list from {rl.source!r} repeats a passage id")
        positions.append(pos)

    def missing(rl: RankedList) -> int:
        if absent_rank is None:
            return len(rl) + 1
        return absent_rank(rl) if callable(absent_rank) else int(absent_rank)

    penalties = [missing(rl) for rl in lists]
    docs = {pid for pos in positions for pid in pos}
    # integer rank totals order the same as means and avoid float ties
    totals = {
        pid: sum(pos.get(pid, pen) for pos, pen in zip(positions, penalties)) for pid in docs
    }
    n = len(lists)
    order = sorted(docs, key=lambda pid: (totals[pid], pid))[:k]
    return RankedList(
        lists[0].query_id,
        tuple((pid, -totals[pid] / n) for pid in order),
        "ensemble:" + "+".join(rl.source for rl in lists),
    )
