"""Immutable embedding stores and exact inner-product retrieval.

The store is a plain id -> vector map backed by a single float64 matrix.
Retrieval is an exhaustive scan: at desk scale (<= 1e5 vectors) exactness is
cheap and removes approximation as a confound in the feedback experiments.
"""

from __future__ import annotations

import json
import struct
from typing import Iterable, List, Optional, Sequence, Set, Tuple

import numpy as np

from .errors import DimensionError, EmptyStoreError, IngestError

BINARY_MAGIC = b"DVEC"


def as_vector(values: Sequence[float]) -> np.ndarray:
    """Validate and return a finite 1-d float64 vector."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or v.shape[0] < 1:
        raise DimensionError(f"expected a 1-d vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise IngestError("vector contains non-finite coordinates")
    return v


def inner_product(a: np.ndarray, b: np.ndarray) -> float:
    """Exact dot product of two equal-dimension vectors."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.dot(a, b))


class Ranking:
    """An ordered retrieval result for one query.

    Items are (passage_id, score) pairs sorted by score descending; exact
    score ties are broken by ascending passage id so output is deterministic.
    """

    __slots__ = ("query_id", "items", "depth")

    def __init__(self, query_id: str, items: List[Tuple[str, float]], depth: int):
        if depth < 1:
            raise ValueError("depth must be >= 1")
        if len(items) > depth:
            raise ValueError("more items than depth")
        seen = set()
        for pid, _ in items:
            if pid in seen:
                raise ValueError(f"duplicate passage id {pid!r} in ranking")
            seen.add(pid)
        for (p1, s1), (p2, s2) in zip(items, items[1:]):
            if s2 > s1 or (s2 == s1 and p2 < p1):
                raise ValueError("ranking items are not in (score desc, id asc) order")
        self.query_id = query_id
        self.items = list(items)
        self.depth = depth

    @property
    def passage_ids(self) -> List[str]:
        return [pid for pid, _ in self.items]

    def __len__(self) -> int:
        return len(self.items)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Ranking)
            and self.query_id == other.query_id
            and self.items == other.items
            and self.depth == other.depth
        )

    def __repr__(self) -> str:
        return f"Ranking({self.query_id!r}, {len(self.items)} items, depth={self.depth})"


class EmbeddingStore:
    """Immutable id -> dense vector map with a shared dimension.

    kind is "passage-store" or "query-store"; nearest-neighbour query lookup
    only accepts the latter.
    """

    def __init__(self, ids: Sequence[str], matrix: np.ndarray, kind: str = "passage-store"):
        if kind not in ("passage-store", "query-store"):
            raise ValueError(f"unknown store kind {kind!r}")
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[0] != len(ids):
            raise IngestError("matrix shape does not match id count")
        if matrix.shape[0] and matrix.shape[1] < 1:
            raise IngestError("vectors must have dimension >= 1")
        if not np.all(np.isfinite(matrix)):
            raise IngestError("store contains non-finite coordinates")
        index = {}
        for i, pid in enumerate(ids):
            if not pid:
                raise IngestError(f"empty id at record {i}")
            if pid in index:
                raise IngestError(f"duplicate id {pid!r} at record {i}")
            index[pid] = i
        self._ids = list(ids)
        self._matrix = matrix
        self._matrix.setflags(write=False)
        self._index = index
        self._id_arr = None
        self.kind = kind

    def _id_array(self) -> np.ndarray:
        if self._id_arr is None:
            self._id_arr = np.array(self._ids, dtype="U")
        return self._id_arr

    @classmethod
    def from_dict(cls, entries: dict, kind: str = "passage-store") -> "EmbeddingStore":
        ids = list(entries)
        if not ids:
            return cls([], np.zeros((0, 1)), kind)
        matrix = np.stack([as_vector(entries[i]) for i in ids])
        return cls(ids, matrix, kind)

    @property
    def ids(self) -> List[str]:
        return list(self._ids)

    @property
    def matrix(self) -> np.ndarray:
        return self._matrix

    @property
    def dim(self) -> int:
        return self._matrix.shape[1]

    def vector(self, id_: str) -> np.ndarray:
        return self._matrix[self._index[id_]]

    def __contains__(self, id_: str) -> bool:
        return id_ in self._index

    def __len__(self) -> int:
        return len(self._ids)


def _ranked_indices(store: EmbeddingStore, q: np.ndarray, k: int,
                    exclude: Optional[Set[str]] = None):
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (store.dim,):
        raise DimensionError(f"query dim {q.shape} does not match store dim {store.dim}")
    if k < 1:
        raise ValueError("k must be >= 1")
    scores = store.matrix @ q
    ids = store._ids
    if exclude:
        candidates = [i for i in range(len(ids)) if ids[i] not in exclude]
        order = sorted(candidates, key=lambda i: (-scores[i], ids[i]))
        return order[:k], scores
    # np.lexsort with the id array as secondary key: score descending,
    # id ascending on exact ties.  _id_array is cached per store.
    order = np.lexsort((store._id_array(), -scores))
    return list(order[:k]), scores


def top_k(store: EmbeddingStore, q: np.ndarray, k: int,
          exclude: Optional[Set[str]] = None, query_id: str = "") -> Ranking:
    """Exact top-k passages by inner product with q.

    Returns fewer than k items when the store is smaller.  Exhaustive and
    deterministic: ties are broken by ascending passage id.
    """
    idx, scores = _ranked_indices(store, q, k, exclude)
    items = [(store._ids[i], float(scores[i])) for i in idx]
    return Ranking(query_id, items, depth=k)


def knn_queries(query_store: EmbeddingStore, q_u: np.ndarray, k: int) -> List[str]:
    """Ids of the k logged queries closest to q_u under inner product."""
    if query_store.kind != "query-store":
        raise ValueError("knn_queries requires a query-store")
    if len(query_store) == 0:
        raise EmptyStoreError("query store is empty")
    idx, _ = _ranked_indices(query_store, q_u, k)
    return [query_store._ids[i] for i in idx]


def save_embeddings(store: EmbeddingStore, path, format: str = "jsonl") -> None:
    if format == "jsonl":
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            for id_ in store._ids:
                vec = [float(x) for x in store.vector(id_)]
                f.write(json.dumps({"id": id_, "vec": vec}) + "\n")
    elif format == "binary":
        with open(path, "wb") as f:
            f.write(BINARY_MAGIC)
            f.write(struct.pack("<IQ", store.dim, len(store)))
            for id_ in store._ids:
                raw = id_.encode("utf-8")
                f.write(struct.pack("<H", len(raw)))
                f.write(raw)
                f.write(store.vector(id_).astype("<f4").tobytes())
    else:
        raise ValueError(f"unknown format {format!r}")


def _load_jsonl(path) -> Tuple[List[str], List[np.ndarray]]:
    ids: List[str] = []
    vecs: List[np.ndarray] = []
    dim = None
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                id_ = rec["id"]
                vec = as_vector(rec["vec"])
            except (json.JSONDecodeError, KeyError, TypeError, DimensionError) as e:
                raise IngestError(f"malformed record {lineno}: {e}") from e
            if not isinstance(id_, str) or not id_:
                raise IngestError(f"malformed record {lineno}: bad id {id_!r}")
            if dim is None:
                dim = vec.shape[0]
            elif vec.shape[0] != dim:
                raise IngestError(
                    f"inconsistent dim at record {lineno}: {vec.shape[0]} != {dim}")
            ids.append(id_)
            vecs.append(vec)
    return ids, vecs


def _load_binary(path) -> Tuple[List[str], List[np.ndarray]]:
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != BINARY_MAGIC:
        raise IngestError("bad magic bytes, not a DVEC file")
    if len(data) < 16:
        raise IngestError("truncated header")
    dim, count = struct.unpack_from("<IQ", data, 4)
    if dim < 1:
        raise IngestError("header dim must be >= 1")
    ids: List[str] = []
    vecs: List[np.ndarray] = []
    off = 16
    for rec in range(count):
        try:
            (id_len,) = struct.unpack_from("<H", data, off)
            off += 2
            id_ = data[off:off + id_len].decode("utf-8")
            off += id_len
            raw = np.frombuffer(data, dtype="<f4", count=dim, offset=off)
            off += 4 * dim
        except (struct.error, ValueError, UnicodeDecodeError) as e:
            raise IngestError(f"malformed record {rec}: {e}") from e
        if raw.shape[0] != dim:
            raise IngestError(f"malformed record {rec}: truncated vector")
        ids.append(id_)
        vecs.append(raw.astype(np.float64))
    if off != len(data):
        raise IngestError("trailing bytes after last record")
    return ids, vecs


def load_embeddings(path, format: str = "jsonl", kind: str = "passage-store") -> EmbeddingStore:
    """Load an EmbeddingStore from disk.

    JSONL format: one {"id": str, "vec": [...]} object per line.
    Binary format: "DVEC", u32 dim, u64 count, then (u16 id length, id bytes,
    dim little-endian f32) per record.
    """
    if format == "jsonl":
        ids, vecs = _load_jsonl(path)
    elif format == "binary":
        ids, vecs = _load_binary(path)
    else:
        raise ValueError(f"unknown format {format!r}")
    if not ids:
        raise IngestError(f"no records in {path}: cannot derive a dimension")
    try:
        return EmbeddingStore(ids, np.stack(vecs), kind)
    except IngestError as e:
        raise IngestError(f"{path}: {e}") from e
