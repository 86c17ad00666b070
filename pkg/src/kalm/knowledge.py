"""External knowledge base: ingestion, cosine retrieval, weight normalization.

Retrieval is a brute-force linear scan over every fragment; at desk scale
(<= ~10^4 fragments) exactness matters more than speed, and the test suite
pins retrieve() against a full-sort oracle.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DataError, NumericError


@dataclass
class KnowledgeFragment:
    id: str
    text: str
    vector: np.ndarray

    def __post_init__(self):
        self.vector = np.asarray(self.vector, dtype=np.float64).reshape(-1)
        if not np.isfinite(self.vector).all():
            raise NumericError(f"fragment {self.id!r} has a non-finite vector")
        if np.linalg.norm(self.vector) == 0.0:
            raise DataError(f"fragment {self.id!r} has a zero-norm vector")


class KnowledgeBase:
    def __init__(self, fragments: list[KnowledgeFragment]):
        if not fragments:
            raise DataError("knowledge base is empty")
        dims = {f.vector.shape[0] for f in fragments}
        if len(dims) != 1:
            raise DataError(f"fragments disagree on dimension: {sorted(dims)}")
        ids = [f.id for f in fragments]
        if len(set(ids)) != len(ids):
            dup = sorted({i for i in ids if ids.count(i) > 1})[0]
            raise DataError(f"duplicate fragment id {dup!r}")
        self.fragments = list(fragments)
        self.dimension = dims.pop()
        self._by_id = {f.id: f for f in self.fragments}

    def __len__(self) -> int:
        return len(self.fragments)

    def __getitem__(self, fragment_id: str) -> KnowledgeFragment:
        try:
            return self._by_id[fragment_id]
        except KeyError:
            raise DataError(f"unknown fragment id {fragment_id!r}") from None


@dataclass
class RetrievalResult:
    fragment_ids: list[str]
    similarities: list[float]
    weights: list[float]

    def __len__(self) -> int:
        return len(self.fragment_ids)


def cosine_sim(h: np.ndarray, k: np.ndarray) -> float:
    h = np.asarray(h, dtype=np.float64).reshape(-1)
    k = np.asarray(k, dtype=np.float64).reshape(-1)
    if h.shape != k.shape:
        raise DataError(f"cosine_sim length mismatch: {h.shape[0]} vs {k.shape[0]}")
    hn = np.linalg.norm(h)
    kn = np.linalg.norm(k)
    if hn == 0.0 or kn == 0.0:
        raise NumericError("cosine similarity of a zero-norm vector")
    return float(np.dot(h, k) / (hn * kn))


def ingest(
    fragment_texts: Sequence[tuple[str, str]],
    embed_text: Callable[[str], np.ndarray],
) -> KnowledgeBase:
    """Encode (id, text) pairs once; vectors are frozen from then on."""
    if not fragment_texts:
        raise DataError("no fragments to ingest")
    fragments = []
    seen: set[str] = set()
    for frag_id, text in fragment_texts:
        if frag_id in seen:
            raise DataError(f"duplicate fragment id {frag_id!r}")
        seen.add(frag_id)
        if not text or not text.strip():
            raise DataError(f"fragment {frag_id!r} has empty text")
        fragments.append(KnowledgeFragment(frag_id, text, embed_text(text)))
    return KnowledgeBase(fragments)


def load_knowledge_file(path: str) -> list[tuple[str, str]]:
    """Read line-delimited JSON objects {"id":..., "text":...}."""
    pairs: list[tuple[str, str]] = []
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise DataError(f"cannot read knowledge file {path}: {exc}") from exc
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}:{lineno}: malformed JSON: {exc}") from exc
        if not isinstance(obj, dict) or "id" not in obj or "text" not in obj:
            raise DataError(f"{path}:{lineno}: expected an object with id and text")
        pairs.append((str(obj["id"]), str(obj["text"])))
    return pairs


def retrieve(
    query: np.ndarray, kb: KnowledgeBase, top_k: int, tau: float = 0.1
) -> RetrievalResult:
    """Top-k fragments by cosine similarity with temperature-softmax weights.

    Ties on similarity break by ascending fragment id; weights are
    softmax(similarities / tau) over the selected set only.
    """
    if top_k < 1:
        raise DataError(f"top_k must be >= 1, got {top_k}")
    if tau <= 0:
        raise DataError(f"tau must be positive, got {tau}")
    sims = [(cosine_sim(query, f.vector), f.id) for f in kb.fragments]
    sims.sort(key=lambda pair: (-pair[0], pair[1]))
    selected = sims[: min(top_k, len(kb))]
    values = np.array([s for s, _ in selected])
    shifted = values / tau
    shifted -= shifted.max()
    raw = np.exp(shifted)
    weights = raw / raw.sum()
    return RetrievalResult(
        fragment_ids=[fid for _, fid in selected],
        similarities=[float(s) for s, _ in selected],
        weights=[float(w) for w in weights],
    )


def knowledge_aggregate(retrieval: RetrievalResult, kb: KnowledgeBase) -> np.ndarray:
    """Weighted sum of the retrieved fragment vectors (a constant for training)."""
    g = np.zeros(kb.dimension)
    for fid, w in zip(retrieval.fragment_ids, retrieval.weights):
        g += w * kb[fid].vector
    return g


def retrieved_matrix(retrieval: RetrievalResult, kb: KnowledgeBase) -> np.ndarray:
    """Stack the retrieved fragment vectors as rows, in retrieval order."""
    return np.stack([kb[fid].vector for fid in retrieval.fragment_ids], axis=0)
