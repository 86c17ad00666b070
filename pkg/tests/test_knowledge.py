import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kalm.errors import DataError, NumericError
from kalm.knowledge import (
    KnowledgeBase,
    KnowledgeFragment,
    cosine_sim,
    ingest,
    load_knowledge_file,
    retrieve,
)


def unit_fragment(frag_id: str, sim: float, dim: int = 4) -> KnowledgeFragment:
    """Fragment whose cosine against the first basis vector is exactly sim."""
    vec = np.zeros(dim)
    vec[0] = sim
    vec[1] = np.sqrt(1.0 - sim * sim)
    return KnowledgeFragment(frag_id, f"text {frag_id}", vec)


def basis_query(dim: int = 4) -> np.ndarray:
    q = np.zeros(dim)
    q[0] = 1.0
    return q


def test_cosine_identical_direction():
    assert cosine_sim([1, 0, 0], [1, 0, 0]) == pytest.approx(1.0)


def test_cosine_orthogonal():
    assert cosine_sim([1, 0, 0], [0, 1, 0]) == pytest.approx(0.0)


def test_cosine_direct_evaluation():
    assert cosine_sim([1, 1, 0], [1, 0, 0]) == pytest.approx(0.70710678, abs=1e-6)


def test_cosine_zero_norm_raises():
    with pytest.raises(NumericError):
        cosine_sim([0, 0], [1, 0])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.1, 10.0))
def test_cosine_scale_invariance_and_antipodal(seed, c):
    h = np.random.default_rng(seed).normal(size=8)
    if np.linalg.norm(h) == 0:
        return
    assert cosine_sim(h, c * h) == pytest.approx(1.0, abs=1e-12)
    assert cosine_sim(h, -h) == pytest.approx(-1.0, abs=1e-12)


def test_ingest_shapes_and_determinism():
    def embed(text):
        rng = np.random.default_rng(abs(hash(text)) % 2**32)
        return rng.normal(size=6)

    kb = ingest([("a", "alpha"), ("b", "beta"), ("c", "alpha")], embed)
    assert len(kb) == 3 and kb.dimension == 6
    assert np.array_equal(kb["a"].vector, kb["c"].vector)  # identical texts


def test_ingest_duplicate_id_names_offender():
    with pytest.raises(DataError, match="dup"):
        ingest([("dup", "x"), ("dup", "y")], lambda t: np.ones(3))


def test_ingest_empty_text_rejected():
    with pytest.raises(DataError):
        ingest([("a", "   ")], lambda t: np.ones(3))


def test_empty_kb_rejected():
    with pytest.raises(DataError):
        KnowledgeBase([])


def test_retrieve_derived_softmax_weights():
    kb = KnowledgeBase([unit_fragment("A", 0.9), unit_fragment("B", 0.5), unit_fragment("C", 0.1)])
    result = retrieve(basis_query(), kb, top_k=2, tau=0.1)
    assert result.fragment_ids == ["A", "B"]
    assert result.weights[0] == pytest.approx(0.9820, abs=1e-4)
    assert result.weights[1] == pytest.approx(0.0180, abs=1e-4)


def test_retrieve_topk_exceeding_kb():
    kb = KnowledgeBase([unit_fragment("A", 0.9), unit_fragment("B", 0.5)])
    result = retrieve(basis_query(), kb, top_k=10, tau=0.1)
    assert len(result) == 2
    assert sum(result.weights) == pytest.approx(1.0, abs=1e-9)


def test_retrieve_ties_break_by_ascending_id():
    kb = KnowledgeBase([unit_fragment(i, 0.4) for i in ("c", "a", "b")])
    result = retrieve(basis_query(), kb, top_k=3, tau=0.1)
    assert result.fragment_ids == ["a", "b", "c"]
    assert np.allclose(result.weights, 1.0 / 3.0)


def test_retrieve_zero_norm_query():
    kb = KnowledgeBase([unit_fragment("A", 0.5)])
    with pytest.raises(NumericError):
        retrieve(np.zeros(4), kb, top_k=1)


def brute_force_oracle(query, kb, top_k, tau):
    scored = sorted(
        ((cosine_sim(query, f.vector), f.id) for f in kb.fragments),
        key=lambda p: (-p[0], p[1]),
    )[: min(top_k, len(kb))]
    sims = np.array([s for s, _ in scored])
    z = sims / tau
    z = z - z.max()
    w = np.exp(z)
    w = w / w.sum()
    return [i for _, i in scored], [float(s) for s in sims], [float(x) for x in w]


def test_retrieve_matches_brute_force_oracle():
    rng = np.random.default_rng(123)
    for trial in range(20):
        size = int(rng.integers(1, 60))
        dim = int(rng.integers(2, 16))
        vectors = rng.normal(size=(size, dim))
        if trial % 3 == 0 and size > 2:
            vectors[1] = vectors[0]  # tie case
        kb = KnowledgeBase(
            [KnowledgeFragment(f"f{i:03d}", "t", vectors[i]) for i in range(size)]
        )
        query = rng.normal(size=dim)
        top_k = int(rng.integers(1, size + 2))
        result = retrieve(query, kb, top_k, tau=0.1)
        ids, sims, weights = brute_force_oracle(query, kb, top_k, 0.1)
        assert result.fragment_ids == ids
        assert result.similarities == sims
        assert result.weights == weights


def test_weights_invariant_to_similarity_shift():
    base = [0.2, 0.5, 0.7]
    shift = 0.2
    kbs = [
        KnowledgeBase([unit_fragment(f"f{i}", s + d) for i, s in enumerate(base)])
        for d in (0.0, shift)
    ]
    results = [retrieve(basis_query(), kb, top_k=3, tau=0.1) for kb in kbs]
    assert np.abs(np.array(results[0].weights) - results[1].weights).max() < 1e-12


def test_load_knowledge_file(tmp_path):
    path = tmp_path / "kb.jsonl"
    path.write_text(
        json.dumps({"id": "a", "text": "alpha"}) + "\n" + json.dumps({"id": "b", "text": "beta"}) + "\n"
    )
    assert load_knowledge_file(str(path)) == [("a", "alpha"), ("b", "beta")]


def test_load_knowledge_file_malformed_line(tmp_path):
    path = tmp_path / "kb.jsonl"
    path.write_text('{"id": "a", "text": "alpha"}\nnot json\n')
    with pytest.raises(DataError, match=":2"):
        load_knowledge_file(str(path))
