"""Reasoning chains, the explanation-consistency loss, rationales, FactScore.

A chain is the ranked list of the strongest head-averaged attention edges out
of token query positions.  The consistency loss pulls the attention mass that
tokens place on knowledge positions toward the retrieval weight distribution
and adds an entropy term that sharpens token rows; both pieces stay on the
autodiff tape so they train the whole pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .encoding import TokenSequence, tokenize
from .errors import DataError
from .fusion import AttentionWeights, Prediction
from .knowledge import KnowledgeBase, RetrievalResult

ATTRIBUTION_EPS = 1e-9


@dataclass
class ChainStep:
    source_index: int
    source_text: str
    target_index: int          # position in the fused sequence
    target_id: str             # token index as str, or fragment id
    target_text: str
    target_is_knowledge: bool
    weight: float


@dataclass
class ReasoningChain:
    steps: list[ChainStep]
    evidence: list[tuple[str, float]]  # (fragment id, retrieval weight)


@dataclass
class Rationale:
    text: str
    cited_fragment_ids: list[str]


@dataclass
class FactScoreValue:
    value: float
    supported: int
    total: int


def extract_chain(
    attn: AttentionWeights,
    retrieval: RetrievalResult,
    tokens: TokenSequence,
    max_edges: int = 5,
) -> ReasoningChain:
    """Strongest non-self attention edges from token rows, weight-descending.

    Ties break by (source index, target index) ascending; weights are the raw
    head-averaged attention entries.
    """
    if max_edges < 1:
        raise DataError(f"max_edges must be >= 1, got {max_edges}")
    avg = attn.head_average()
    n = attn.n_tokens
    edges: list[tuple[float, int, int]] = []
    for i in range(n):
        for j in range(avg.shape[1]):
            if i == j:
                continue
            edges.append((float(avg[i, j]), i, j))
    edges.sort(key=lambda e: (-e[0], e[1], e[2]))
    steps = []
    for weight, i, j in edges[:max_edges]:
        if j < n:
            step = ChainStep(i, tokens.tokens[i], j, str(j), tokens.tokens[j], False, weight)
        else:
            frag_id = retrieval.fragment_ids[j - n]
            step = ChainStep(i, tokens.tokens[i], j, frag_id, frag_id, True, weight)
        steps.append(step)
    evidence = list(zip(retrieval.fragment_ids, retrieval.weights))
    return ReasoningChain(steps, evidence)


def knowledge_attribution(attn: AttentionWeights) -> Tensor:
    """Mean attention mass from token rows onto each knowledge position,
    renormalized over knowledge positions with epsilon smoothing."""
    avg = head_average_tensor(attn)
    block = ad.slice_cols(ad.slice_rows(avg, 0, attn.n_tokens), attn.n_tokens,
                          attn.n_tokens + attn.k_sel)
    raw = ad.add_const(ad.mean_over_rows(block), ATTRIBUTION_EPS)
    return ad.div_by_scalar(raw, ad.sum_all(raw))


def head_average_tensor(attn: AttentionWeights) -> Tensor:
    acc = attn.heads[0]
    for h in attn.heads[1:]:
        acc = ad.add(acc, h)
    return ad.scale(acc, 1.0 / len(attn.heads))


def explain_loss_terms(
    attn: AttentionWeights, retrieval: RetrievalResult
) -> tuple[Tensor | None, Tensor]:
    """(KL(attribution || retrieval weights), mean token-row entropy)."""
    avg = head_average_tensor(attn)
    entropy = ad.mean_row_entropy(ad.slice_rows(avg, 0, attn.n_tokens))
    if attn.k_sel == 0:
        return None, entropy
    a_kb = knowledge_attribution(attn)
    log_w = np.log(np.asarray(retrieval.weights, dtype=np.float64)).reshape(1, -1)
    kl = ad.sum_all(ad.mul(a_kb, ad.add_const(ad.log(a_kb), -log_w)))
    return kl, entropy


def explain_loss(
    attn: AttentionWeights, retrieval: RetrievalResult, beta: float = 0.1
) -> Tensor:
    """KL(knowledge attribution || retrieval weights) + beta * row entropy."""
    if beta < 0:
        raise DataError(f"beta must be >= 0, got {beta}")
    kl, entropy = explain_loss_terms(attn, retrieval)
    scaled_entropy = ad.scale(entropy, beta)
    if kl is None:
        return scaled_entropy
    return ad.add(kl, scaled_entropy)


EVIDENCE_PREFIX = "supported by "


def step_sentence(label: str, step: ChainStep) -> str:
    return (
        f'predicted {label} because "{step.source_text}" attends to '
        f'"{step.target_text}" (w={step.weight:.4f})'
    )


def evidence_sentence(fragment_id: str, fragment_text: str) -> str:
    return f'{EVIDENCE_PREFIX}{fragment_id}: "{fragment_text}"'


def render_rationale(
    chain: ReasoningChain, pred: Prediction, kb: KnowledgeBase
) -> Rationale:
    """Deterministic one-sentence-per-line template; weights render to four
    decimals with the usual round-half-even float formatting."""
    if not chain.steps:
        raise DataError("cannot render a rationale from an empty chain")
    lines = [step_sentence(pred.predicted_label, s) for s in chain.steps]
    cited = []
    for frag_id, _weight in chain.evidence:
        lines.append(evidence_sentence(frag_id, kb[frag_id].text))
        cited.append(frag_id)
    return Rationale("\n".join(lines), cited)


def fact_score(
    rationale: Rationale,
    retrieval: RetrievalResult,
    kb: KnowledgeBase,
    overlap_threshold: float = 0.5,
) -> FactScoreValue:
    """Fraction of evidence sentences whose cited fragment was retrieved and
    lexically covers the sentence: |tokens(sentence) & tokens(fragment)| /
    |tokens(fragment)| >= threshold."""
    if not 0.0 < overlap_threshold <= 1.0:
        raise DataError(f"overlap_threshold must be in (0, 1], got {overlap_threshold}")
    retrieved = set(retrieval.fragment_ids)
    supported = 0
    total = 0
    for line in rationale.text.split("\n"):
        if not line.startswith(EVIDENCE_PREFIX):
            continue
        total += 1
        cited_id = line[len(EVIDENCE_PREFIX):].split(":", 1)[0]
        if cited_id not in retrieved:
            continue
        try:
            fragment = kb[cited_id]
        except DataError:
            continue
        frag_tokens = set(tokenize(fragment.text))
        sent_tokens = set(tokenize(line))
        if frag_tokens and len(sent_tokens & frag_tokens) / len(frag_tokens) >= overlap_threshold:
            supported += 1
    value = supported / total if total else 0.0
    return FactScoreValue(value, supported, total)
