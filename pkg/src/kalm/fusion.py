"""Weighted knowledge fusion, multi-head attention reasoning, prediction head.

Fusion interpolates every token row toward the retrieval-weighted knowledge
aggregate and appends the retrieved vectors as extra sequence positions, so
the reasoning attention can route token queries onto knowledge directly.
Gradients flow through the token rows only; retrieval weights and fragment
vectors are constants.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor
from .encoding import glorot_init
from .errors import ConfigError, DimensionError
from .knowledge import KnowledgeBase, RetrievalResult, knowledge_aggregate, retrieved_matrix


@dataclass
class FusionConfig:
    alpha: float = 0.7
    top_k: int = 4
    tau: float = 0.1

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must be in [0, 1], got {self.alpha}")


@dataclass
class FusedMatrix:
    """Token rows mixed with knowledge, plus the raw knowledge rows below."""

    z: Tensor
    n_tokens: int
    k_sel: int


def fuse(
    h: Tensor, retrieval: RetrievalResult, kb: KnowledgeBase, cfg: FusionConfig
) -> FusedMatrix:
    """z_i = alpha * h_i + (1 - alpha) * sum_j w_j k_j, knowledge rows appended."""
    if kb.dimension != h.cols:
        raise DimensionError(
            f"knowledge dimension {kb.dimension} != context width {h.cols}"
        )
    g = knowledge_aggregate(retrieval, kb)
    token_rows = ad.add_const(ad.scale(h, cfg.alpha), (1.0 - cfg.alpha) * g)
    knowledge_rows = ad.constant(retrieved_matrix(retrieval, kb))
    return FusedMatrix(
        z=ad.concat_rows([token_rows, knowledge_rows]),
        n_tokens=h.rows,
        k_sel=len(retrieval),
    )


@dataclass
class HeadParams:
    wq: Parameter
    wk: Parameter
    wv: Parameter


class AttentionParams:
    """Per-head projections plus the shared output projection."""

    def __init__(self, heads: list[HeadParams], wo: Parameter, d_model: int):
        self.heads = heads
        self.wo = wo
        self.d_model = d_model
        self.d_head = d_model // len(heads)

    @classmethod
    def build(cls, d_model: int, n_heads: int, rng: np.random.Generator) -> "AttentionParams":
        if n_heads < 1:
            raise ConfigError(f"heads must be >= 1, got {n_heads}")
        if d_model % n_heads != 0:
            raise ConfigError(f"d_model {d_model} is not divisible by {n_heads} heads")
        d_head = d_model // n_heads
        heads = [
            HeadParams(
                glorot_init(f"reason.h{i}.wq", d_model, d_head, rng),
                glorot_init(f"reason.h{i}.wk", d_model, d_head, rng),
                glorot_init(f"reason.h{i}.wv", d_model, d_head, rng),
            )
            for i in range(n_heads)
        ]
        # zero-init output projection: the residual passes through unchanged
        # until training grows the attention contribution
        wo = Parameter("reason.wo", np.zeros((d_model, d_model)))
        return cls(heads, wo, d_model)

    def parameters(self) -> list[Parameter]:
        out: list[Parameter] = []
        for h in self.heads:
            out.extend([h.wq, h.wk, h.wv])
        out.append(self.wo)
        return out


@dataclass
class AttentionWeights:
    """Per-head stochastic matrices over token + knowledge positions."""

    heads: list[Tensor]
    n_tokens: int
    k_sel: int

    def head_values(self) -> list[np.ndarray]:
        return [h.value for h in self.heads]

    def head_average(self) -> np.ndarray:
        return np.mean(self.head_values(), axis=0)


def reason(fused: FusedMatrix, params: AttentionParams) -> tuple[Tensor, AttentionWeights]:
    """One multi-head attention update with residual: z_out = z + Concat(heads) Wo."""
    z = fused.z
    if z.cols != params.d_model:
        raise DimensionError(f"fused width {z.cols} != attention d_model {params.d_model}")
    outputs = []
    weights = []
    for head in params.heads:
        out, attn = ad.scaled_dot_attention(
            ad.matmul(z, head.wq),
            ad.matmul(z, head.wk),
            ad.matmul(z, head.wv),
            params.d_head,
        )
        outputs.append(out)
        weights.append(attn)
    projected = ad.matmul(ad.concat_cols(outputs), params.wo)
    z_out = ad.add(z, projected)
    return z_out, AttentionWeights(weights, fused.n_tokens, fused.k_sel)


@dataclass
class ClassifierHead:
    weight: Parameter
    bias: Parameter
    labels: list[str]

    @classmethod
    def build(cls, d_model: int, labels: list[str], rng: np.random.Generator) -> "ClassifierHead":
        if not labels:
            raise ConfigError("label set is empty")
        # zero-init readout: the decision direction is purely the accumulated
        # gradient, not a random projection the short training runs cannot
        # overwrite
        weight = Parameter("head.weight", np.zeros((d_model, len(labels))))
        bias = Parameter("head.bias", np.zeros((1, len(labels))))
        return cls(weight, bias, list(labels))

    def parameters(self) -> list[Parameter]:
        return [self.weight, self.bias]


@dataclass
class Prediction:
    label_distribution: list[float]
    predicted_label: str
    probs: Tensor = field(repr=False, default=None)


def predict(z_out: Tensor, n_tokens: int, head: ClassifierHead) -> Prediction:
    """Mean-pool the token rows (knowledge rows excluded) into label probabilities."""
    if n_tokens < 1:
        raise DimensionError(f"n_tokens must be >= 1, got {n_tokens}")
    if not head.labels:
        raise ConfigError("label set is empty")
    pooled = ad.mean_over_rows(ad.slice_rows(z_out, 0, n_tokens))
    logits = ad.add(ad.matmul(pooled, head.weight), head.bias)
    probs = ad.softmax_rows(logits)
    dist = probs.value[0]
    best = int(np.argmax(dist))  # argmax takes the first maximum: label-set order
    return Prediction([float(p) for p in dist], head.labels[best], probs)
