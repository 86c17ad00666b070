"""Model assembly and the end-to-end forward pass.

A Model owns every trainable parameter: the text encoder, the multi-head
reasoning attention, and the classifier head.  Knowledge-base vectors are not
parameters; they are frozen at ingestion (see ingest_with_initial_encoder).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor
from .config import TrainConfig
from .encoding import UNK_ID, TextEncoder, TokenSequence, Vocabulary, pool
from .errors import ConfigError, EmptyInputError
from .explain import explain_loss
from .fusion import (
    AttentionParams,
    AttentionWeights,
    ClassifierHead,
    FusedMatrix,
    FusionConfig,
    Prediction,
    fuse,
    predict,
    reason,
)
from .knowledge import KnowledgeBase, RetrievalResult, ingest, retrieve


class Model:
    def __init__(
        self,
        config: TrainConfig,
        vocab: Vocabulary,
        labels: list[str],
        encoder: TextEncoder,
        attention: AttentionParams,
        head: ClassifierHead,
    ):
        self.config = config
        self.vocab = vocab
        self.labels = labels
        self.encoder = encoder
        self.attention = attention
        self.head = head

    @classmethod
    def build(cls, config: TrainConfig, vocab: Vocabulary, labels: list[str]) -> "Model":
        """Deterministic initialization from config.seed."""
        config.validate()
        if len(labels) < 1:
            raise ConfigError("label set is empty")
        rng = np.random.default_rng([config.seed, 0])
        labels = sorted(labels)
        encoder = TextEncoder.build(len(vocab), config.d_model, rng)
        attention = AttentionParams.build(config.d_model, config.heads, rng)
        head = ClassifierHead.build(config.d_model, labels, rng)
        _seed_head_from_label_embeddings(head, encoder, vocab)
        return cls(config, vocab, labels, encoder, attention, head)

    def parameters(self) -> list[Parameter]:
        return self.encoder.parameters() + self.attention.parameters() + self.head.parameters()

    def fusion_config(self) -> FusionConfig:
        return FusionConfig(self.config.alpha, self.config.top_k, self.config.tau)

    def embed_text(self, text: str) -> np.ndarray:
        """Frozen pooled encoding of a text with the current parameters."""
        seq = self.vocab.sequence(text)
        return pool(self.encoder.encode(seq.ids)).value[0].copy()

    def label_index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise ConfigError(f"label {label!r} not in label set {self.labels}") from None


def _seed_head_from_label_embeddings(
    head: ClassifierHead, encoder: TextEncoder, vocab: Vocabulary
) -> None:
    """Zero-shot readout init: each class weight starts at the mean embedding
    of its label's in-vocabulary tokens (zeros when the label is unknown).

    With this prior the classifier scores fused representations against what
    the label words mean in embedding space from the first step, instead of
    having to grow a decision direction from nothing.
    """
    from .encoding import tokenize

    for col, label in enumerate(head.labels):
        try:
            tokens = tokenize(label)
        except EmptyInputError:
            continue
        rows = [vocab.lookup(t) for t in tokens]
        vectors = [encoder.embedding.value[r] for r in rows if r != UNK_ID]
        if vectors:
            head.weight.value[:, col] = np.mean(vectors, axis=0)


def ingest_with_initial_encoder(
    fragment_texts: list[tuple[str, str]], config: TrainConfig, vocab: Vocabulary,
    labels: list[str],
) -> KnowledgeBase:
    """Encode fragments with the seed-initial model state.

    Training never updates stored vectors, so both the training process and a
    later evaluation of the saved checkpoint must agree on the encoder state
    used at ingestion; the seed-derived initial state is the canonical one.
    """
    initial = Model.build(config, vocab, labels)
    return ingest(fragment_texts, initial.embed_text)


@dataclass
class ForwardPass:
    tokens: TokenSequence
    context: Tensor
    retrieval: RetrievalResult
    fused: FusedMatrix
    reasoned: Tensor
    attn: AttentionWeights
    prediction: Prediction


def run_forward(
    model: Model,
    kb: KnowledgeBase,
    text: str,
    retrieval: RetrievalResult | None = None,
) -> ForwardPass:
    """encode -> retrieve -> fuse -> reason -> predict for one input text.

    Retrieval is recomputed from the pooled context unless one is pinned;
    either way no gradient flows through it (top-k selection and the weight
    softmax are stop-gradient).  Gradient checking pins the retrieval of the
    unperturbed model so finite differences probe the same function the tape
    differentiates.
    """
    seq = model.vocab.sequence(text)
    h = model.encoder.encode(seq.ids)
    if retrieval is None:
        query = pool(h).value[0]  # plain vector: no gradient flows
        retrieval = retrieve(query, kb, model.config.top_k, model.config.tau)
    fused = fuse(h, retrieval, kb, model.fusion_config())
    z_out, attn = reason(fused, model.attention)
    prediction = predict(z_out, fused.n_tokens, model.head)
    return ForwardPass(seq, h, retrieval, fused, z_out, attn, prediction)


def forward_loss(
    model: Model,
    kb: KnowledgeBase,
    text: str,
    label: str,
    retrieval: RetrievalResult | None = None,
) -> tuple[Tensor, Tensor, Tensor, ForwardPass]:
    """(total, task, explain) loss tensors for one labeled example."""
    fp = run_forward(model, kb, text, retrieval)
    task = ad.cross_entropy(fp.prediction.probs, model.label_index(label))
    expl = explain_loss(fp.attn, fp.retrieval, model.config.beta)
    total = ad.add(task, ad.scale(expl, model.config.lambda_))
    return total, task, expl, fp
