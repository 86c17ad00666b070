"""Tokenization, vocabulary construction, and the context encoder.

The encoder is deliberately small: embedding lookup plus sinusoidal position
encodings, passed through one residual single-head self-attention block, so
that each output row depends on the whole sequence while staying cheap enough
for exhaustive gradient checking.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor
from .errors import EmptyInputError

UNK_TOKEN = "<unk>"
UNK_ID = 0

# Position encodings are scaled well below the embedding range so that pooled
# retrieval queries stay content-dominated; unit-amplitude sinusoids would
# drown the 0.1-scale embeddings.
POSITION_SCALE = 0.005

EMBED_INIT_RANGE = 0.1


def glorot_init(name: str, rows: int, cols: int, rng: np.random.Generator) -> Parameter:
    """Glorot-uniform projection init; keeps attention-logit gradients large
    enough for finite-difference verification."""
    bound = np.sqrt(6.0 / (rows + cols))
    return Parameter(name, rng.uniform(-bound, bound, (rows, cols)))


def tokenize(text: str) -> list[str]:
    """Lowercase and split into word, digit-run, and punctuation tokens.

    Whitespace separates tokens; within a chunk, maximal digit runs and
    maximal letter runs are single tokens and every other character stands
    alone.  Raises EmptyInputError for blank input.
    """
    if not text or not text.strip():
        raise EmptyInputError("cannot tokenize empty text")
    tokens: list[str] = []
    current = ""
    mode = ""  # "alpha" | "digit"
    for ch in text.lower():
        if ch.isspace():
            if current:
                tokens.append(current)
                current, mode = "", ""
        elif ch.isdigit():
            if mode == "digit":
                current += ch
            else:
                if current:
                    tokens.append(current)
                current, mode = ch, "digit"
        elif ch.isalpha():
            if mode == "alpha":
                current += ch
            else:
                if current:
                    tokens.append(current)
                current, mode = ch, "alpha"
        else:
            if current:
                tokens.append(current)
                current, mode = "", ""
            tokens.append(ch)
    if current:
        tokens.append(current)
    return tokens


@dataclass
class TokenSequence:
    ids: list[int]
    source_text: str
    tokens: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.ids)


class Vocabulary:
    """Frequency-ordered token table with id 0 reserved for unknowns."""

    def __init__(self, id_to_token: list[str]):
        if not id_to_token or id_to_token[0] != UNK_TOKEN:
            raise ValueError("id 0 must be the unknown token")
        self.id_to_token = list(id_to_token)
        self.token_to_id = {tok: i for i, tok in enumerate(self.id_to_token)}

    def __len__(self) -> int:
        return len(self.id_to_token)

    def lookup(self, token: str) -> int:
        return self.token_to_id.get(token, UNK_ID)

    def encode_tokens(self, tokens: list[str]) -> list[int]:
        return [self.lookup(t) for t in tokens]

    def sequence(self, text: str) -> TokenSequence:
        tokens = tokenize(text)
        return TokenSequence(self.encode_tokens(tokens), text, tokens)


def build_vocab(corpus: list[list[str]]) -> Vocabulary:
    """Assign ids by descending frequency, ties broken lexicographically."""
    if not corpus:
        raise EmptyInputError("cannot build a vocabulary from an empty corpus")
    counts: dict[str, int] = {}
    for tokens in corpus:
        for tok in tokens:
            counts[tok] = counts.get(tok, 0) + 1
    ordered = sorted(counts, key=lambda t: (-counts[t], t))
    return Vocabulary([UNK_TOKEN] + ordered)


def sinusoidal_positions(n: int, d_model: int) -> np.ndarray:
    """Standard sin/cos position table scaled by POSITION_SCALE."""
    pos = np.arange(n, dtype=np.float64)[:, None]
    dim = np.arange(d_model, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, (2.0 * (dim // 2)) / d_model)
    table = np.where(dim % 2 == 0, np.sin(angle), np.cos(angle))
    return POSITION_SCALE * table


class TextEncoder:
    """Embedding + positions + one residual single-head attention block.

    Queries and keys are the embedded rows themselves; values pass through a
    learned projection that starts at zero, so the residual path dominates at
    initialization and the contextual mixing is grown by training.
    """

    def __init__(self, embedding: Parameter, wv: Parameter):
        self.embedding = embedding
        self.wv = wv
        self.d_model = embedding.cols
        self._position_cache: dict[int, np.ndarray] = {}

    @classmethod
    def build(cls, vocab_size: int, d_model: int, rng: np.random.Generator) -> "TextEncoder":
        embedding = Parameter(
            "embedding",
            rng.uniform(-EMBED_INIT_RANGE, EMBED_INIT_RANGE, (vocab_size, d_model)),
        )
        wv = Parameter("encoder.wv", np.zeros((d_model, d_model)))
        return cls(embedding, wv)

    def parameters(self) -> list[Parameter]:
        return [self.embedding, self.wv]

    def positions(self, n: int) -> np.ndarray:
        if n not in self._position_cache:
            self._position_cache[n] = sinusoidal_positions(n, self.d_model)
        return self._position_cache[n]

    def encode(self, ids: list[int]) -> Tensor:
        """Context matrix H for a token id sequence; one row per token."""
        if len(ids) == 0:
            raise EmptyInputError("cannot encode an empty token sequence")
        x = ad.add_const(ad.embed_rows(self.embedding, ids), self.positions(len(ids)))
        attended, _ = ad.scaled_dot_attention(x, x, ad.matmul(x, self.wv), self.d_model)
        return ad.add(x, attended)


def pool(h: Tensor) -> Tensor:
    """Column-wise mean of the context rows; the retrieval query vector."""
    if h.rows == 0:
        raise EmptyInputError("cannot pool an empty context matrix")
    return ad.mean_over_rows(h)
