"""Joint task + explanation-consistency training, noise injection, checkpoints.

The optimizer accumulates gradients of the mean batch loss, applies Adam (or
plain SGD), and resets.  Everything is deterministic given (config, corpus,
knowledge): parameter init, epoch shuffles, and noise injection each draw
from their own seed stream.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .autodiff import Parameter
from . import autodiff as ad
from .config import TrainConfig
from .corpus import CorpusExample, label_set
from .encoding import Vocabulary, build_vocab, tokenize
from .errors import CheckpointVersionError, ConfigError, DataError, NumericError
from .knowledge import KnowledgeBase
from .model import Model, forward_loss, ingest_with_initial_encoder

CHECKPOINT_FORMAT = "KALM1"


@dataclass
class LossBreakdown:
    task: float
    explain: float
    total: float


class AdamOptimizer:
    """Adam with the standard constants; lr=0 leaves parameters untouched."""

    BETA1 = 0.9
    BETA2 = 0.999
    EPS = 1e-8

    def __init__(self, params: list[Parameter], learning_rate: float):
        self.params = params
        self.lr = learning_rate
        self.m = [np.zeros_like(p.value) for p in params]
        self.v = [np.zeros_like(p.value) for p in params]
        self.t = 0

    def step(self) -> None:
        if self.lr == 0.0:
            return
        self.t += 1
        for p, m, v in zip(self.params, self.m, self.v):
            m *= self.BETA1
            m += (1 - self.BETA1) * p.grad
            v *= self.BETA2
            v += (1 - self.BETA2) * p.grad * p.grad
            m_hat = m / (1 - self.BETA1 ** self.t)
            v_hat = v / (1 - self.BETA2 ** self.t)
            p.value -= self.lr * m_hat / (np.sqrt(v_hat) + self.EPS)


class SgdOptimizer:
    def __init__(self, params: list[Parameter], learning_rate: float):
        self.params = params
        self.lr = learning_rate

    def step(self) -> None:
        if self.lr == 0.0:
            return
        for p in self.params:
            p.value -= self.lr * p.grad


def make_optimizer(model: Model, cfg: TrainConfig | None = None):
    cfg = cfg or model.config
    cls = AdamOptimizer if cfg.optimizer == "adam" else SgdOptimizer
    return cls(model.parameters(), cfg.learning_rate)


def total_loss(
    example: CorpusExample, model: Model, kb: KnowledgeBase
) -> LossBreakdown:
    total, task, expl, _ = forward_loss(model, kb, example.text, example.label)
    return LossBreakdown(
        task=float(task.value[0, 0]),
        explain=float(expl.value[0, 0]),
        total=float(total.value[0, 0]),
    )


def train_step(
    batch: list[CorpusExample], model: Model, kb: KnowledgeBase, optimizer
) -> LossBreakdown:
    """Accumulate mean-loss gradients over the batch, step, reset."""
    if not batch:
        raise DataError("empty training batch")
    for p in model.parameters():
        p.zero_grad()
    task_sum = 0.0
    explain_sum = 0.0
    total_sum = 0.0
    inv = 1.0 / len(batch)
    for example in batch:
        try:
            total, task, expl, _ = forward_loss(model, kb, example.text, example.label)
            ad.scale(total, inv).backward()
        except NumericError as exc:
            raise NumericError(f"non-finite loss on example {example.id!r}: {exc}") from exc
        task_sum += float(task.value[0, 0])
        explain_sum += float(expl.value[0, 0])
        total_sum += float(total.value[0, 0])
    optimizer.step()
    for p in model.parameters():
        p.zero_grad()
    return LossBreakdown(task_sum * inv, explain_sum * inv, total_sum * inv)


def inject_noise(
    corpus: list[CorpusExample],
    ratio: float,
    seed: int,
    vocab: Vocabulary | None = None,
) -> list[CorpusExample]:
    """Corrupt a seeded round(ratio*N) prefix of examples, labels untouched.

    In each selected example every token is independently replaced with
    probability 0.5 by a uniform random vocabulary token (corpus token
    inventory when no vocabulary is given); a selected example is guaranteed
    to end up different from the original.
    """
    if not 0.0 <= ratio <= 1.0:
        raise DataError(f"noise ratio must be in [0, 1], got {ratio}")
    if ratio == 0.0 or not corpus:
        return list(corpus)
    if vocab is not None:
        pool_tokens = sorted(vocab.id_to_token[1:])
    else:
        pool_tokens = sorted({t for ex in corpus for t in tokenize(ex.text)})
    rng = np.random.default_rng([seed, 23])
    count = round(ratio * len(corpus))
    selected = set(rng.permutation(len(corpus))[:count].tolist())
    out: list[CorpusExample] = []
    for idx, ex in enumerate(corpus):
        if idx not in selected:
            out.append(ex)
            continue
        tokens = tokenize(ex.text)
        flips = rng.random(len(tokens)) < 0.5
        if not flips.any():
            flips[0] = True
        new_tokens = list(tokens)
        for i, flip in enumerate(flips):
            if not flip:
                continue
            choices = [t for t in pool_tokens if t != tokens[i]] or pool_tokens
            new_tokens[i] = choices[rng.integers(0, len(choices))]
        out.append(
            CorpusExample(ex.id, " ".join(new_tokens), ex.label, ex.reference_explanation)
        )
    return out


@dataclass
class Checkpoint:
    model: Model
    history: list[LossBreakdown]


def train(
    corpus: list[CorpusExample],
    kb: KnowledgeBase,
    cfg: TrainConfig,
    model: Model,
) -> Checkpoint:
    """Seeded epoch shuffles over fixed-size batches; returns model + history.

    cfg.noise_ratio > 0 corrupts the training corpus up front (evaluation
    corpora are never touched).  The model carries the pipeline vocabulary;
    build it with train_pipeline for the standard corpus+knowledge setup.
    """
    cfg.validate()
    if not corpus:
        raise DataError("training corpus is empty")
    labels = label_set(corpus)
    if len(labels) < 2:
        raise ConfigError(f"training needs >= 2 distinct labels, got {labels}")
    if cfg.noise_ratio > 0:
        corpus = inject_noise(corpus, cfg.noise_ratio, cfg.seed, model.vocab)
    optimizer = make_optimizer(model, cfg)
    shuffle_rng = np.random.default_rng([cfg.seed, 1])
    history: list[LossBreakdown] = []
    for _epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(len(corpus))
        task_sum = explain_sum = total_sum = 0.0
        steps = 0
        for start in range(0, len(corpus), cfg.batch_size):
            batch = [corpus[i] for i in order[start : start + cfg.batch_size]]
            loss = train_step(batch, model, kb, optimizer)
            task_sum += loss.task
            explain_sum += loss.explain
            total_sum += loss.total
            steps += 1
        history.append(LossBreakdown(task_sum / steps, explain_sum / steps, total_sum / steps))
    return Checkpoint(model, history)


def build_pipeline(
    corpus: list[CorpusExample],
    knowledge_pairs: list[tuple[str, str]],
    cfg: TrainConfig,
) -> tuple[Model, KnowledgeBase]:
    """Vocabulary over corpus + knowledge texts, seeded model, frozen KB."""
    if not corpus:
        raise DataError("corpus is empty")
    token_lists = [tokenize(ex.text) for ex in corpus]
    token_lists += [tokenize(text) for _, text in knowledge_pairs]
    vocab = build_vocab(token_lists)
    labels = label_set(corpus)
    model = Model.build(cfg, vocab, labels)
    kb = ingest_with_initial_encoder(knowledge_pairs, cfg, vocab, labels)
    return model, kb


def train_pipeline(
    corpus: list[CorpusExample],
    knowledge_pairs: list[tuple[str, str]],
    cfg: TrainConfig,
) -> tuple[Checkpoint, KnowledgeBase]:
    model, kb = build_pipeline(corpus, knowledge_pairs, cfg)
    return train(corpus, kb, cfg, model), kb


# ---------------------------------------------------------------------------
# checkpoint persistence (line-delimited JSON, format tag KALM1)
# ---------------------------------------------------------------------------


def _dump(obj) -> str:
    return json.dumps(obj, separators=(",", ":"))


def save_checkpoint(checkpoint_model: Model, path: str) -> None:
    cfg = checkpoint_model.config
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(
            _dump(
                {
                    "format": CHECKPOINT_FORMAT,
                    "d_model": cfg.d_model,
                    "heads": cfg.heads,
                    "labels": checkpoint_model.labels,
                    "config": cfg.to_dict(),
                }
            )
            + "\n"
        )
        for p in checkpoint_model.parameters():
            fh.write(
                _dump(
                    {
                        "name": p.name,
                        "rows": p.rows,
                        "cols": p.cols,
                        "values": [float(v) for v in p.value.ravel()],
                    }
                )
                + "\n"
            )
        fh.write(_dump({"vocab": checkpoint_model.vocab.id_to_token}) + "\n")


def load_checkpoint(path: str) -> Model:
    try:
        with open(path, encoding="utf-8") as fh:
            lines = [line for line in fh.read().split("\n") if line.strip()]
    except OSError as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from exc
    if not lines:
        raise DataError(f"checkpoint {path} is empty")

    def parse(lineno: int) -> dict:
        try:
            obj = json.loads(lines[lineno])
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: line {lineno + 1} is not valid JSON: {exc}") from exc
        if not isinstance(obj, dict):
            raise DataError(f"{path}: line {lineno + 1} is not an object")
        return obj

    header = parse(0)
    version = header.get("format")
    if version != CHECKPOINT_FORMAT:
        raise CheckpointVersionError(
            f"checkpoint format {version!r} does not match reader {CHECKPOINT_FORMAT!r}"
        )
    try:
        cfg = TrainConfig.from_dict(header["config"])
        labels = [str(x) for x in header["labels"]]
    except KeyError as exc:
        raise DataError(f"{path}: header missing {exc}") from exc

    tail = parse(len(lines) - 1)
    if "vocab" not in tail:
        raise DataError(f"{path}: truncated checkpoint (missing vocabulary line)")
    vocab = Vocabulary([str(t) for t in tail["vocab"]])

    params: dict[str, np.ndarray] = {}
    for lineno in range(1, len(lines) - 1):
        obj = parse(lineno)
        for key in ("name", "rows", "cols", "values"):
            if key not in obj:
                raise DataError(f"{path}: line {lineno + 1} missing parameter field {key!r}")
        rows, cols = int(obj["rows"]), int(obj["cols"])
        values = np.asarray(obj["values"], dtype=np.float64)
        if values.size != rows * cols:
            raise DataError(
                f"{path}: parameter {obj['name']!r} has {values.size} values for "
                f"shape ({rows}, {cols})"
            )
        params[str(obj["name"])] = values.reshape(rows, cols)

    model = Model.build(cfg, vocab, labels)
    for p in model.parameters():
        if p.name not in params:
            raise DataError(f"{path}: missing parameter {p.name!r}")
        stored = params.pop(p.name)
        if stored.shape != p.value.shape:
            raise DataError(
                f"{path}: parameter {p.name!r} shape {stored.shape} does not match "
                f"model shape {p.value.shape}"
            )
        p.value[:] = stored
    if params:
        raise DataError(f"{path}: unexpected parameters {sorted(params)}")
    return model
