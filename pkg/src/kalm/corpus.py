"""Corpus file handling and the synthetic knowledge-dependent task generator.

The generator builds a sentiment-style task whose label is recoverable only
through retrieval: every entity's outlook lives in a knowledge fragment, the
corpus text never states it, and train/test splits are disjoint by entity so
memorizing entity embeddings cannot generalize.
"""

from __future__ import annotations

import json
import string
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DataError
from .explain import evidence_sentence

# Entity names are a single unique word repeated: pooled query-fragment dot
# products grow quadratically with the repeats while cross-entity noise grows
# linearly, which gives retrieval a decisive cosine margin, and the short
# fragment keeps its outlook component large after pooling.
WORDS_PER_ENTITY = 1
WORD_REPEATS = 2


@dataclass
class CorpusExample:
    id: str
    text: str
    label: str
    reference_explanation: Optional[str] = None


def label_set(corpus: list[CorpusExample]) -> list[str]:
    return sorted({ex.label for ex in corpus})


def load_corpus(path: str) -> list[CorpusExample]:
    """Read line-delimited JSON with id / text / label / reference_explanation."""
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise DataError(f"cannot read corpus {path}: {exc}") from exc
    examples: list[CorpusExample] = []
    seen: set[str] = set()
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}:{lineno}: malformed JSON: {exc}") from exc
        if not isinstance(obj, dict):
            raise DataError(f"{path}:{lineno}: expected a JSON object")
        for key in ("id", "text", "label"):
            if key not in obj:
                raise DataError(f"{path}:{lineno}: missing field {key!r}")
        ex = CorpusExample(
            id=str(obj["id"]),
            text=str(obj["text"]),
            label=str(obj["label"]),
            reference_explanation=(
                str(obj["reference_explanation"])
                if obj.get("reference_explanation") is not None
                else None
            ),
        )
        if not ex.text.strip():
            raise DataError(f"{path}:{lineno}: empty text for example {ex.id!r}")
        if ex.id in seen:
            raise DataError(f"{path}:{lineno}: duplicate example id {ex.id!r}")
        seen.add(ex.id)
        examples.append(ex)
    return examples


def save_corpus(examples: list[CorpusExample], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            obj = {"id": ex.id, "text": ex.text, "label": ex.label}
            if ex.reference_explanation is not None:
                obj["reference_explanation"] = ex.reference_explanation
            fh.write(json.dumps(obj, separators=(", ", ": ")) + "\n")


def _entity_word(code: int) -> str:
    letters = string.ascii_lowercase
    name = ""
    for _ in range(3):
        code, rem = divmod(code, 26)
        name = letters[rem] + name
    return name


def _entity_names(num_entities: int) -> list[str]:
    """Deterministic names: per-entity distinct words, each repeated."""
    names = []
    for i in range(num_entities):
        words = [_entity_word(i * WORDS_PER_ENTITY + w) for w in range(WORDS_PER_ENTITY)]
        phrase = " ".join(words)
        names.append(" ".join([phrase] * WORD_REPEATS))
    return names


@dataclass
class SyntheticData:
    train: list[CorpusExample]
    test: list[CorpusExample]
    knowledge: list[tuple[str, str]]  # (fragment id, fragment text)


def generate_synthetic(
    num_entities: int, train_fraction: float, seed: int
) -> SyntheticData:
    """Entity-per-example corpus with outlook facts only in the knowledge base.

    Each entity gets one fragment "<name> outlook strong|weak" (seeded coin)
    and one example "report on <name> today" labeled by that polarity, with
    the deterministic evidence sentence as the reference explanation.  The
    train/test split is by entity, so test labels require retrieval.
    """
    if num_entities < 10:
        raise DataError(f"num_entities must be >= 10, got {num_entities}")
    if not 0.0 < train_fraction < 1.0:
        raise DataError(f"train_fraction must be in (0, 1), got {train_fraction}")
    rng = np.random.default_rng([seed, 11])
    names = _entity_names(num_entities)
    polarities = rng.integers(0, 2, size=num_entities)
    order = rng.permutation(num_entities)
    n_train = round(train_fraction * num_entities)
    train_entities = set(order[:n_train].tolist())

    train: list[CorpusExample] = []
    test: list[CorpusExample] = []
    knowledge: list[tuple[str, str]] = []
    for i in range(num_entities):
        name = names[i]
        frag_id = f"ent{i:04d}"
        polarity = "strong" if polarities[i] else "weak"
        frag_text = f"{name} outlook {polarity}"
        knowledge.append((frag_id, frag_text))
        example = CorpusExample(
            id=f"ex{i:04d}",
            text=f"report on {name} today",
            label=polarity,
            reference_explanation=evidence_sentence(frag_id, frag_text),
        )
        (train if i in train_entities else test).append(example)
    return SyntheticData(train, test, knowledge)


def save_knowledge(knowledge: list[tuple[str, str]], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for frag_id, text in knowledge:
            fh.write(json.dumps({"id": frag_id, "text": text}, separators=(", ", ": ")) + "\n")
