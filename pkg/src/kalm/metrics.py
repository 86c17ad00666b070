"""Accuracy, ROUGE-1/L, BLEU, and whole-corpus evaluation reports.

BLEU uses add-one smoothing on the n >= 2 precisions because desk-scale
rationales are short; orders with no candidate n-grams drop out of the
geometric mean instead of zeroing it.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass

from .corpus import CorpusExample
from .encoding import tokenize
from .errors import DataError
from .explain import extract_chain, fact_score, render_rationale
from .knowledge import KnowledgeBase
from .model import Model, run_forward


@dataclass
class MetricsReport:
    accuracy: float
    rouge1_f: float
    rougeL_f: float
    bleu: float
    fact_score: float
    n_examples: int
    n_with_references: int = 0


def accuracy(predictions: list[str], gold_labels: list[str]) -> float:
    if len(predictions) != len(gold_labels):
        raise DataError(
            f"prediction/gold length mismatch: {len(predictions)} vs {len(gold_labels)}"
        )
    if not predictions:
        raise DataError("accuracy of empty prediction list")
    hits = sum(1 for p, g in zip(predictions, gold_labels) if p == g)
    return hits / len(predictions)


def _prf(overlap: float, cand_len: int, ref_len: int) -> tuple[float, float, float]:
    p = overlap / cand_len if cand_len else 0.0
    r = overlap / ref_len
    f = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f


def rouge_1(candidate: list[str], reference: list[str]) -> tuple[float, float, float]:
    """Clipped unigram overlap (precision, recall, F1)."""
    if not reference:
        raise DataError("rouge_1 requires a nonempty reference")
    if not candidate:
        return 0.0, 0.0, 0.0
    cand_counts = Counter(candidate)
    ref_counts = Counter(reference)
    overlap = sum(min(cand_counts[t], ref_counts[t]) for t in cand_counts)
    return _prf(overlap, len(candidate), len(reference))


def lcs_length(a: list[str], b: list[str]) -> int:
    """Classic dynamic program, rolling one row."""
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            if x == y:
                cur.append(prev[j - 1] + 1)
            else:
                cur.append(max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: list[str], reference: list[str]) -> tuple[float, float, float]:
    """LCS-based (precision, recall, F1)."""
    if not reference:
        raise DataError("rouge_l requires a nonempty reference")
    if not candidate:
        return 0.0, 0.0, 0.0
    lcs = lcs_length(candidate, reference)
    return _prf(lcs, len(candidate), len(reference))


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(candidate: list[str], references: list[list[str]], max_n: int = 4) -> float:
    """Modified n-gram precision BLEU with add-one smoothing for n >= 2.

    Clipping is against the maximum reference count per n-gram; the brevity
    penalty uses the closest reference length (ties -> shorter).
    """
    if not 1 <= max_n <= 4:
        raise DataError(f"max_n must be in [1, 4], got {max_n}")
    if not references or any(not r for r in references):
        raise DataError("bleu requires nonempty references")
    if not candidate:
        return 0.0
    log_sum = 0.0
    orders = 0
    for n in range(1, max_n + 1):
        cand_ngrams = _ngrams(candidate, n)
        total = sum(cand_ngrams.values())
        if total == 0:
            continue
        max_ref: Counter = Counter()
        for ref in references:
            for gram, count in _ngrams(ref, n).items():
                max_ref[gram] = max(max_ref[gram], count)
        matched = sum(min(count, max_ref[gram]) for gram, count in cand_ngrams.items())
        if n >= 2:
            precision = (matched + 1) / (total + 1)
        else:
            precision = matched / total
        if precision == 0.0:
            return 0.0
        log_sum += math.log(precision)
        orders += 1
    c = len(candidate)
    r = min((abs(len(ref) - c), len(ref)) for ref in references)[1]
    brevity = math.exp(1.0 - r / c) if c < r else 1.0
    return brevity * math.exp(log_sum / orders)


def evaluate(model: Model, corpus: list[CorpusExample], kb: KnowledgeBase) -> MetricsReport:
    """Accuracy over all examples; ROUGE/BLEU of rendered rationales against
    reference explanations over the subset that has them; FactScore over all."""
    if not corpus:
        raise DataError("cannot evaluate an empty corpus")
    predictions = []
    fact_sum = 0.0
    rouge1_sum = rougel_sum = bleu_sum = 0.0
    n_refs = 0
    for ex in corpus:
        fp = run_forward(model, kb, ex.text)
        predictions.append(fp.prediction.predicted_label)
        chain = extract_chain(fp.attn, fp.retrieval, fp.tokens, model.config.max_chain_edges)
        rationale = render_rationale(chain, fp.prediction, kb)
        fact_sum += fact_score(rationale, fp.retrieval, kb).value
        if ex.reference_explanation is not None:
            cand = tokenize(rationale.text)
            ref = tokenize(ex.reference_explanation)
            rouge1_sum += rouge_1(cand, ref)[2]
            rougel_sum += rouge_l(cand, ref)[2]
            bleu_sum += bleu(cand, [ref])
            n_refs += 1
    n = len(corpus)
    return MetricsReport(
        accuracy=accuracy(predictions, [ex.label for ex in corpus]),
        rouge1_f=rouge1_sum / n_refs if n_refs else 0.0,
        rougeL_f=rougel_sum / n_refs if n_refs else 0.0,
        bleu=bleu_sum / n_refs if n_refs else 0.0,
        fact_score=fact_sum / n,
        n_examples=n,
        n_with_references=n_refs,
    )


def report_json(report: MetricsReport, config_echo: dict) -> str:
    payload = {
        "accuracy": report.accuracy,
        "rouge1_f": report.rouge1_f,
        "rougeL_f": report.rougeL_f,
        "bleu": report.bleu,
        "fact_score": report.fact_score,
        "n_examples": report.n_examples,
        "n_with_references": report.n_with_references,
        "config_echo": config_echo,
    }
    return json.dumps(payload, separators=(",", ":"), sort_keys=False)
