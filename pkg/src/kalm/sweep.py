"""Retrain-per-point hyperparameter sweeps with CSV/JSON reporting.

Every (value, seed) point trains from scratch with the overridden parameter;
noise_ratio points corrupt training data only and evaluate on the untouched
test corpus.  Points are independent, so KALM_THREADS > 1 runs them in a
thread pool; rows are sorted before writing so reports stay byte-identical.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

from .config import TrainConfig
from .corpus import CorpusExample
from .errors import ConfigError
from .metrics import MetricsReport, evaluate
from .training import train_pipeline

CSV_HEADER = "param,value,seed,accuracy,rouge1_f,rougeL_f,bleu,fact_score"
SWEEPABLE = ("batch_size", "noise_ratio")


@dataclass
class SweepPoint:
    value: float
    seed: int
    report: MetricsReport


@dataclass
class SweepResult:
    param: str
    values: list[float]
    seeds: list[int]
    points: list[SweepPoint]

    def mean_by_value(self, metric: str) -> dict[float, float]:
        out: dict[float, float] = {}
        for value in self.values:
            scores = [getattr(p.report, metric) for p in self.points if p.value == value]
            out[value] = sum(scores) / len(scores)
        return out


def _override(cfg: TrainConfig, param: str, value: float, seed: int) -> TrainConfig:
    if param == "batch_size":
        return replace(cfg, batch_size=int(value), seed=seed).validate()
    return replace(cfg, noise_ratio=float(value), seed=seed).validate()


def run_sweep(
    param: str,
    values: list[float],
    seeds: list[int],
    base_cfg: TrainConfig,
    train_corpus: list[CorpusExample],
    test_corpus: list[CorpusExample],
    knowledge_pairs: list[tuple[str, str]],
) -> SweepResult:
    if param not in SWEEPABLE:
        raise ConfigError(f"sweep parameter must be one of {SWEEPABLE}, got {param!r}")
    if len(values) < 2:
        raise ConfigError("sweep needs at least 2 values")
    if not seeds:
        raise ConfigError("sweep needs at least 1 seed")
    if sorted(values) != list(values) or len(set(values)) != len(values):
        raise ConfigError("sweep values must be strictly increasing")

    def run_point(value: float, seed: int) -> SweepPoint:
        cfg = _override(base_cfg, param, value, seed)
        checkpoint, kb = train_pipeline(train_corpus, knowledge_pairs, cfg)
        return SweepPoint(value, seed, evaluate(checkpoint.model, test_corpus, kb))

    tasks = [(value, seed) for value in values for seed in seeds]
    workers = max(1, int(os.environ.get("KALM_THREADS", "1")))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            points = list(pool.map(lambda vs: run_point(*vs), tasks))
    else:
        points = [run_point(value, seed) for value, seed in tasks]
    points.sort(key=lambda p: (p.value, p.seed))
    return SweepResult(param, list(values), list(seeds), points)


def sweep_csv(result: SweepResult) -> str:
    lines = [CSV_HEADER]
    for p in result.points:
        r = p.report
        value = int(p.value) if result.param == "batch_size" else p.value
        lines.append(
            f"{result.param},{value},{p.seed},{r.accuracy},{r.rouge1_f},"
            f"{r.rougeL_f},{r.bleu},{r.fact_score}"
        )
    return "\n".join(lines) + "\n"


def sweep_json(result: SweepResult) -> str:
    payload = {
        "param": result.param,
        "values": result.values,
        "seeds": result.seeds,
        "points": [
            {
                "value": p.value,
                "seed": p.seed,
                "accuracy": p.report.accuracy,
                "rouge1_f": p.report.rouge1_f,
                "rougeL_f": p.report.rougeL_f,
                "bleu": p.report.bleu,
                "fact_score": p.report.fact_score,
            }
            for p in result.points
        ],
    }
    return json.dumps(payload, separators=(",", ":"))
