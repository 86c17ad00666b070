"""Command-line interface: train, eval, explain, retrieve, sweep, gradcheck, synth.

Exit codes: 0 success, 1 usage error, 2 data/config error, 3 numeric error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .config import TrainConfig, load_config
from .corpus import CorpusExample, generate_synthetic, load_corpus, save_corpus, save_knowledge
from .errors import KalmError, NumericError
from .explain import extract_chain, render_rationale
from .knowledge import load_knowledge_file, retrieve
from .metrics import evaluate, report_json
from .model import Model, ingest_with_initial_encoder, run_forward, forward_loss
from .autodiff import grad_check
from .encoding import build_vocab, pool, tokenize
from .sweep import run_sweep, sweep_csv, sweep_json
from .training import build_pipeline, load_checkpoint, save_checkpoint, train


class UsageError(KalmError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would sys.exit(2); we want exit 1
        raise UsageError(message)


def build_parser() -> _Parser:
    parser = _Parser(prog="kalm", description=__doc__)
    sub = parser.add_subparsers(dest="command")

    p_train = sub.add_parser("train", parents=[], help="train a model")
    p_train.add_argument("--config", required=True)
    p_train.add_argument("--corpus", required=True)
    p_train.add_argument("--kb", required=True)
    p_train.add_argument("--out", required=True)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--corpus", required=True)
    p_eval.add_argument("--kb", required=True)
    p_eval.add_argument("--report", required=True)

    p_explain = sub.add_parser("explain", help="prediction + chain + rationale for a text")
    p_explain.add_argument("--checkpoint", required=True)
    p_explain.add_argument("--kb", required=True)
    p_explain.add_argument("--text", required=True)
    p_explain.add_argument("--format", choices=["json", "text"], default="text")

    p_retr = sub.add_parser("retrieve", help="top-k retrieval for a text")
    p_retr.add_argument("--kb", required=True)
    p_retr.add_argument("--checkpoint", required=True)
    p_retr.add_argument("--text", required=True)
    p_retr.add_argument("--k", type=int, required=True)

    p_sweep = sub.add_parser("sweep", help="retrain-per-point hyperparameter sweep")
    p_sweep.add_argument("--param", choices=["batch_size", "noise_ratio"], required=True)
    p_sweep.add_argument("--values", required=True, help="comma-separated values")
    p_sweep.add_argument("--seeds", required=True, help="comma-separated seeds")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--train", dest="train_corpus", required=True)
    p_sweep.add_argument("--test", dest="test_corpus", required=True)
    p_sweep.add_argument("--kb", required=True)
    p_sweep.add_argument("--out-dir", required=True)

    p_grad = sub.add_parser("gradcheck", help="finite-difference gradient check")
    p_grad.add_argument("--seed", type=int, default=0)
    p_grad.add_argument("--perturbation", type=float, default=1e-5)

    p_synth = sub.add_parser("synth", help="generate the synthetic corpus + knowledge base")
    p_synth.add_argument("--entities", type=int, required=True)
    p_synth.add_argument("--out-dir", required=True)
    p_synth.add_argument("--seed", type=int, required=True)
    p_synth.add_argument("--train-fraction", type=float, default=0.8)

    return parser


# ---------------------------------------------------------------------------
# the tiny gradcheck fixture: d_model=8, 2 heads, 5-token input, top_k=2,
# vocabulary of about thirty tokens
# ---------------------------------------------------------------------------

_TINY_CORPUS = [
    ("g1", "markets rally on strong earnings", "up"),
    ("g2", "shares slide after weak guidance", "down"),
    ("g3", "traders await key inflation data", "up"),
    ("g4", "outlook dims as rates climb", "down"),
]

_TINY_KNOWLEDGE = [
    ("k1", "earnings beat raises outlook"),
    ("k2", "guidance cut signals trouble"),
    ("k3", "inflation pressures easing now"),
    ("k4", "weak rates slow growth"),
]


def build_gradcheck_setup(seed: int = 0):
    """(model, kb, example) small enough for exhaustive gradient checking.

    A short warmup moves the zero-initialized projections (encoder value,
    reasoner output, classifier) to healthy scales so every backward path
    carries verifiable gradient.
    """
    cfg = TrainConfig(d_model=8, heads=2, top_k=2, seed=seed).validate()
    corpus = [CorpusExample(i, t, l) for i, t, l in _TINY_CORPUS]
    model, kb = build_pipeline(corpus, _TINY_KNOWLEDGE, cfg)
    warm_cfg = TrainConfig(
        d_model=8, heads=2, top_k=2, seed=seed, learning_rate=0.05, epochs=10, batch_size=4
    ).validate()
    train(corpus, kb, warm_cfg, model)
    return model, kb, corpus[0]


def run_gradcheck(seed: int, perturbation: float = 1e-5):
    model, kb, example = build_gradcheck_setup(seed)
    # retrieval is stop-gradient, so pin it at the unperturbed point
    retrieval = run_forward(model, kb, example.text).retrieval

    def loss_fn():
        return forward_loss(model, kb, example.text, example.label, retrieval)[0]

    return grad_check(model.parameters(), loss_fn, perturbation)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _cmd_train(args) -> int:
    from .plots import render_loss_figure

    cfg = load_config(args.config)
    corpus = load_corpus(args.corpus)
    knowledge = load_knowledge_file(args.kb)
    model, kb = build_pipeline(corpus, knowledge, cfg)
    checkpoint = train(corpus, kb, cfg, model)
    save_checkpoint(checkpoint.model, args.out)
    history_path = args.out + ".history.csv"
    with open(history_path, "w", encoding="utf-8") as fh:
        fh.write("epoch,task,explain,total\n")
        for i, h in enumerate(checkpoint.history, start=1):
            fh.write(f"{i},{h.task},{h.explain},{h.total}\n")
    render_loss_figure(checkpoint.history, args.out + ".loss.png")
    if checkpoint.history:
        last = checkpoint.history[-1]
        print(f"trained {cfg.epochs} epochs: total={last.total:.4f} task={last.task:.4f} "
              f"explain={last.explain:.4f}")
    else:
        print("trained 0 epochs (checkpoint equals initialization)")
    print(f"checkpoint written to {args.out}")
    return 0


def _load_eval_setup(checkpoint_path: str, kb_path: str):
    model = load_checkpoint(checkpoint_path)
    knowledge = load_knowledge_file(kb_path)
    kb = ingest_with_initial_encoder(knowledge, model.config, model.vocab, model.labels)
    return model, kb


def _cmd_eval(args) -> int:
    model, kb = _load_eval_setup(args.checkpoint, args.kb)
    corpus = load_corpus(args.corpus)
    report = evaluate(model, corpus, kb)
    payload = report_json(report, model.config.to_dict())
    with open(args.report, "w", encoding="utf-8") as fh:
        fh.write(payload + "\n")
    print(f"accuracy={report.accuracy:.4f} rougeL_f={report.rougeL_f:.4f} "
          f"bleu={report.bleu:.4f} fact_score={report.fact_score:.4f} "
          f"({report.n_examples} examples, {report.n_with_references} with references)")
    return 0


def _cmd_explain(args) -> int:
    model, kb = _load_eval_setup(args.checkpoint, args.kb)
    fp = run_forward(model, kb, args.text)
    chain = extract_chain(fp.attn, fp.retrieval, fp.tokens, model.config.max_chain_edges)
    rationale = render_rationale(chain, fp.prediction, kb)
    if args.format == "json":
        payload = {
            "prediction": fp.prediction.predicted_label,
            "steps": [
                {"source": s.source_text, "target": s.target_text, "weight": s.weight}
                for s in chain.steps
            ],
            "evidence": [{"id": fid, "w": w} for fid, w in chain.evidence],
            "rationale": rationale.text,
        }
        print(json.dumps(payload, separators=(",", ":")))
    else:
        print(f"prediction: {fp.prediction.predicted_label}")
        print(rationale.text)
    return 0


def _cmd_retrieve(args) -> int:
    model, kb = _load_eval_setup(args.checkpoint, args.kb)
    seq = model.vocab.sequence(args.text)
    query = pool(model.encoder.encode(seq.ids)).value[0]
    result = retrieve(query, kb, args.k, model.config.tau)
    print(json.dumps(
        {
            "fragment_ids": result.fragment_ids,
            "similarities": result.similarities,
            "weights": result.weights,
        },
        separators=(",", ":"),
    ))
    return 0


def _cmd_sweep(args) -> int:
    from .plots import render_sweep_figure

    cfg = load_config(args.config)
    train_corpus = load_corpus(args.train_corpus)
    test_corpus = load_corpus(args.test_corpus)
    knowledge = load_knowledge_file(args.kb)
    try:
        if args.param == "batch_size":
            values = [float(int(v)) for v in args.values.split(",")]
        else:
            values = [float(v) for v in args.values.split(",")]
        seeds = [int(s) for s in args.seeds.split(",")]
    except ValueError as exc:
        raise UsageError(f"bad --values/--seeds: {exc}") from exc
    result = run_sweep(args.param, values, seeds, cfg, train_corpus, test_corpus, knowledge)
    os.makedirs(args.out_dir, exist_ok=True)
    base = os.path.join(args.out_dir, f"sweep_{args.param}")
    with open(base + ".csv", "w", encoding="utf-8") as fh:
        fh.write(sweep_csv(result))
    with open(base + ".json", "w", encoding="utf-8") as fh:
        fh.write(sweep_json(result) + "\n")
    render_sweep_figure(result, base + ".png")
    means = result.mean_by_value("rougeL_f")
    for value, mean in means.items():
        print(f"{args.param}={value:g}: mean rougeL_f={mean:.4f}")
    print(f"wrote {base}.csv, {base}.json, {base}.png")
    return 0


def _cmd_gradcheck(args) -> int:
    report = run_gradcheck(args.seed, args.perturbation)
    print(report)
    return 0


def _cmd_synth(args) -> int:
    data = generate_synthetic(args.entities, args.train_fraction, args.seed)
    os.makedirs(args.out_dir, exist_ok=True)
    train_path = os.path.join(args.out_dir, "train.jsonl")
    test_path = os.path.join(args.out_dir, "test.jsonl")
    kb_path = os.path.join(args.out_dir, "kb.jsonl")
    save_corpus(data.train, train_path)
    save_corpus(data.test, test_path)
    save_knowledge(data.knowledge, kb_path)
    print(f"wrote {len(data.train)} train / {len(data.test)} test examples and "
          f"{len(data.knowledge)} fragments to {args.out_dir}")
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "eval": _cmd_eval,
    "explain": _cmd_explain,
    "retrieve": _cmd_retrieve,
    "sweep": _cmd_sweep,
    "gradcheck": _cmd_gradcheck,
    "synth": _cmd_synth,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage()
            return 1
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3
    except KalmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
