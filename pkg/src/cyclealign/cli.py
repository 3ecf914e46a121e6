"""Command-line entry points: run experiments, generate data, evaluate checkpoints."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys

from .aligners import make_aligner, read_checkpoint_header, AlignerConfig
from .alignment import AlignmentSet
from .config import ConfigError, RunConfig, derive_seed, load_run_config
from .ensemble import ensemble_similarity, ensemble_weights, rank_and_score
from .kg import load_kg, load_splits, write_kg, write_links
from .orchestrator import run_baseline, run_cycle_teaching
from .synth import SynthSpec, generate_synthetic_pair, split_alignment

log = logging.getLogger("cyclealign")

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2


def _load_dataset(cfg: RunConfig):
    if cfg.synth_spec is not None:
        kg1, kg2, gold = generate_synthetic_pair(cfg.synth_spec)
        splits = split_alignment(gold, cfg.train_ratio, cfg.valid_ratio,
                                 derive_seed(cfg.seed, "split"))
        return kg1, kg2, splits, gold
    paths = cfg.dataset_paths
    kg1 = load_kg(paths["kg1"])
    kg2 = load_kg(paths["kg2"], id_offset=kg1.num_entities, rel_offset=kg1.num_relations)
    splits = load_splits(paths["links_dir"], kg1, kg2, paths["files"])
    return kg1, kg2, splits, None


def _test_metrics(states, splits, cfg: RunConfig, kg2):
    sources = [x for x, _ in splits.test]
    if cfg.rank_against_all:
        targets = list(kg2.entities)
    else:
        targets = [y for _, y in splits.test]
    views = [st.aligner.similarity_view(sources, targets) for st in states]
    valid_scores = [st.aligner.validate(splits.valid) for st in states]
    weights = ensemble_weights(valid_scores)
    rows = {}
    for st, view in zip(states, views):
        res = rank_and_score(view, splits.test, ks=cfg.ks)
        rows[f"aligner_{st.index}"] = res.metrics
    ens = rank_and_score(ensemble_similarity(views, weights), splits.test, ks=cfg.ks)
    rows["ensemble"] = ens.metrics
    return rows, valid_scores


def _write_outputs(out_dir, reports, states, metrics, valid_scores):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "reports.jsonl"), "w", encoding="utf-8") as f:
        for rep in reports:
            f.write(json.dumps(rep.to_dict(), sort_keys=True) + "\n")
    with open(os.path.join(out_dir, "metrics.csv"), "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["iteration", "aligner", "model_kind", "proposed", "resolved",
                         "added", "valid_hits1", "precision", "recall", "f1"])
        for rep in reports:
            for entry in rep.per_aligner:
                q = entry["resolved_quality"]
                writer.writerow([rep.iteration, entry["aligner"], entry["model_kind"],
                                 entry["proposed"], entry["resolved"], entry["added"],
                                 entry["valid_hits1"], q["precision"], q["recall"],
                                 q["f1"]])
            writer.writerow([rep.iteration, "ensemble", "", "", "", "",
                             rep.ensemble_valid_hits1, "", "", ""])
    with open(os.path.join(out_dir, "metrics.json"), "w", encoding="utf-8") as f:
        json.dump({"test": metrics, "valid_hits1": valid_scores}, f, indent=2,
                  sort_keys=True)
    for st in states:
        st.aligner.save_checkpoint(os.path.join(out_dir, f"aligner_{st.index}.ckpt"))


def cmd_run(args) -> int:
    try:
        cfg = load_run_config(args.config, output_dir=args.out, seed_override=args.seed)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        kg1, kg2, splits, gold = _load_dataset(cfg)
        if cfg.strategy == "cycle_teaching":
            reports, states = run_cycle_teaching(kg1, kg2, splits, cfg.cycle, gold)
        else:
            reports, states = run_baseline(cfg.strategy, kg1, kg2, splits, cfg.cycle, gold)
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        log.exception("run failed")
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    metrics, valid_scores = _test_metrics(states, splits, cfg, kg2)
    _write_outputs(cfg.output_dir, reports, states, metrics, valid_scores)
    for name, m in metrics.items():
        parts = " ".join(f"{k}={v:.4f}" for k, v in sorted(m.items()))
        print(f"{name}: {parts}")
    return EXIT_OK


def cmd_synth(args) -> int:
    try:
        spec = SynthSpec(n_entities=args.n, n_relations=args.relations,
                         avg_degree=args.avg_degree, overlap_ratio=args.overlap,
                         structure_noise=args.noise, rng_seed=args.seed or 0)
    except ValueError as exc:
        print(f"invalid spec: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    kg1, kg2, gold = generate_synthetic_pair(spec)
    os.makedirs(args.out, exist_ok=True)
    write_kg(kg1, os.path.join(args.out, "rel_triples_1"))
    write_kg(kg2, os.path.join(args.out, "rel_triples_2"))
    write_links(gold.pairs, kg1, kg2, os.path.join(args.out, "ent_links"))
    if args.train_ratio > 0:
        splits = split_alignment(gold, args.train_ratio, args.valid_ratio,
                                 derive_seed(spec.rng_seed, "split"))
        for name, part in (("train_links", splits.train), ("valid_links", splits.valid),
                           ("test_links", splits.test)):
            write_links(part.pairs, kg1, kg2, os.path.join(args.out, name))
    print(f"wrote synthetic pair ({len(kg1.triples)}/{len(kg2.triples)} triples, "
          f"{len(gold)} gold links) to {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    try:
        cfg = load_run_config(args.config, output_dir=args.out or ".", seed_override=args.seed)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        kg1, kg2, splits, _ = _load_dataset(cfg)
        states = []
        for i, path in enumerate(args.checkpoints):
            if not os.path.exists(path):
                print(f"missing checkpoint: {path}", file=sys.stderr)
                return EXIT_RUNTIME
            kind, dim, _ = read_checkpoint_header(path)
            config = AlignerConfig(model_kind=kind, dim=dim, rng_seed=0)
            aligner = make_aligner(config, kg1, kg2)
            aligner.load_checkpoint(path)
            states.append(_EvalState(i, aligner))
    except ValueError as exc:
        print(f"eval failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    metrics, _ = _test_metrics(states, splits, cfg, kg2)
    for name, m in metrics.items():
        parts = " ".join(f"{k}={v:.4f}" for k, v in sorted(m.items()))
        print(f"{name}: {parts}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "eval_metrics.json"), "w", encoding="utf-8") as f:
            json.dump(metrics, f, indent=2, sort_keys=True)
    return EXIT_OK


class _EvalState:
    def __init__(self, index, aligner):
        self.index = index
        self.aligner = aligner


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cyclealign",
                                     description="Cycle-teaching entity alignment")
    parser.add_argument("--log-level", default="WARNING")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment from a JSON config")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--out", default=None)
    p_run.set_defaults(func=cmd_run)

    p_synth = sub.add_parser("synth", help="generate a synthetic KG pair")
    p_synth.add_argument("--n", type=int, required=True)
    p_synth.add_argument("--relations", type=int, default=10)
    p_synth.add_argument("--avg-degree", type=float, default=6.0)
    p_synth.add_argument("--overlap", type=float, default=1.0)
    p_synth.add_argument("--noise", type=float, default=0.0)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--train-ratio", type=float, default=0.0)
    p_synth.add_argument("--valid-ratio", type=float, default=0.1)
    p_synth.add_argument("--out", required=True)
    p_synth.set_defaults(func=cmd_synth)

    p_eval = sub.add_parser("eval", help="evaluate saved checkpoints")
    p_eval.add_argument("--config", required=True)
    p_eval.add_argument("--checkpoints", nargs="+", required=True)
    p_eval.add_argument("--seed", type=int, default=None)
    p_eval.add_argument("--out", default=None)
    p_eval.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level.upper(), logging.WARNING))
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
