"""Command-line entry points: ``citeimpact <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np
import pandas as pd

from .config import ConfigError, RunConfig, apply_overrides, load_config
from .corpus import CorpusError, ingest_file, load_network, save_network, synth_corpus, write_corpus
from .disentangle import BinEdges
from .encoder import encode
from .evaluation import report_composition, save_composition
from .features import EmbeddingError, EmbeddingTable, make_provider
from .graphbuild import NotYetPublishedError, SamplingConfig, build_graphs, load_graphs, save_graphs
from .splits import HorizonError, SplitError, make_splits, save_splits
from .training import evaluate, load_checkpoint, load_inputs, split_dataset, train

logger = logging.getLogger("citeimpact")


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2, default=str))


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _read_targets(spec: str) -> list[str]:
    path = Path(spec)
    if path.exists():
        return [line.strip() for line in path.read_text().splitlines() if line.strip()]
    return [x.strip() for x in spec.split(",") if x.strip()]


def cmd_ingest(a) -> int:
    net = ingest_file(a.input, strict=a.strict)
    save_network(net, a.out)
    _emit({"papers": len(net), "cites": net.n_cites, **asdict(net.stats)})
    return 0


def cmd_synth(a) -> int:
    n = write_corpus(synth_corpus(a.n, a.seed), a.out)
    _emit({"records": n, "out": a.out})
    return 0


def cmd_build_graphs(a) -> int:
    net = load_network(a.network)
    if len(a.K) != a.k:
        raise SystemExit("--K needs one entry per hop (--k)")
    graphs = build_graphs(net, _read_targets(a.targets), a.obs, a.T, SamplingConfig(a.k, a.K))
    n = save_graphs(graphs, a.out)
    _emit({"graphs": n, "out": a.out})
    return 0


def cmd_split(a) -> int:
    net = load_network(a.network)
    splits = make_splits(net, a.test_point, a.delta, a.n_test, a.seed, n_train=a.n_train, n_val=a.n_val)
    save_splits(splits, a.out)
    _emit({"train": len(splits.train), "val": len(splits.val), "test": len(splits.test),
           "test_categories": splits.category_counts()})
    return 0


def cmd_embed(a) -> int:
    net = load_network(a.network)
    table = EmbeddingTable.build(net, make_provider(a.provider, a.dim))
    table.save(a.out)
    _emit({"papers": len(net), "dim": table.dimension, "out": a.out})
    return 0


def cmd_encode(a) -> int:
    model, cfg, _ = load_checkpoint(a.checkpoint)
    network = load_network(a.network or cfg.data.network)
    emb = a.embeddings or cfg.data.embeddings
    if emb and Path(emb, "paper_vectors.npy").exists():
        table = EmbeddingTable.load(network, emb)
    else:
        table = EmbeddingTable.build(network, make_provider(cfg.data.provider, cfg.data.embedding_dim))
    graphs = load_graphs(a.graphs)
    vectors = encode(graphs, table, model.encoder, cfg.train.batch_size)
    out = Path(a.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    np.save(out, vectors)
    ids_path = out.with_suffix(".ids.json")
    ids_path.write_text(json.dumps([g.target_paper_id for g in graphs]))
    _emit({"vectors": list(vectors.shape), "out": str(out), "ids": str(ids_path)})
    return 0


def cmd_train(a) -> int:
    cfg = load_config(a.config, a.set or ())
    result = train(cfg, on_epoch=lambda e: logger.info("epoch %s", e))
    last = result.history[-1]
    _emit({"epochs": len(result.history), "best_epoch": result.best_epoch, "last": last,
           "out_dir": cfg.train.out_dir})
    return 0


def cmd_eval(a) -> int:
    model, cfg, ckpt = load_checkpoint(a.checkpoint)
    if a.set:
        cfg = RunConfig.from_dict(apply_overrides(cfg.to_dict(), a.set)).validate()
    network, splits, table = load_inputs(cfg)
    samples = getattr(splits, a.split)
    edges = BinEdges(tuple(ckpt["bin_edges"]["edges"]), ckpt["bin_edges"]["n_bins"])
    report = evaluate(model, split_dataset(network, samples, cfg, edges), table)
    report.save(a.out)
    _emit(report.to_dict())
    return 0


def cmd_report(a) -> int:
    frame = pd.read_csv(a.breakdowns, float_precision="round_trip")
    missing = {"paper_id", "dif", "con", "contribution", "total"} - set(frame.columns)
    if missing:
        raise SystemExit(f"breakdown file lacks columns {sorted(missing)}")
    tables = report_composition(frame, a.value_bins)
    save_composition(tables, a.out)
    _emit({"out": a.out, "positive": int(len(tables["per_sample"])), "negative": int(tables["negative"]["n"][0])})
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="citeimpact", description="Citation-impact prediction with disentangled values.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", help="clean a JSONL corpus into a network store")
    s.add_argument("--input", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--strict", action="store_true", help="fail on the first malformed record")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("synth", help="write a synthetic JSONL corpus")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("build-graphs", help="build dynamic heterogeneous graphs for target papers")
    s.add_argument("--network", required=True)
    s.add_argument("--targets", required=True, help="file with one paper id per line, or comma-separated ids")
    s.add_argument("--obs", type=int, required=True)
    s.add_argument("--T", type=int, default=5)
    s.add_argument("--k", type=int, default=2)
    s.add_argument("--K", type=_int_list, default=(100, 20))
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_build_graphs)

    s = sub.add_parser("split", help="make train/val/test sample files")
    s.add_argument("--network", required=True)
    s.add_argument("--test-point", type=int, required=True)
    s.add_argument("--delta", type=int, default=5)
    s.add_argument("--n-test", type=int, default=300_000)
    s.add_argument("--n-train", type=int, default=None)
    s.add_argument("--n-val", type=int, default=None)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_split)

    s = sub.add_parser("embed", help="compute paper text embeddings")
    s.add_argument("--network", required=True)
    s.add_argument("--provider", choices=("hashing", "external"), default="hashing")
    s.add_argument("--dim", type=int, default=384)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_embed)

    s = sub.add_parser("encode", help="encode graphs with a trained checkpoint")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--graphs", required=True)
    s.add_argument("--out", required=True, help="output .npy file")
    s.add_argument("--network", default=None, help="defaults to the checkpoint's data.network")
    s.add_argument("--embeddings", default=None, help="defaults to the checkpoint's data.embeddings")
    s.set_defaults(func=cmd_encode)

    s = sub.add_parser("train", help="train a model from a config file")
    s.add_argument("--config", required=True)
    s.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override a config value")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--split", choices=("train", "val", "test"), default="test")
    s.add_argument("--out", required=True)
    s.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override a stored config value")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("report", help="composition tables from a per-sample breakdown CSV")
    s.add_argument("--breakdowns", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--value-bins", type=int, default=5)
    s.set_defaults(func=cmd_report)
    return p


EXPECTED_ERRORS = (CorpusError, ConfigError, EmbeddingError, HorizonError, SplitError, NotYetPublishedError,
                   KeyError, FileNotFoundError, ValueError)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except EXPECTED_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
