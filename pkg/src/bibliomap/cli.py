"""Command-line entry point: ingest, graph, cluster, generate, evaluate, report."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional

import requests

from .community import louvain, read_partition, tune_resolution_to_k, write_partition
from .corpus import BenchmarkInstance, load_benchmark_manifest
from .embedding import CachedEmbedder, EmbeddingError, HashingEmbedder, HTTPEmbedder
from .evaluation import evaluate_instance, read_scores_csv, write_scores_csv
from .graph import RelationMode, build_graph, read_edge_list, write_edge_list
from .pipelines import (
    DescriptionSet,
    GenerationError,
    HTTPGenerator,
    PipelineConfig,
    PipelineFailure,
    PipelineKind,
    TermEchoGenerator,
    run_pipeline,
)
from .report import TABLE_METRICS, aggregate_rows, emit_report
from .resolver import FixtureResolver, OpenAlexResolver

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

logger = logging.getLogger("bibliomap")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_EXTERNAL = 0, 1, 2, 3
HUMAN = "Human"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def load_config(path: Optional[str]) -> dict:
    path = path or os.environ.get("BIBLIOMAP_CONFIG")
    if not path:
        return {}
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"config file not found: {p}")
    if p.suffix == ".json":
        return json.loads(p.read_text(encoding="utf-8"))
    with p.open("rb") as fh:
        return tomllib.load(fh)


def _opt(args, cfg: dict, name: str, default=None):
    value = getattr(args, name, None)
    if value is not None:
        return value
    return cfg.get(name, default)


def _mode(args) -> RelationMode:
    return RelationMode(args.mode.upper())


def _graph_for(instance: BenchmarkInstance, args, cfg) -> "object":
    return build_graph(
        instance.papers,
        _mode(args),
        min_raw_weight=float(cfg.get("min_raw_weight", 1.0)),
        normalize=bool(cfg.get("normalize", True)),
        min_weight=float(cfg.get("min_weight", 0.0)),
    )


def _embedder(args, cfg):
    if args.offline or not cfg.get("embedding_endpoint"):
        if not args.offline:
            logger.info("no embedding_endpoint configured; using the offline hashing embedder")
        inner = HashingEmbedder(int(cfg.get("embedding_dim", 384)), seed=0)
    else:
        inner = HTTPEmbedder(
            cfg["embedding_endpoint"], cfg.get("embedding_model", "default"),
            max_concurrency=int(cfg.get("max_concurrency", 4)),
        )
    if args.cache_dir:
        return CachedEmbedder(inner, Path(args.cache_dir) / "embeddings")
    return inner


def _resolver(args, cfg):
    fixture = cfg.get("resolver_fixture")
    if args.offline:
        return FixtureResolver.from_csv(fixture) if fixture else FixtureResolver([])
    if cfg.get("resolver", "openalex") == "none":
        return None
    cache = Path(args.cache_dir) / "openalex.jsonl" if args.cache_dir else None
    return OpenAlexResolver(cache_path=cache)


def _generator(args, cfg):
    if args.offline or cfg.get("endpoint") in (None, "", "offline"):
        if not args.offline:
            logger.info("no generation endpoint configured; using the offline term-echo generator")
        return TermEchoGenerator(cfg.get("model", "term-echo"))
    return HTTPGenerator(
        cfg["endpoint"], cfg.get("model", "default"),
        max_output_tokens=int(cfg.get("max_output_tokens", 4096)),
        max_concurrency=int(cfg.get("max_concurrency", 4)),
    )


# subcommands ---------------------------------------------------------------

def cmd_ingest(args, cfg) -> int:
    inst = load_benchmark_manifest(args.manifest)
    n_refs = sum(len(p.raw_references) for p in inst.papers)
    n_cites = sum(len(p.cited_in_corpus) for p in inst.papers)
    print(
        f"{inst.instance_id}: {len(inst.papers)} papers, target_k={inst.target_k}, "
        f"{n_refs} references, {n_cites} intra-corpus citations, "
        f"human descriptions: {len(inst.human_descriptions) if inst.human_descriptions else 0}"
    )
    return EXIT_OK


def cmd_graph(args, cfg) -> int:
    inst = load_benchmark_manifest(args.manifest)
    graph = _graph_for(inst, args, cfg)
    write_edge_list(graph, args.out)
    print(f"{graph.mode.value} graph: {len(graph.nodes)} nodes, {len(graph.edges)} edges -> {args.out}")
    return EXIT_OK


def cmd_cluster(args, cfg) -> int:
    inst = None
    if args.edges:
        graph = read_edge_list(args.edges, mode=_mode(args), normalized=not args.raw)
    elif args.manifest:
        inst = load_benchmark_manifest(args.manifest)
        graph = _graph_for(inst, args, cfg)
    else:
        raise UsageError("cluster needs a manifest or --edges")
    if args.resolution is not None:
        part = louvain(graph, args.resolution, args.seed)
        print(f"resolution={args.resolution:g} k={part.k}")
    else:
        target = args.target_k or (inst.target_k if inst else None)
        if target is None:
            raise UsageError("--target-k is required with --edges")
        result = tune_resolution_to_k(graph, target, seed=args.seed)
        part = result.partition
        print(
            f"target_k={target} achieved_k={result.achieved_k} exact={str(result.exact).lower()} "
            f"resolution={result.resolution:.6g}"
        )
    write_partition(part, args.out)
    return EXIT_OK


def cmd_generate(args, cfg) -> int:
    inst = load_benchmark_manifest(args.manifest)
    kind = PipelineKind.parse(_opt(args, cfg, "pipeline"))
    config = PipelineConfig.for_mode(
        kind,
        _mode(args),
        max_refs_per_cluster=int(cfg.get("max_refs_per_cluster", 10)),
        ranked_top_k=int(cfg.get("ranked_top_k", 10)),
        prompt_variant=_opt(args, cfg, "prompt_variant", "normal"),
        word_limit=int(cfg.get("word_limit", 250)),
        retries=int(cfg.get("retries", 2)),
    )
    partition = read_partition(args.partition) if args.partition else None
    if kind.uses_partition and partition is None:
        raise UsageError(f"{kind.value} needs --partition")
    graph = _graph_for(inst, args, cfg) if kind is PipelineKind.RANKED else None
    result = run_pipeline(
        config, inst, partition, _generator(args, cfg), graph=graph,
        output_path=args.out, transcript_path=args.transcript,
    )
    print(f"{inst.instance_id}/{kind.value}: {len(result)} descriptions -> {args.out}")
    return EXIT_OK


def _parse_run(spec: str) -> tuple[str, str]:
    if "=" not in spec:
        raise UsageError(f"--run expects PIPELINE=PATH, got {spec!r}")
    name, path = spec.split("=", 1)
    return name, path


def cmd_evaluate(args, cfg) -> int:
    inst = load_benchmark_manifest(args.manifest)
    graph = _graph_for(inst, args, cfg)
    reference = read_partition(args.partition)
    provider = _embedder(args, cfg)
    resolver = _resolver(args, cfg)
    runs = [_parse_run(r) for r in args.run]
    if args.human:
        if not inst.human_descriptions:
            raise ValueError(f"{inst.instance_id}: no human descriptions to evaluate")
        runs.append((HUMAN, ""))
    if not runs:
        raise UsageError("nothing to evaluate: give --run and/or --human")
    scores = []
    for name, path in runs:
        if name == HUMAN:
            descriptions = DescriptionSet.from_texts(inst.human_descriptions)
        else:
            descriptions = DescriptionSet.read_csv(path, PipelineKind.parse(name))
            name = PipelineKind.parse(name).value
        scores.append(evaluate_instance(inst, descriptions, name, graph, reference, provider, resolver))
    if args.append and Path(args.out).exists():
        existing = Path(args.out).read_text(encoding="utf-8")
        tmp = Path(args.out).with_suffix(".part")
        write_scores_csv(scores, tmp)
        new_lines = tmp.read_text(encoding="utf-8").splitlines(keepends=True)[1:]
        Path(args.out).write_text(existing + "".join(new_lines), encoding="utf-8")
        tmp.unlink()
    else:
        write_scores_csv(scores, args.out)
    print(f"{inst.instance_id}: scored {len(scores)} runs -> {args.out}")
    return EXIT_OK


def cmd_report(args, cfg) -> int:
    rows = [r for path in args.scores for r in read_scores_csv(path)]
    metrics = args.metrics.split(",") if args.metrics else TABLE_METRICS
    table = aggregate_rows(rows, metrics)
    if not table:
        raise ValueError("no metric could be aggregated from the given scores")
    emit_report(table, args.format, args.out, long_rows=rows)
    print(f"{len(table)} rows -> {args.out}")
    return EXIT_OK


def cmd_synth(args, cfg) -> int:
    from .synthetic import blocked_corpus, write_fixture

    inst, _ = blocked_corpus(
        n_blocks=args.blocks, block_size=args.block_size, seed=args.seed,
        instance_id=args.instance_id,
    )
    path = write_fixture(inst, args.out)
    print(f"fixture manifest -> {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    def add_globals(p, suppress=False):
        d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
        p.add_argument("--seed", type=int, default=d(None))
        p.add_argument("--config", default=d(None), help="TOML or JSON config (default: $BIBLIOMAP_CONFIG)")
        p.add_argument(
            "--offline", action="store_true", default=d(False),
            help="hash embedder, fixture resolver, term-echo generator",
        )
        p.add_argument("--cache-dir", default=d(None), help="embedding and resolver cache directory")
        p.add_argument("-v", "--verbose", action="count", default=d(0))

    parser = _Parser(prog="bibliomap", description=__doc__)
    add_globals(parser)
    # global flags are accepted before or after the subcommand
    common = argparse.ArgumentParser(add_help=False)
    add_globals(common, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    _add = sub.add_parser
    sub.add_parser = lambda *a, **kw: _add(*a, parents=[common], **kw)

    def with_mode(p):
        p.add_argument("--mode", choices=["bc", "cit", "BC", "CIT"], default="bc")
        return p

    p = sub.add_parser("ingest", help="validate a benchmark manifest and its corpus")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_ingest)

    p = with_mode(sub.add_parser("graph", help="build and export a relation graph"))
    p.add_argument("manifest")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_graph)

    p = with_mode(sub.add_parser("cluster", help="resolution-targeted Louvain"))
    p.add_argument("manifest", nargs="?")
    p.add_argument("--edges", help="edge-list CSV (u,v,weight) instead of a manifest")
    p.add_argument("--raw", action="store_true", help="edge weights are raw counts")
    p.add_argument("--target-k", type=int)
    p.add_argument("--resolution", type=float, help="fixed resolution, skips the search")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_cluster)

    p = with_mode(sub.add_parser("generate", help="run a description pipeline"))
    p.add_argument("manifest")
    p.add_argument("--pipeline", help="Blind, Corpus, CorpusSelect, Labeled, LabeledSelect, Ranked")
    p.add_argument("--prompt-variant", dest="prompt_variant", choices=["normal", "biblio_context", "no_query"])
    p.add_argument("--partition")
    p.add_argument("--transcript")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = with_mode(sub.add_parser("evaluate", help="score description sets"))
    p.add_argument("manifest")
    p.add_argument("--partition", required=True, help="reference Louvain partition CSV")
    p.add_argument("--run", action="append", default=[], metavar="PIPELINE=PATH")
    p.add_argument("--human", action="store_true", help="also score the human descriptions")
    p.add_argument("--append", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="aggregate score CSVs")
    p.add_argument("scores", nargs="+")
    p.add_argument("--format", choices=["csv", "markdown"], default="csv")
    p.add_argument("--metrics", help="comma-separated metric names")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("synth", help="write a synthetic blocked-corpus fixture")
    p.add_argument("--blocks", type=int, default=4)
    p.add_argument("--block-size", type=int, default=10)
    p.add_argument("--instance-id", default="synthetic")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = load_config(args.config)
        if args.seed is None:
            args.seed = int(cfg.get("seed", 0))
        return args.func(args, cfg)
    except UsageError as exc:
        print(f"bibliomap: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (GenerationError, EmbeddingError, PipelineFailure, requests.RequestException) as exc:
        print(f"bibliomap: external service failure: {exc}", file=sys.stderr)
        return EXIT_EXTERNAL
    except (ValueError, KeyError, OSError, tomllib.TOMLDecodeError) as exc:
        print(f"bibliomap: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
