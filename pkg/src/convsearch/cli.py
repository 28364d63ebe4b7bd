"""Command-line workflow around the library.

Subcommands cover the full experiment loop: ingest a passage file,
build the sparse index and the vector store, rewrite or run a topic
set against a configured pipeline, score runfiles against qrels,
compare two runs with a significance test, and fuse runfiles.

Every command is non-interactive; flags override config-file values.
The model-server endpoint can be overridden with the
CONVSEARCH_MODEL_SERVER environment variable.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .analysis import AnalyzerConfig
from .corpus import Corpus
from .dense import HashedBagEncoder, VectorStore
from .errors import ConvSearchError
from .evaluation import (METRICS, compare_reports, compute_metrics,
                         parse_qrels, parse_runfile, write_runfile)
from .fusion import DEFAULT_FUSE_DEPTH, DEFAULT_K_RRF, rrf_fuse
from .index import InvertedIndex
from .pipeline import (PipelineConfig, PipelineRunner, load_config, preset,
                       preset_names)
from .remote import ModelServerClient, RemoteEncoder, resolve_endpoint
from .topics import load_topics, resolve_responses

log = logging.getLogger(__name__)


def _say(message: str) -> None:
    print(message, file=sys.stderr)


class CliError(ConvSearchError):
    pass


def _require_path(value: str, what: str) -> Path:
    path = Path(value)
    if not path.exists():
        raise CliError(f"{what} not found: {path}")
    return path


def _pipeline_config(args) -> PipelineConfig:
    if getattr(args, "preset", None):
        config = preset(args.preset, offline=getattr(args, "offline", False))
    elif getattr(args, "config", None):
        config = load_config(_require_path(args.config, "config file"))
    else:
        raise CliError(
            f"give --preset (one of {', '.join(preset_names())}) or --config"
        )
    updates: dict = {}
    if getattr(args, "threads", None):
        updates["threads"] = args.threads
    if getattr(args, "cutoff", None):
        updates["output_cutoff"] = args.cutoff
        updates["dataset_year"] = None
    if getattr(args, "no_artifacts", False):
        updates["write_artifacts"] = False
    return replace(config, **updates) if updates else config


def _analyzer_from_args(args) -> AnalyzerConfig:
    if getattr(args, "config", None):
        config = load_config(_require_path(args.config, "config file"))
        if config.analyzer is not None:
            return config.analyzer
    return AnalyzerConfig()


# Commands ---------------------------------------------------------------

def cmd_ingest(args) -> int:
    analyzer = _analyzer_from_args(args)
    corpus = Corpus.ingest(_require_path(args.input, "input file"), analyzer)
    corpus.save(args.output)
    _say(f"ingested {len(corpus)} passages into {args.output}")
    return 0


def cmd_build_index(args) -> int:
    corpus = Corpus.load(_require_path(args.corpus, "corpus directory"))
    index = InvertedIndex.build(corpus)
    index.save(args.output)
    _say(f"indexed {index.doc_count} passages, "
         f"{len(index.postings)} terms into {args.output}")
    return 0


def cmd_build_vectors(args) -> int:
    corpus = Corpus.load(_require_path(args.corpus, "corpus directory"))
    if args.encoder == "builtin":
        encoder = HashedBagEncoder()
    else:
        encoder = RemoteEncoder(ModelServerClient(
            resolve_endpoint(args.endpoint)))
    store = VectorStore.build(corpus, encoder)
    store.save(args.output)
    _say(f"encoded {len(store.ids)} passages "
         f"({store.encoder_id}, dim {store.dim}) into {args.output}")
    return 0


def _load_conversations(args, corpus: Corpus | None):
    conversations = load_topics(_require_path(args.topics, "topic file"))
    if corpus is not None:
        for tid, rid in resolve_responses(conversations, corpus):
            log.warning("turn %s: canonical response %s not in corpus",
                        tid, rid)
    return conversations


def cmd_rewrite(args) -> int:
    config = _pipeline_config(args)
    corpus = (Corpus.load(_require_path(args.corpus, "corpus directory"))
              if args.corpus else None)
    conversations = _load_conversations(args, corpus)
    runner = PipelineRunner(config, corpus, require_handles=False)
    result = runner.rewrite_topic_set(conversations)
    payload = {
        record.turn_id: {
            "rewrites": record.rewrites,
            "contexts": record.contexts,
        }
        for record in result.records
    }
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    _say(f"rewrote {len(result.records)} turns "
         f"({len(result.skipped)} skipped, {len(result.aborted)} aborted)")
    return 0 if result.ok else 1


def cmd_run(args) -> int:
    config = _pipeline_config(args)
    out = Path(args.output)
    if out.exists() and any(out.iterdir()) and not args.force:
        raise CliError(
            f"output directory {out} is not empty; pass --force to reuse it"
        )
    corpus = Corpus.load(_require_path(args.corpus, "corpus directory"))

    needs_index = any(leg.kind in ("bm25", "bm25+rm3")
                      for leg in config.first_pass)
    needs_index = needs_index or any(
        stage.scorer in ("bm25-rescorer", "query-likelihood")
        for stage in config.rerank)
    index = None
    if args.index:
        index = InvertedIndex.load(
            _require_path(args.index, "index directory"), corpus)
    elif needs_index:
        log.info("no --index given; building the index in memory")
        index = InvertedIndex.build(corpus)

    dense_legs = [leg for leg in config.first_pass if leg.kind == "dense"]
    store = None
    if args.vectors:
        store = VectorStore.load(
            _require_path(args.vectors, "vector store directory"))
    elif dense_legs:
        log.info("no --vectors given; encoding the corpus in memory")
        if dense_legs[0].encoder == "builtin":
            encoder = HashedBagEncoder()
        else:
            encoder = RemoteEncoder(ModelServerClient(
                resolve_endpoint(config.endpoint)))
        store = VectorStore.build(corpus, encoder)

    conversations = _load_conversations(args, corpus)
    runner = PipelineRunner(config, corpus, index, store)
    result = runner.run_topic_set(conversations, out)
    _say(f"completed {len(result.runs)} turns into {out / 'run.txt'}")
    for tid, reason in result.skipped:
        _say(f"skipped {tid}: {reason}")
    for tid, stage, reason in result.aborted:
        _say(f"aborted at {tid} ({stage}): {reason}")
    return 0 if result.ok else 1


def cmd_evaluate(args) -> int:
    run = parse_runfile(_require_path(args.run, "runfile"))
    qrels = parse_qrels(_require_path(args.qrels, "qrels file"))
    report = compute_metrics(run, qrels, cutoff=args.cutoff,
                             threshold=args.threshold)
    for name in METRICS:
        print(f"{name:<8} {report.means[name]:.4f}")
    if args.json:
        Path(args.json).write_text(
            json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
    return 0


def cmd_compare(args) -> int:
    run_a = parse_runfile(_require_path(args.run_a, "runfile A"))
    run_b = parse_runfile(_require_path(args.run_b, "runfile B"))
    qrels = parse_qrels(_require_path(args.qrels, "qrels file"))
    judged = set(qrels.turn_ids())
    for label, run in (("A", run_a), ("B", run_b)):
        missing = sorted(judged - set(run))
        if missing:
            raise CliError(f"run {label} is missing judged turns: {missing}")
    report_a = compute_metrics(run_a, qrels, cutoff=args.cutoff,
                               threshold=args.threshold)
    report_b = compute_metrics(run_b, qrels, cutoff=args.cutoff,
                               threshold=args.threshold)
    table = compare_reports(report_a, report_b)
    header = (f"{'metric':<8} {'A':>8} {'B':>8} {'diff':>9} "
              f"{'rel':>8} {'t':>9} {'p':>9} verdict")
    print(header)
    for name in METRICS:
        row = table["metrics"][name]
        verdict = "significant" if row["significant"] else "not significant"
        print(f"{name:<8} {row['mean_a']:>8.4f} {row['mean_b']:>8.4f} "
              f"{row['diff']:>+9.4f} {row['rel_diff']:>+8.2%} "
              f"{row['t']:>9.3f} {row['p']:>9.4f} {verdict}")
    differing = table["differing_turns"][args.metric]
    print(f"turns differing on {args.metric}: "
          f"{', '.join(differing) if differing else 'none'}")
    return 0


def cmd_fuse(args) -> int:
    if len(args.inputs) < 2:
        raise CliError("fuse needs at least two runfiles")
    runs = [parse_runfile(_require_path(p, "runfile")) for p in args.inputs]
    order: list[str] = []
    seen: set[str] = set()
    for run in runs:
        for tid in run:
            if tid not in seen:
                seen.add(tid)
                order.append(tid)
    fused = []
    for tid in order:
        lists = [run[tid] for run in runs if tid in run]
        fused.append(rrf_fuse(lists, k_rrf=args.k_rrf, depth=args.depth,
                              run_tag=args.tag))
    write_runfile(fused, args.output)
    _say(f"fused {len(runs)} runs over {len(order)} turns into {args.output}")
    return 0


# Parser -----------------------------------------------------------------

def _add_pipeline_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="pipeline config file (YAML)")
    sub.add_argument("--preset",
                     help=f"named pipeline preset ({', '.join(preset_names())})")
    sub.add_argument("--offline", action="store_true",
                     help="substitute the sidecar-free twin of the preset")
    sub.add_argument("--threads", type=int, default=None,
                     help="cap on parallel conversation workers")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="convsearch",
        description="Conversational passage retrieval pipelines and evaluation.",
    )
    parser.add_argument("--verbose", action="store_true",
                        help="log progress details to stderr")
    commands = parser.add_subparsers(dest="command", required=True)

    sub = commands.add_parser("ingest", help="read passages into a corpus dir")
    sub.add_argument("--input", required=True, help="JSONL or TSV passage file")
    sub.add_argument("--output", required=True, help="corpus directory")
    sub.add_argument("--config", help="config file supplying the analyzer")
    sub.set_defaults(func=cmd_ingest)

    sub = commands.add_parser("build-index", help="build the BM25 index")
    sub.add_argument("--corpus", required=True)
    sub.add_argument("--output", required=True)
    sub.set_defaults(func=cmd_build_index)

    sub = commands.add_parser("build-vectors", help="encode the corpus")
    sub.add_argument("--corpus", required=True)
    sub.add_argument("--output", required=True)
    sub.add_argument("--encoder", choices=("builtin", "remote"),
                     default="builtin")
    sub.add_argument("--endpoint", help="model server base URL")
    sub.set_defaults(func=cmd_build_vectors)

    sub = commands.add_parser("rewrite", help="rewrite a topic set only")
    _add_pipeline_flags(sub)
    sub.add_argument("--topics", required=True)
    sub.add_argument("--corpus", help="corpus for canonical response lookup")
    sub.add_argument("--output", help="write rewrites JSON here (default stdout)")
    sub.set_defaults(func=cmd_rewrite)

    sub = commands.add_parser("run", help="run a pipeline over a topic set")
    _add_pipeline_flags(sub)
    sub.add_argument("--topics", required=True)
    sub.add_argument("--corpus", required=True)
    sub.add_argument("--index", help="prebuilt index directory")
    sub.add_argument("--vectors", help="prebuilt vector store directory")
    sub.add_argument("--output", required=True, help="run output directory")
    sub.add_argument("--cutoff", type=int, choices=(500, 1000),
                     help="override the output rank cutoff")
    sub.add_argument("--force", action="store_true",
                     help="allow writing into a non-empty output directory")
    sub.add_argument("--no-artifacts", action="store_true",
                     help="skip per-turn intermediate artifact files")
    sub.set_defaults(func=cmd_run)

    sub = commands.add_parser("evaluate", help="score a runfile against qrels")
    sub.add_argument("--run", required=True)
    sub.add_argument("--qrels", required=True)
    sub.add_argument("--cutoff", type=int, choices=(500, 1000), default=500)
    sub.add_argument("--threshold", type=int, default=2,
                     help="binary relevance grade threshold")
    sub.add_argument("--json", help="also write the full report as JSON")
    sub.set_defaults(func=cmd_evaluate)

    sub = commands.add_parser("compare", help="compare two runs with a t-test")
    sub.add_argument("--run-a", required=True)
    sub.add_argument("--run-b", required=True)
    sub.add_argument("--qrels", required=True)
    sub.add_argument("--cutoff", type=int, choices=(500, 1000), default=500)
    sub.add_argument("--threshold", type=int, default=2)
    sub.add_argument("--metric", choices=METRICS, default="ndcg@3",
                     help="metric whose differing turns are listed")
    sub.set_defaults(func=cmd_compare)

    sub = commands.add_parser("fuse", help="reciprocal-rank-fuse runfiles")
    sub.add_argument("--inputs", nargs="+", required=True)
    sub.add_argument("--output", required=True)
    sub.add_argument("--k-rrf", type=float, default=DEFAULT_K_RRF)
    sub.add_argument("--depth", type=int, default=DEFAULT_FUSE_DEPTH)
    sub.add_argument("--tag", default="rrf")
    sub.set_defaults(func=cmd_fuse)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConvSearchError as exc:
        _say(f"error: {exc}")
        return 2
    except OSError as exc:
        _say(f"error: {exc}")
        return 2


def entry_point() -> None:
    sys.exit(main())
