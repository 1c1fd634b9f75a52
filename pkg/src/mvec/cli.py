"""Command-line front end.

Subcommands cover the whole pipeline: synthesize a corpus, train an
extractor, dump embeddings, sweep verification EER over prefix
dimensions, query a vector store, and benchmark truncated scans.
Runtime failures print one ``mvec: error: ...`` line and exit 1; usage
errors exit 2 (argparse's convention).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from . import config as _config
from . import data as _data
from . import evaluation as _evaluation
from . import model as _model
from . import store as _store
from .errors import MvecError

log = logging.getLogger("mvec")


def _dims_arg(text: str) -> tuple[int, ...]:
    try:
        dims = tuple(int(part) for part in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers: {text!r}")
    if not dims:
        raise argparse.ArgumentTypeError("need at least one dimension")
    return dims


def _system_arg(text: str) -> tuple[str, str]:
    name, sep, path = text.partition("=")
    if not sep or not name or not path:
        raise argparse.ArgumentTypeError(f"expected NAME=PATH, got {text!r}")
    return name, path


def _load_experiment(path) -> tuple[_config.ExperimentConfig, int]:
    cfg = _config.load(path)
    seed = _config.resolve_seed(cfg)
    for line in cfg.to_text().strip().splitlines():
        log.info("config | %s", line)
    log.info("resolved seed: %d%s", seed,
             "" if seed == cfg.seed else f" (overridden via {_config.ENV_SEED})")
    return cfg, seed


def _emit(text: str, out_path) -> None:
    if out_path is None:
        sys.stdout.write(text)
    else:
        with open(out_path, "w", encoding="ascii", newline="") as fh:
            fh.write(text)
        log.info("wrote %s", out_path)


def _cmd_gen_data(args) -> int:
    cfg, seed = _load_experiment(args.config)
    corpus = _data.generate(
        num_speakers=cfg.num_speakers,
        utts_per_speaker=cfg.utts_per_speaker,
        frames_per_utt=cfg.frames_per_utt,
        feat_dim=cfg.feat_dim,
        intra_spread=cfg.intra_spread,
        channel_spread=cfg.channel_spread,
        seed=seed,
        eval_per_speaker=cfg.eval_per_speaker,
    )
    _data.save_corpus(args.out, corpus)
    log.info("wrote %s (%d utterances, %d speakers)", args.out,
             len(corpus.features), corpus.num_speakers)
    if args.trials_out is not None:
        trials = _data.build_trials(corpus, cfg.targets_per_speaker,
                                    cfg.nontargets_per_speaker, seed)
        _data.save_trials(args.trials_out, trials)
        labels = trials.labels()
        log.info("wrote %s (%d target / %d nontarget trials)", args.trials_out,
                 int(labels.sum()), int((1 - labels).sum()))
    return 0


def _cmd_train(args) -> int:
    cfg, seed = _load_experiment(args.config)
    corpus = _data.load_corpus(args.data)
    params, heads, history = _model.train(corpus, cfg.train_config(seed), mode=args.mode)
    _model.save_checkpoint(args.out, params, heads)
    log.info("trained %s system for %d epochs; final mean loss %.6f",
             args.mode, len(history), history[-1])
    log.info("wrote %s", args.out)
    return 0


def _cmd_extract(args) -> int:
    params, _ = _model.load_checkpoint(args.model)
    corpus = _data.load_corpus(args.data)
    split = None if args.split == "all" else args.split
    utt_ids = corpus.utt_ids(split)
    embeddings = _model.encode_batch(params, [corpus.features[i] for i in utt_ids])
    _store.save_vectors(args.out, utt_ids, embeddings)
    log.info("wrote %s (%d embeddings, dim %d)", args.out,
             embeddings.shape[0], embeddings.shape[1])
    return 0


def _cmd_eval_eer(args) -> int:
    systems = {}
    for name, path in args.embeds:
        ids, vectors = _store.load_vectors(path)
        systems[name] = {int(i): vectors[row] for row, i in enumerate(ids)}
        log.info("system %r: %d embeddings of dim %d from %s",
                 name, vectors.shape[0], vectors.shape[1], path)
    trials = _data.load_trials(args.trials)
    report = _evaluation.dimension_sweep(systems, trials, args.dims)
    _emit(report.to_csv(), args.out)
    return 0


def _cmd_search(args) -> int:
    store = _store.VectorStore.load(args.store, backend=args.kernel)
    query_ids, queries = _store.load_vectors(args.query_file)
    log.info("store: %d vectors of dim %d (%s kernel); %d queries",
             len(store), store.dim, store.backend_name, queries.shape[0])
    lines = ["query_id,rank,result_id,sq_l2_distance"]
    for qid, query in zip(query_ids, queries):
        for rank, (rid, dist) in enumerate(store.search(query, args.dim, args.k), 1):
            lines.append(f"{int(qid)},{rank},{rid},{dist:.6f}")
    _emit("\n".join(lines) + "\n", args.out)
    return 0


def _cmd_bench(args) -> int:
    store = _store.VectorStore.load(args.store, backend=args.kernel)
    log.info("store: %d vectors of dim %d (%s kernel)",
             len(store), store.dim, store.backend_name)
    report = _store.bench(store, args.dims, args.k, num_queries=args.queries,
                          seed=args.seed, storage_rows=args.storage_rows,
                          precompute_norms=args.precompute_norms)
    _emit(report.to_csv(), args.out)
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mvec",
        description="Nested prefix-truncatable speaker embeddings: "
                    "train, evaluate, and benchmark.",
    )
    parser.add_argument("-q", "--quiet", action="store_true",
                        help="suppress progress logging on stderr")
    # Accepted after the subcommand too; SUPPRESS keeps the subparser from
    # overwriting the top-level value when the flag is absent.
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-q", "--quiet", action="store_true",
                        default=argparse.SUPPRESS, help=argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("gen-data", parents=[common],
                       help="synthesize a feature corpus (and trials)")
    p.add_argument("--config", required=True, help="experiment config file")
    p.add_argument("--out", required=True, help="corpus output path (.mvft)")
    p.add_argument("--trials-out", default=None,
                   help="also write a verification trial list here")
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("train", parents=[common], help="train an embedding extractor")
    p.add_argument("--config", required=True, help="experiment config file")
    p.add_argument("--data", required=True, help="corpus file (.mvft)")
    p.add_argument("--mode", choices=[_model.MODE_BASELINE, _model.MODE_MRL],
                   default=_model.MODE_MRL,
                   help="single full-dimension head, or one head per nested prefix")
    p.add_argument("--out", required=True, help="checkpoint output path (.mvec)")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("extract", parents=[common], help="embed utterances with a trained extractor")
    p.add_argument("--model", required=True, help="checkpoint file (.mvec)")
    p.add_argument("--data", required=True, help="corpus file (.mvft)")
    p.add_argument("--split", choices=["train", "eval", "all"], default="all")
    p.add_argument("--out", required=True, help="embedding output path (.mvst)")
    p.set_defaults(func=_cmd_extract)

    p = sub.add_parser("eval-eer", parents=[common], help="verification EER per prefix dimension")
    p.add_argument("--embeds", required=True, action="append", type=_system_arg,
                   metavar="NAME=PATH", help="embedding file per system (repeatable)")
    p.add_argument("--trials", required=True, help="trial list file")
    p.add_argument("--dims", required=True, type=_dims_arg,
                   help="comma-separated prefix dimensions")
    p.add_argument("--out", default=None, help="report CSV (default: stdout)")
    p.set_defaults(func=_cmd_eval_eer)

    p = sub.add_parser("search", parents=[common], help="top-k nearest neighbors at a prefix dimension")
    p.add_argument("--store", required=True, help="vector file to search (.mvst)")
    p.add_argument("--query-file", required=True, help="query vectors (.mvst)")
    p.add_argument("--dim", required=True, type=int, help="prefix dimension")
    p.add_argument("-k", type=int, default=10, help="neighbors per query")
    p.add_argument("--kernel", choices=["auto", "compiled", "numpy"], default="auto")
    p.add_argument("--out", default=None, help="result CSV (default: stdout)")
    p.set_defaults(func=_cmd_search)

    p = sub.add_parser("bench", parents=[common], help="storage/latency payoff of prefix truncation")
    p.add_argument("--store", required=True, help="vector file to scan (.mvst)")
    p.add_argument("--dims", required=True, type=_dims_arg,
                   help="comma-separated prefix dimensions")
    p.add_argument("-k", type=int, default=10, help="neighbors per query")
    p.add_argument("--queries", type=int, default=200, help="timed queries per dim")
    p.add_argument("--seed", type=int, default=0, help="query sampling seed")
    p.add_argument("--storage-rows", type=int, default=None,
                   help="model the storage column at this row count")
    p.add_argument("--kernel", choices=["auto", "compiled", "numpy"], default="auto")
    p.add_argument("--precompute-norms", action="store_true",
                   help="cache per-row prefix norms before timing")
    p.add_argument("--out", default=None, help="report CSV (default: stdout)")
    p.set_defaults(func=_cmd_bench)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    # force=True: main() is reentrant (tests, notebooks), so each call must
    # rebind the handler to the current sys.stderr and log level.
    logging.basicConfig(stream=sys.stderr, format="%(message)s", force=True,
                        level=logging.ERROR if args.quiet else logging.INFO)
    try:
        return args.func(args)
    except BrokenPipeError:
        # Reader closed the pipe (e.g. piping into `head`): not our error.
        # Point stdout at devnull so interpreter shutdown doesn't re-raise.
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return 1
    except MvecError as exc:
        print(f"mvec: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"mvec: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
