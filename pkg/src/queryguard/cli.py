"""Command line surface: ingest, gen-corpus, train, run, compare, eval, serve.

Exit codes: 0 success, 1 usage error, 2 data error (unreadable/invalid
inputs), 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional

from . import snapshot as snapshot_mod
from .corpus import Corpus, CorpusConfig, gen_corpus, load_corpus, save_corpus, save_records
from .ingest import MALICIOUS, ParseError, ingest_lines
from .loop import (
    AdaptiveRun,
    LabelerUnavailable,
    MissingTruth,
    RunConfig,
    compute_metrics,
    fit_detector,
    oracle_labeler,
    predict_labels,
    run_loop,
)
from .snapshot import SnapshotError
from .util import jsonable

DATA_ERRORS = (
    FileNotFoundError,
    IsADirectoryError,
    PermissionError,
    json.JSONDecodeError,
    ParseError,
    SnapshotError,
    MissingTruth,
    ValueError,
    KeyError,
)


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage problems; the contract here is 1
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _load_json(path: str) -> dict:
    return json.loads(Path(path).read_text())


def _run_config(path: str) -> RunConfig:
    d = _load_json(path)
    return RunConfig.from_dict(d.get("run", d) if isinstance(d, dict) else d)


def _corpus_config(path: str) -> CorpusConfig:
    d = _load_json(path)
    return CorpusConfig.from_dict(d.get("corpus", d) if isinstance(d, dict) else d)


def _cmd_ingest(args) -> int:
    lines = Path(args.log).read_text(encoding="utf-8", errors="replace").splitlines()
    result = ingest_lines(lines, day=args.day)
    records = [q for q in result.kept]
    if args.include_flagged:
        records += result.flagged
    save_records(args.output, records)
    s = result.stats
    print(
        f"lines={s.lines} parse_errors={s.parse_errors} cleaned={s.kept_after_clean} "
        f"dropped_short={s.dropped_short} flagged={s.flagged} duplicates={s.duplicates} "
        f"kept={len(result.kept)}"
    )
    return 0


def _cmd_gen_corpus(args) -> int:
    config = _corpus_config(args.config)
    corpus = gen_corpus(config)
    save_corpus(args.output, corpus)
    total = sum(len(v) for v in corpus.batches.values())
    print(f"initial={len(corpus.initial)} batches={len(corpus.batches)} batch_queries={total}")
    return 0


def _cmd_train(args) -> int:
    config = _run_config(args.config)
    corpus = load_corpus(args.corpus)
    detector = fit_detector(config, corpus.initial, fit_index=0)
    snapshot_mod.save_snapshot(
        args.output,
        config=config,
        detector=detector,
        pool=corpus.initial,
        completed=0,
        corpus_digest=corpus.digest,
    )
    print(f"trained on {len(corpus.initial)} labeled queries -> {args.output}")
    return 0


def _print_report(report: dict) -> None:
    m = report["metrics"]
    f = m["f_value"]
    fp = m["fp_rate"]
    print(
        f"batch {report['batch']}: f_value={f if f is None else round(f, 4)} "
        f"fp_rate={fp if fp is None else round(fp, 6)} "
        f"selected={len(report['selected'])} malicious_obtained={report['malicious_obtained']} "
        f"pool={report['pool_size']}"
    )


def _cmd_run(args) -> int:
    config = _run_config(args.config)
    corpus = load_corpus(args.corpus)
    if args.labeler == "service":
        return _serve(config, corpus, args.output, args.port)
    labeler = oracle_labeler(corpus.truth())
    reports = run_loop(
        config, corpus, labeler, rundir=Path(args.output), resume=args.resume
    )
    for report in reports:
        _print_report(report)
    return 0


def _cmd_compare(args) -> int:
    config = _run_config(args.config)
    corpus = load_corpus(args.corpus)
    strategies = [s.strip() for s in args.strategies.split(",") if s.strip()]
    labeler = oracle_labeler(corpus.truth())
    out = {}
    for strategy in strategies:
        cfg = replace(config, strategy=strategy)
        reports = run_loop(cfg, corpus, labeler, rundir=None)
        final = reports[-1]["metrics"]
        out[strategy] = {
            "final_f_value": final["f_value"],
            "final_fp_rate": final["fp_rate"],
            "malicious_obtained": sum(r["malicious_obtained"] for r in reports),
            "reports": reports,
        }
        print(
            f"{strategy}: final_f={final['f_value']} "
            f"malicious_obtained={out[strategy]['malicious_obtained']}"
        )
    Path(args.output).write_text(json.dumps(jsonable(out), sort_keys=True, indent=2) + "\n")
    return 0


def _cmd_eval(args) -> int:
    state = snapshot_mod.load_snapshot(args.snapshot)
    corpus = load_corpus(args.corpus)
    detector = state["detector"]
    results = {}
    all_preds: list[str] = []
    all_truths: list[str] = []
    for day in corpus.days:
        labeled = [q for q in corpus.batches[day] if q.label is not None]
        if not labeled:
            continue
        preds = predict_labels(detector.decision_values([q.text for q in labeled]))
        truths = [q.label for q in labeled]
        results[str(day)] = compute_metrics(preds, truths).to_dict()
        all_preds += preds
        all_truths += truths
    if all_preds:
        results["overall"] = compute_metrics(all_preds, all_truths).to_dict()
    print(json.dumps(jsonable(results), sort_keys=True, indent=2))
    return 0


def _serve(
    config: RunConfig, corpus: Corpus, rundir: str, port: int, static_dir: Optional[str] = None
) -> int:
    import uvicorn

    from .service import create_app

    if static_dir is not None and not Path(static_dir).is_dir():
        raise FileNotFoundError(f"ui directory not found: {static_dir}")
    engine = AdaptiveRun(config, corpus, Path(rundir) if rundir else None)
    engine.start()
    app = create_app(engine, static_dir=static_dir)
    uvicorn.run(app, host="127.0.0.1", port=port, log_level="warning")
    return 0


def _cmd_serve(args) -> int:
    config = _run_config(args.config)
    corpus = load_corpus(args.corpus)
    return _serve(config, corpus, args.rundir, args.port, static_dir=args.ui)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="queryguard", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse an access log into a corpus file")
    p.add_argument("log")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--day", type=int, default=1)
    p.add_argument("--include-flagged", action="store_true",
                   help="also write char-filter hits (labeled malicious)")
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("gen-corpus", help="generate a seeded synthetic corpus")
    p.add_argument("-c", "--config", required=True)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=_cmd_gen_corpus)

    p = sub.add_parser("train", help="fit the initial model and write a snapshot")
    p.add_argument("corpus")
    p.add_argument("-c", "--config", required=True)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("run", help="run the adaptive loop over all batches")
    p.add_argument("corpus")
    p.add_argument("-c", "--config", required=True)
    p.add_argument("-o", "--output", required=True, help="run directory")
    p.add_argument("--labeler", choices=["oracle", "service"], default="oracle")
    p.add_argument("--resume", action="store_true", help="continue from the newest snapshot")
    p.add_argument("--port", type=int, default=8000, help="port when --labeler service")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("compare", help="run several strategies on one corpus and seed")
    p.add_argument("corpus")
    p.add_argument("-c", "--config", required=True)
    p.add_argument("--strategies", required=True)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("eval", help="evaluate a snapshot against a labeled corpus")
    p.add_argument("snapshot")
    p.add_argument("corpus")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("serve", help="serve the labeling API for the browser UI")
    p.add_argument("corpus")
    p.add_argument("-c", "--config", required=True)
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--rundir", default=None)
    p.add_argument("--ui", default=None, help="directory with the built console, served at /")
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.func(args)
    except DATA_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except LabelerUnavailable as e:
        print(f"labeler unavailable: {e}", file=sys.stderr)
        return 3
    except Exception as e:  # noqa: BLE001 - the CLI boundary reports, not raises
        print(f"runtime failure: {type(e).__name__}: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
