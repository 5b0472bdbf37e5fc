"""Command-line entry point: gen-data, train, eval, report.

Logs go to stderr; stdout is reserved for the report table. Exit codes:
0 success, 2 config error, 3 I/O error, 4 numeric failure, 5 shape mismatch.
"""

import argparse
import json
import logging
import os
import sys
from dataclasses import fields
from pathlib import Path

from .dataio import Dataset, SyntheticSpec, generate_synthetic
from .errors import BadConfig, KdalignError
from .metrics import EvalReport
from .report import compare_reports, evaluate_checkpoint, write_comparison_csv
from .trainer import load_config, resume, train


def _build_parser():
    ap = argparse.ArgumentParser(
        prog="kdalign",
        description="Multilingual embedding distillation at desk scale.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate a synthetic dataset")
    g.add_argument("--spec", help="JSON file with SyntheticSpec fields")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int)

    t = sub.add_parser("train", help="train a student head")
    t.add_argument("--config", help="JSON training config")
    t.add_argument("--manifest", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--resume", help="checkpoint to continue from")
    t.add_argument("--override", action="append", default=[],
                   metavar="KEY=VALUE", help="dotted config override")

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    e.add_argument("--checkpoint")
    e.add_argument("--manifest", required=True)
    e.add_argument("--split", default="test")
    e.add_argument("--out", required=True)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--teacher-as-student", action="store_true",
                   help="evaluate the teacher's own text embeddings")

    r = sub.add_parser("report", help="compare one or more eval reports")
    r.add_argument("reports", nargs="+", help="report.json files")
    r.add_argument("--csv", help="also write the comparison as CSV")
    return ap


def _load_spec(path, seed_override):
    spec = SyntheticSpec()
    if path:
        with open(path) as f:
            data = json.load(f)
        known = {f.name for f in fields(SyntheticSpec)}
        for k, v in data.items():
            if k not in known:
                raise BadConfig(f"unknown synthetic spec field '{k}'")
            setattr(spec, k, v)
    if seed_override is not None:
        spec.seed = seed_override
    return spec


def cmd_gen_data(args):
    spec = _load_spec(args.spec, args.seed)
    manifest_path = generate_synthetic(spec, args.out)
    ds = Dataset(manifest_path)
    from .metrics import RetrievalTask, recall_at_k
    import numpy as np
    ids = ds.splits["test"]
    task = RetrievalTask(ds.image[ids], ds.teacher_text[ds.anchor_language][ids],
                         np.arange(ids.size), "I2T")
    r1 = recall_at_k(task, 1)
    logging.info("dataset: %d samples, %d languages, teacher_dim %d, base_dim %d",
                 ds.n_samples, len(ds.languages), ds.teacher_dim, ds.base_dim)
    logging.info("teacher I2T self-retrieval R@1 on test split: %.4f", r1)
    return 0


def cmd_train(args):
    cfg = load_config(args.config, args.override)
    if args.resume:
        resume(args.resume, cfg, args.manifest, args.out)
    else:
        train(cfg, args.manifest, args.out)
    logging.info("training done; outputs in %s", args.out)
    return 0


def cmd_eval(args):
    if not args.teacher_as_student and not args.checkpoint:
        raise BadConfig("--checkpoint is required unless --teacher-as-student")
    rep = evaluate_checkpoint(args.checkpoint, args.manifest, args.split,
                              seed=args.seed,
                              teacher_as_student=args.teacher_as_student)
    rep.write(args.out)
    logging.info("eval report written to %s", args.out)
    return 0


def cmd_report(args):
    named = []
    for path in args.reports:
        name = Path(path).stem
        if not Path(path).exists():
            raise BadConfig(f"report file not found: {path}")
        named.append((name, EvalReport.load_json(path)))
    text, csv_rows = compare_reports(named)
    sys.stdout.write(text)
    if args.csv:
        write_comparison_csv(csv_rows, args.csv)
    return 0


def main(argv=None):
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(message)s")
    if "KD_ALIGN_THREADS" in os.environ:
        os.environ.setdefault("OMP_NUM_THREADS", os.environ["KD_ALIGN_THREADS"])
    handler = {
        "gen-data": cmd_gen_data,
        "train": cmd_train,
        "eval": cmd_eval,
        "report": cmd_report,
    }[args.command]
    try:
        return handler(args)
    except KdalignError as exc:
        logging.error("%s: %s", type(exc).__name__, exc)
        return exc.exit_code
    except (OSError, json.JSONDecodeError) as exc:
        logging.error("%s", exc)
        return 3


if __name__ == "__main__":
    sys.exit(main())
