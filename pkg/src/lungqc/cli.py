"""Command-line front end.

Exit codes: 0 success, 1 usage or config error, 2 fatal IO/parse error,
3 when ``qc`` finished but accepted no series from a non-empty corpus.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import stats
from .errors import DegenerateVarianceError, LengthMismatchError, LungQCError, SchemaError
from .export import read_npy_int16, write_montage_pgm
from .phantoms import build_demo_corpus
from .pipeline import ConfigError, load_config, run_qc
from .report import REPORT_FILENAME, read_qc_csv, summarize
from .scoring import POOL_METHODS, load_pooled_csv, load_scores_csv, pool_table, write_pooled_csv

EXIT_OK, EXIT_USAGE, EXIT_FATAL, EXIT_NONE_ACCEPTED = 0, 1, 2, 3

log = logging.getLogger("lungqc")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def build_parser():
    p = _Parser(prog="lungqc", description="CT lung-block QC and score statistics")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    q = sub.add_parser("qc", help="run the QC pipeline over a DICOM tree")
    q.add_argument("--input", required=True, type=Path)
    q.add_argument("--output", required=True, type=Path)
    q.add_argument("--config", type=Path)
    q.add_argument("--workers", type=int)
    q.add_argument("--overwrite", action="store_true", default=None)
    q.add_argument("--montages", action="store_true", help="also write montage.pgm per block")

    r = sub.add_parser("report", help="summarize an existing qc_report.csv")
    r.add_argument("--output", required=True, type=Path)

    pl = sub.add_parser("pool", help="pool slice scores per patient")
    pl.add_argument("--scores", required=True, type=Path)
    pl.add_argument("--method", required=True, choices=POOL_METHODS)
    pl.add_argument("--k", type=int)
    pl.add_argument("--out", required=True, type=Path)

    e = sub.add_parser("eval", help="compare two pooled score files")
    e.add_argument("--pooled-a", required=True, type=Path)
    e.add_argument("--pooled-b", required=True, type=Path)
    e.add_argument("--out", required=True, type=Path)
    e.add_argument("--threshold", type=float, default=0.5)

    m = sub.add_parser("montage", help="render a lung block as a PGM contact sheet")
    m.add_argument("--block", required=True, type=Path)
    m.add_argument("--out", required=True, type=Path)
    m.add_argument("--columns", type=int)
    m.add_argument("--config", type=Path)

    ph = sub.add_parser("phantoms", help="write a small synthetic DICOM corpus")
    ph.add_argument("--out", required=True, type=Path)
    ph.add_argument("--seed", type=int, default=0)
    return p


# -- subcommands -------------------------------------------------------------

def cmd_qc(args):
    cfg = load_config(args.config, workers=args.workers, overwrite=args.overwrite)
    result = run_qc(args.input, args.output, cfg, montages=args.montages)
    sys.stdout.write(result.summary.as_text())
    if result.outcomes and result.summary.accepted_series == 0:
        log.error("no series accepted")
        return EXIT_NONE_ACCEPTED
    return EXIT_OK


def cmd_report(args):
    records = read_qc_csv(args.output / REPORT_FILENAME)
    sys.stdout.write(summarize(records).as_text())
    return EXIT_OK


def cmd_pool(args):
    if args.method == "topk":
        if args.k is None:
            raise UsageError("pool: --k is required with --method topk")
        if args.k < 1:
            raise UsageError("pool: --k must be >= 1")
    elif args.k is not None:
        raise UsageError("pool: --k only applies to --method topk")
    table = load_scores_csv(args.scores)
    write_pooled_csv(pool_table(table, args.method, args.k), args.out)
    return EXIT_OK


def _align(pooled_a, pooled_b):
    a = {p.patient_id: p for p in pooled_a}
    b = {p.patient_id: p for p in pooled_b}
    if a.keys() != b.keys():
        only_a, only_b = len(a.keys() - b.keys()), len(b.keys() - a.keys())
        raise LengthMismatchError(
            f"patient sets differ ({only_a} only in A, {only_b} only in B)")
    ids = sorted(a)
    for pid in ids:
        if a[pid].label != b[pid].label:
            raise SchemaError(f"patient {pid} has different labels in the two files",
                              code="LABEL_CONFLICT")
    return (ids, np.array([a[i].score for i in ids]), np.array([b[i].score for i in ids]),
            np.array([a[i].label for i in ids]))


def _fmt(v):
    if v is None:
        return "NA"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def evaluate(pooled_a, pooled_b, threshold=0.5):
    """Compute every comparison metric. Returns ``(rows, roc_a, roc_b, ba, ids)``
    where ``rows`` is a list of ``(metric, value, detail)``."""
    ids, sa, sb, y = _align(pooled_a, pooled_b)
    rows = [("n_patients", len(ids), ""), ("n_positive", int(y.sum()), "")]
    roc_a, roc_b = stats.roc_curve(sa, y), stats.roc_curve(sb, y)
    rows += [("auc_a", roc_a.auc, "Mann-Whitney"), ("auc_b", roc_b.auc, "Mann-Whitney")]
    try:
        dl = stats.delong_test(sa, sb, y)
        rows += [
            ("delong_delta", dl.delta, "auc_a - auc_b"),
            ("delong_variance", dl.variance, ""),
            ("delong_z", dl.z, ""),
            ("delong_p", dl.p_two_sided, "two-sided"),
        ]
    except DegenerateVarianceError as exc:
        rows.append(("delong_status", exc.code, "no test possible"))
    rows += [("brier_a", stats.brier(sa, y), ""), ("brier_b", stats.brier(sb, y), "")]
    ks = stats.ks_two_sample(sa, sb)
    rows += [("ks_d", ks.d, "pooled scores A vs B"), ("ks_p", ks.p, "asymptotic")]
    ba = stats.bland_altman(sa, sb)
    rows += [
        ("ba_bias", ba.bias, "mean of B - A"),
        ("ba_sd", ba.sd, "sample sd"),
        ("ba_loa_low", ba.loa_low, "bias - 1.96 sd"),
        ("ba_loa_high", ba.loa_high, "bias + 1.96 sd"),
    ]
    for tag, s in (("a", sa), ("b", sb)):
        cm = stats.confusion_metrics(s, y, threshold)
        detail = f"threshold={threshold!r}"
        rows += [
            (f"accuracy_{tag}", cm.accuracy, detail),
            (f"sensitivity_{tag}", cm.sensitivity, detail),
            (f"specificity_{tag}", cm.specificity, detail),
        ]
    return rows, roc_a, roc_b, ba, ids


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def cmd_eval(args):
    pooled_a = load_pooled_csv(args.pooled_a)
    pooled_b = load_pooled_csv(args.pooled_b)
    rows, roc_a, roc_b, ba, ids = evaluate(pooled_a, pooled_b, args.threshold)
    out = args.out
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "eval_report.txt").write_text(
            "".join(f"{m}={_fmt(v)}\n" for m, v, _ in rows), encoding="utf-8")
        _write_csv(out / "eval_report.csv", ("metric", "value", "detail"),
                   [(m, _fmt(v), d) for m, v, d in rows])
        for tag, roc in (("a", roc_a), ("b", roc_b)):
            _write_csv(out / f"roc_{tag}.csv", ("threshold", "fpr", "tpr"),
                       [(repr(float(t)), repr(float(f)), repr(float(p)))
                        for t, f, p in zip(roc.thresholds, roc.fpr, roc.tpr)])
        _write_csv(out / "bland_altman.csv", ("patient_id", "mean", "diff"),
                   [(i, repr(float(m)), repr(float(d))) for i, m, d in zip(ids, ba.means, ba.diffs)])
    except OSError as exc:
        raise LungQCError(f"cannot write to {out}: {exc}", code="IO_ERROR") from exc
    sys.stdout.write("".join(f"{m}={_fmt(v)}\n" for m, v, _ in rows))
    return EXIT_OK


def cmd_montage(args):
    cfg = load_config(args.config, workers=1)
    columns = args.columns if args.columns is not None else cfg.montage_columns
    if columns < 1:
        raise UsageError("montage: --columns must be >= 1")
    voxels = read_npy_int16(args.block)
    if voxels.ndim != 3:
        raise LungQCError(f"{args.block}: expected a 3-D volume", code="SCHEMA_ERROR")
    write_montage_pgm(voxels, args.out, columns, cfg.window)
    return EXIT_OK


def cmd_phantoms(args):
    build_demo_corpus(args.out, seed=args.seed)
    return EXIT_OK


COMMANDS = {
    "qc": cmd_qc,
    "report": cmd_report,
    "pool": cmd_pool,
    "eval": cmd_eval,
    "montage": cmd_montage,
    "phantoms": cmd_phantoms,
}


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(
            level=logging.WARNING - 10 * min(args.verbose, 2),
            format="%(levelname)s %(name)s: %(message)s",
        )
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"error: {exc.code}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except LungQCError as exc:
        print(f"error: {exc.code}: {exc}", file=sys.stderr)
        return EXIT_FATAL
    except OSError as exc:
        print(f"error: IO_ERROR: {exc}", file=sys.stderr)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
