"""otslkit command line: validate, align, convert, score and evaluate OTSL tables.

Exit codes are uniform: 0 success, 1 content failure, 2 I/O or environment failure.
Line-oriented inputs are ``SEQUENCE`` or ``ID<TAB>SEQUENCE``; unkeyed lines
use their 1-based line number as id.
"""
from __future__ import annotations

import argparse
import contextlib
import itertools
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from functools import partial

from . import __version__
from .align import align_text
from .convert import filter_structure, html_to_otsl, otsl_to_html
from .dataset import (EvalConfig, coverage_stats, evaluate_batch, ground_truth, iter_records)
from .errors import OtslError
from .grid import (DEFAULT_ROW_NMS_IOU, DEFAULT_SCORE_THRESHOLD, estimate_grid,
                   grid_match_metrics, load_detections)
from .otsl import from_text, parse, serialize, to_matrix, validate_sequence
from .teds import teds_s

log = logging.getLogger("otslkit")

EXIT_OK, EXIT_CONTENT, EXIT_IO = 0, 1, 2
DEFAULT_MAX_LEN = 224


class IOFailure(Exception):
    pass


def _default_jobs() -> int:
    try:
        return max(1, int(os.environ.get("OTSLKIT_JOBS", "1")))
    except ValueError:
        return 1


def _sentinels(args):
    start, stop = getattr(args, "sentinel_start", None), getattr(args, "sentinel_stop", None)
    return (start, stop) if start or stop else None


def _open_in(path):
    try:
        return open(path, encoding="utf-8")
    except OSError as exc:
        raise IOFailure(f"cannot read {path}: {exc.strerror or exc}") from None


@contextlib.contextmanager
def _open_out(path):
    if path in (None, "-"):
        yield sys.stdout
        return
    try:
        fh = open(path, "w", encoding="utf-8")
    except OSError as exc:
        raise IOFailure(f"cannot write {path}: {exc.strerror or exc}") from None
    with fh:
        yield fh


def _lines(path):
    """Yield (line number, id, payload, keyed) for every non-blank line."""
    with _open_in(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip("\r\n")
            if not line.strip():
                continue
            if "\t" in line:
                key, payload = line.split("\t", 1)
                yield lineno, key, payload, True
            else:
                yield lineno, str(lineno), line, False


def _ordered_map(fn, items, jobs: int, window: int = 2048):
    """map() that keeps input order and bounded memory, optionally in worker processes."""
    if jobs <= 1:
        yield from map(fn, items)
        return
    it = iter(items)
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        while chunk := list(itertools.islice(it, window)):
            yield from pool.map(fn, chunk, chunksize=max(1, len(chunk) // (jobs * 4)))


def _emit(out, key, keyed, payload):
    out.write(f"{key}\t{payload}\n" if keyed else f"{payload}\n")


def _error_entry(lineno, key, message):
    entry = {"line": lineno, "id": key, "error": message}
    print(json.dumps(entry), file=sys.stderr)
    return entry


# -- validate ---------------------------------------------------------------

def _validate_one(rows, cols, sentinels, item):
    lineno, key, payload, _ = item
    try:
        seq = parse(payload, sentinels)
    except OtslError as exc:
        return {"line": lineno, "id": key, "valid": False,
                "violations": [{"row": -1, "col": -1, "token": "", "rule": "vocabulary", "message": str(exc)}]}
    report = validate_sequence(seq, rows, cols)
    return {"line": lineno, "id": key, **report.to_dict()}


def cmd_validate(args) -> int:
    fn = partial(_validate_one, args.rows, args.cols, _sentinels(args))
    results = list(_ordered_map(fn, _lines(args.input), args.jobs))
    bad = [r for r in results if not r["valid"]]
    with _open_out(args.output) as out:
        if args.format == "json":
            json.dump({"n_lines": len(results), "n_invalid": len(bad), "lines": results}, out, indent=2)
            out.write("\n")
        else:
            for r in bad:
                for v in r["violations"]:
                    out.write(f"line {r['line']} ({r['id']}): ({v['row']},{v['col']}) {v['token']} "
                              f"{v['rule']}: {v['message']}\n")
            out.write(f"{len(results) - len(bad)}/{len(results)} lines valid\n")
    return EXIT_CONTENT if bad else EXIT_OK


# -- align ------------------------------------------------------------------

def _load_grid_file(path) -> dict[str, tuple[int, int]]:
    grids = {}
    with _open_in(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                grids[str(obj["id"])] = (int(obj["rows"]), int(obj["cols"]))
            except (ValueError, KeyError, TypeError) as exc:
                raise OtslError(f"{path}:{lineno}: bad grid entry ({exc})") from None
    return grids


def _align_one(sentinels, max_len, item):
    lineno, key, payload, keyed, grid = item
    if grid is None:
        return lineno, key, keyed, None, None, f"no grid for id {key!r}"
    try:
        m, repairs = align_text(payload, grid[0], grid[1], sentinels, max_len)
    except OtslError as exc:
        return lineno, key, keyed, None, None, str(exc)
    return lineno, key, keyed, serialize(m), repairs.to_dict(), None


def cmd_align(args) -> int:
    if args.grid_file:
        grids = _load_grid_file(args.grid_file)
    elif args.rows is not None and args.cols is not None:
        grids = None
    else:
        print("align needs --rows and --cols, or --grid-file", file=sys.stderr)
        return EXIT_CONTENT

    def items():
        for lineno, key, payload, keyed in _lines(args.input):
            grid = (args.rows, args.cols) if grids is None else grids.get(key)
            yield lineno, key, payload, keyed, grid

    failures = 0
    fn = partial(_align_one, _sentinels(args), args.max_len)
    with _open_out(args.output) as out, _open_out(args.log) if args.log else contextlib.nullcontext() as diag:
        for lineno, key, keyed, text, repairs, error in _ordered_map(fn, items(), args.jobs):
            if error:
                failures += 1
                entry = _error_entry(lineno, key, error)
                if diag:
                    diag.write(json.dumps(entry) + "\n")
                _emit(out, key, keyed, "")
                continue
            _emit(out, key, keyed, text)
            if diag:
                diag.write(json.dumps({"line": lineno, "id": key, **repairs}) + "\n")
    return EXIT_CONTENT if failures else EXIT_OK


# -- conversion -------------------------------------------------------------

def _otsl2html_one(rows, cols, sentinels, item):
    lineno, key, payload, keyed = item
    try:
        if rows is not None and cols is not None:
            m = to_matrix(parse(payload, sentinels), rows, cols)
        else:
            m = from_text(payload, sentinels)
        return lineno, key, keyed, str(otsl_to_html(m)), None
    except OtslError as exc:
        return lineno, key, keyed, None, str(exc)


def _html2otsl_one(item):
    lineno, key, payload, keyed = item
    try:
        return lineno, key, keyed, serialize(html_to_otsl(filter_structure(payload))), None
    except OtslError as exc:
        return lineno, key, keyed, None, str(exc)


def _convert(args, fn) -> int:
    failures = 0
    with _open_out(args.output) as out:
        for lineno, key, keyed, text, error in _ordered_map(fn, _lines(args.input), args.jobs):
            if error:
                failures += 1
                _error_entry(lineno, key, error)
                text = ""
            _emit(out, key, keyed, text)
    return EXIT_CONTENT if failures else EXIT_OK


def cmd_otsl2html(args) -> int:
    return _convert(args, partial(_otsl2html_one, args.rows, args.cols, _sentinels(args)))


def cmd_html2otsl(args) -> int:
    return _convert(args, _html2otsl_one)


# -- teds -------------------------------------------------------------------

def _structure(payload: str, sentinels):
    if payload.lstrip().startswith("<"):
        return filter_structure(payload)
    return otsl_to_html(from_text(payload, sentinels))


def _teds_one(sentinels, pair):
    (lineno, key, gt, _), (_, _, pred, _) = pair
    try:
        return lineno, key, teds_s(_structure(gt, sentinels), _structure(pred, sentinels)), None
    except OtslError as exc:
        return lineno, key, 0.0, str(exc)


def cmd_teds(args) -> int:
    gt_lines, pred_lines = list(_lines(args.gt)), list(_lines(args.pred))
    if len(gt_lines) != len(pred_lines):
        print(f"line count mismatch: {len(gt_lines)} ground truths vs {len(pred_lines)} predictions",
              file=sys.stderr)
        return EXIT_CONTENT
    fn = partial(_teds_one, _sentinels(args))
    scores, failures = [], 0
    for lineno, key, score, error in _ordered_map(fn, zip(gt_lines, pred_lines), args.jobs):
        if error:
            failures += 1
            _error_entry(lineno, key, error)
        scores.append({"line": lineno, "id": key, "teds_s": round(score, 4), "_raw": score, "error": error})
    mean = sum(s.pop("_raw") for s in scores) / len(scores) if scores else 0.0
    with _open_out(args.output) as out:
        if args.format == "json":
            json.dump({"n": len(scores), "mean": mean, "scores": scores}, out, indent=2)
            out.write("\n")
        else:
            for s in scores:
                out.write(f"{s['id']}\t{s['teds_s']:.4f}\n")
            out.write(f"mean\t{mean:.4f}\t({100 * mean:.2f}%)\n")
    return EXIT_CONTENT if failures else EXIT_OK


# -- grid -------------------------------------------------------------------

def cmd_grid(args) -> int:
    try:
        source = load_detections(args.detections)
    except OSError as exc:
        raise IOFailure(f"cannot read {args.detections}: {exc}") from None
    except (ValueError, KeyError, TypeError) as exc:
        raise OtslError(f"bad detections in {args.detections}: {exc}") from None
    with _open_out(args.output) as out:
        for key in sorted(source):
            est = estimate_grid(source[key], args.score_threshold, args.nms_iou, args.col_nms_iou)
            out.write(json.dumps({"id": key, "rows": est.rows, "cols": est.cols}) + "\n")
    return EXIT_OK


def cmd_gridmetrics(args) -> int:
    pred, gt = _load_grid_file(args.pred), _load_grid_file(args.gt)
    missing = sorted(set(gt) - set(pred))
    if missing:
        print(f"{len(missing)} ground-truth ids have no prediction, e.g. {missing[0]!r}", file=sys.stderr)
        return EXIT_CONTENT
    keys = sorted(gt)
    metrics = grid_match_metrics([pred[k] for k in keys], [gt[k] for k in keys])
    with _open_out(args.output) as out:
        if args.format == "json":
            json.dump(metrics.to_dict(), out, indent=2)
            out.write("\n")
        else:
            out.write(f"n={metrics.n}\n{'':<12}{'Exact %':>9}{'Avg L1':>9}\n")
            out.write(f"{'Rows':<12}{metrics.exact_match_rows:>9.2f}{metrics.l1_rows:>9.3f}\n")
            out.write(f"{'Cols':<12}{metrics.exact_match_cols:>9.2f}{metrics.l1_cols:>9.3f}\n")
            out.write(f"{'Rows & Cols':<12}{metrics.exact_match_both:>9.2f}{metrics.l1_both:>9.3f}\n")
            out.write(f"L1 for rows & cols = {metrics.l1_both_formula}\n")
    return EXIT_OK


# -- stats ------------------------------------------------------------------

def cmd_stats(args) -> int:
    sentinels = _sentinels(args)
    usable, warnings = [], 0
    for rec in iter_records(args.dataset):
        text = getattr(rec, args.field, None) if hasattr(rec, args.field) else rec.extra.get(args.field)
        if not text:
            warnings += 1
            print(json.dumps({"id": rec.id, "warning": f"missing {args.field}"}), file=sys.stderr)
            continue
        try:
            parse(text, sentinels)
        except OtslError as exc:
            warnings += 1
            print(json.dumps({"id": rec.id, "warning": str(exc)}), file=sys.stderr)
            continue
        usable.append(rec)
    groups = {"all": usable}
    for key in args.group_by:
        for rec in usable:
            groups.setdefault(f"{key}={rec.group_value(key)}", []).append(rec)
    result = {}
    for name, recs in groups.items():
        if not recs:
            continue
        stats = coverage_stats(recs, args.field, sentinels)
        simple = complex_ = unknown = 0
        for rec in recs:
            try:
                if ground_truth(rec, sentinels).complex:
                    complex_ += 1
                else:
                    simple += 1
            except OtslError:
                unknown += 1
        result[name] = {"coverage": stats, "simple": simple, "complex": complex_, "unknown": unknown}
    with _open_out(args.output) as out:
        if args.format == "json":
            payload = {k: {**v, "coverage": v["coverage"].to_dict()} for k, v in result.items()}
            json.dump({"field": args.field, "warnings": warnings, "groups": payload}, out, indent=2)
            out.write("\n")
        else:
            for name, v in result.items():
                out.write(v["coverage"].to_text(name) + "\n")
                out.write(f"simple={v['simple']} complex={v['complex']} unknown={v['unknown']}\n\n")
            if not result:
                out.write("no usable records\n")
    return EXIT_CONTENT if not result else EXIT_OK


# -- eval -------------------------------------------------------------------

def cmd_eval(args) -> int:
    records = list(iter_records(args.dataset))
    detections = None
    if args.detections:
        try:
            detections = load_detections(args.detections)
        except OSError as exc:
            raise IOFailure(f"cannot read {args.detections}: {exc}") from None
    config = EvalConfig(
        score_threshold=args.score_threshold, row_nms_iou=args.nms_iou, col_nms_iou=args.col_nms_iou,
        max_len=args.max_len or None, group_by=tuple(args.group_by), sentinels=_sentinels(args),
        jobs=args.jobs, deterministic=args.deterministic,
    )
    report = evaluate_batch(records, detections, config,
                            detections_dir=os.path.dirname(os.path.abspath(args.dataset)))
    with _open_out(args.output) as out:
        out.write(report.to_json(args.verbose) + "\n" if args.format == "json" else report.to_text() + "\n")
    if args.log:
        with _open_out(args.log) as diag:
            for r in report.records:
                diag.write(json.dumps({"id": r.id, "failed": r.failed, "reason": r.reason,
                                       "repairs": r.repairs, "entries": r.repair_log}) + "\n")
    return EXIT_OK


# -- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="otslkit", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose-log", action="store_true", help="debug logging on stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, fmt=True, jobs=True, sentinels=True):
        sp.add_argument("-o", "--output", help="output file (default stdout)")
        if fmt:
            sp.add_argument("--format", choices=("json", "text"), default="text")
        if jobs:
            sp.add_argument("--jobs", type=int, default=_default_jobs(),
                            help="worker processes (default $OTSLKIT_JOBS or 1)")
        if sentinels:
            sp.add_argument("--sentinel-start", help="start token stripped from OTSL lines")
            sp.add_argument("--sentinel-stop", help="stop token stripped from OTSL lines")

    def grid_flags(sp):
        sp.add_argument("--score-threshold", type=float, default=DEFAULT_SCORE_THRESHOLD)
        sp.add_argument("--nms-iou", type=float, default=DEFAULT_ROW_NMS_IOU, help="row NMS IoU threshold")
        sp.add_argument("--col-nms-iou", type=float, default=None, help="enable column NMS at this IoU")

    sp = sub.add_parser("validate", help="check OTSL lines against the grammar")
    sp.add_argument("input")
    sp.add_argument("--rows", type=int)
    sp.add_argument("--cols", type=int)
    common(sp)
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("align", help="repair predicted OTSL lines to a grid")
    sp.add_argument("input")
    sp.add_argument("--rows", type=int)
    sp.add_argument("--cols", type=int)
    sp.add_argument("--grid-file", help="JSONL of {id, rows, cols}")
    sp.add_argument("--max-len", type=int, default=DEFAULT_MAX_LEN, help="cap on raw length; 0 disables")
    sp.add_argument("--log", help="write repair diagnostics as JSONL here")
    common(sp, fmt=False)
    sp.set_defaults(func=cmd_align)

    sp = sub.add_parser("otsl2html", help="convert OTSL lines to HTML structure")
    sp.add_argument("input")
    sp.add_argument("--rows", type=int)
    sp.add_argument("--cols", type=int)
    common(sp, fmt=False)
    sp.set_defaults(func=cmd_otsl2html)

    sp = sub.add_parser("html2otsl", help="convert HTML lines to OTSL")
    sp.add_argument("input")
    common(sp, fmt=False, sentinels=False)
    sp.set_defaults(func=cmd_html2otsl)

    sp = sub.add_parser("teds", help="TEDS-S between paired lines (HTML or OTSL)")
    sp.add_argument("gt")
    sp.add_argument("pred")
    common(sp)
    sp.set_defaults(func=cmd_teds)

    sp = sub.add_parser("grid", help="estimate grid counts from detections")
    sp.add_argument("detections", help="directory of <id>.json, a .json array, or JSONL")
    grid_flags(sp)
    common(sp, fmt=False, jobs=False, sentinels=False)
    sp.set_defaults(func=cmd_grid)

    sp = sub.add_parser("gridmetrics", help="exact match and L1 error of grid counts")
    sp.add_argument("pred")
    sp.add_argument("gt")
    common(sp, jobs=False, sentinels=False)
    sp.set_defaults(func=cmd_gridmetrics)

    sp = sub.add_parser("stats", help="token coverage and simple/complex counts")
    sp.add_argument("dataset")
    sp.add_argument("--field", default="gt_otsl")
    sp.add_argument("--group-by", action="append", default=[])
    common(sp, jobs=False)
    sp.set_defaults(func=cmd_stats)

    sp = sub.add_parser("eval", help="end-to-end evaluation of a dataset JSONL")
    sp.add_argument("dataset")
    sp.add_argument("--detections", help="directory, .json or JSONL detections")
    grid_flags(sp)
    sp.add_argument("--max-len", type=int, default=DEFAULT_MAX_LEN, help="cap on raw length; 0 disables")
    sp.add_argument("--group-by", action="append", default=[])
    sp.add_argument("--deterministic", action="store_true", help="zero all timing fields")
    sp.add_argument("--verbose", action="store_true", help="include repair logs and HTML per record")
    sp.add_argument("--log", help="write per-record repair diagnostics as JSONL here")
    common(sp)
    sp.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose_log else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "max_len", None) == 0:
        args.max_len = None
    try:
        return args.func(args)
    except IOFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OtslError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONTENT


if __name__ == "__main__":
    sys.exit(main())
