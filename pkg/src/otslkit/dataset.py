"""Dataset records, coverage statistics and the end-to-end batch evaluation."""
from __future__ import annotations

import json
import logging
import math
import time
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import partial
from typing import Callable, Iterable, Iterator, Sequence

from .align import align_text
from .convert import HtmlTagSequence, filter_structure, html_to_otsl, otsl_to_html
from .errors import (ConfigError, DuplicateId, InconsistentGeometry, MissingField, OtslError,
                     ParseError, ZeroSamples)
from .grid import (DEFAULT_ROW_NMS_IOU, DEFAULT_SCORE_THRESHOLD, Detection, GridMatchMetrics,
                   estimate_grid, grid_match_metrics, resolve_detections)
from .otsl import Token, from_text, is_complex, parse
from .teds import teds_s

log = logging.getLogger(__name__)

FIELDS = ("id", "gt_otsl", "gt_html", "pred_otsl", "detections_ref", "gt_grid",
          "language", "modality", "split")
GROUP_FIELDS = ("language", "modality", "split")
MODALITIES = ("document", "scene")
SPLITS = ("train", "val", "test")
TOKEN_ORDER = tuple(t.value for t in Token)


@dataclass
class SampleRecord:
    id: str
    gt_otsl: str | None = None
    gt_html: str | None = None
    pred_otsl: str | None = None
    detections_ref: str | None = None
    gt_grid: tuple[int, int] | None = None
    language: str | None = None
    modality: str | None = None
    split: str | None = None
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict) -> "SampleRecord":
        if not isinstance(d, dict):
            raise ValueError("record must be a JSON object")
        if "id" not in d or d["id"] is None:
            raise ValueError("record has no id")
        known = {k: d.get(k) for k in FIELDS}
        known["id"] = str(known["id"])
        for key in ("gt_otsl", "gt_html", "pred_otsl", "detections_ref", "language"):
            if known[key] is not None and not isinstance(known[key], str):
                raise ValueError(f"{key} must be a string")
        grid = known["gt_grid"]
        if grid is not None:
            if (not isinstance(grid, (list, tuple)) or len(grid) != 2
                    or not all(isinstance(v, int) and v >= 0 for v in grid)):
                raise ValueError(f"gt_grid must be [rows, cols], got {grid!r}")
            known["gt_grid"] = (grid[0], grid[1])
        if known["modality"] is not None and known["modality"] not in MODALITIES:
            raise ValueError(f"modality must be one of {MODALITIES}")
        if known["split"] is not None and known["split"] not in SPLITS:
            raise ValueError(f"split must be one of {SPLITS}")
        extra = {k: v for k, v in d.items() if k not in FIELDS}
        return cls(**known, extra=extra)

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in FIELDS if getattr(self, k) is not None}
        if self.gt_grid is not None:
            out["gt_grid"] = list(self.gt_grid)
        out.update(self.extra)
        return out

    def group_value(self, key: str):
        if key in GROUP_FIELDS:
            return getattr(self, key)
        return self.extra.get(key)


def iter_records(path) -> Iterator[SampleRecord]:
    """Stream records from a JSONL file, rejecting malformed lines and repeated ids."""
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = SampleRecord.from_dict(json.loads(line))
            except ValueError as exc:
                raise ParseError(lineno, str(exc)) from None
            if rec.id in seen:
                raise DuplicateId(rec.id, lineno)
            seen.add(rec.id)
            yield rec


def load_records(path) -> list[SampleRecord]:
    return list(iter_records(path))


def write_records(records: Iterable[SampleRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_dict(), ensure_ascii=False) + "\n")


# -- coverage ---------------------------------------------------------------

def occupancy(tokens: Sequence) -> dict[str, float]:
    """Percentage of each token in one sequence."""
    n = len(tokens)
    if n == 0:
        raise ValueError("empty sequence")
    counts = Counter(str(t) for t in tokens)
    return {t: 100.0 * counts.get(t, 0) / n for t in TOKEN_ORDER}


@dataclass(frozen=True)
class CoverageStats:
    n_samples: int
    total_tokens: int
    counts: dict[str, int]
    avg_pct: dict[str, float]
    pooled_pct: dict[str, float]

    def to_dict(self) -> dict:
        return asdict(self)

    def to_text(self, title: str = "") -> str:
        lines = [f"{title} (n={self.n_samples})" if title else f"n={self.n_samples}",
                 f"{'CHAR':<6}{'Counts':>12}{'Avg % occupancy':>18}{'Pooled %':>11}"]
        for t in TOKEN_ORDER:
            lines.append(f"{t:<6}{self.counts[t]:>12}{self.avg_pct[t]:>18.2f}{self.pooled_pct[t]:>11.2f}")
        return "\n".join(lines)


def _selector(field_name):
    if callable(field_name):
        return field_name
    return lambda rec: getattr(rec, field_name, None) if field_name in FIELDS else rec.extra.get(field_name)


def coverage_stats(records: Iterable[SampleRecord], field_name="gt_otsl", sentinels=None) -> CoverageStats:
    """Token totals plus average (per-table) and pooled token occupancy."""
    select = _selector(field_name)
    label = field_name if isinstance(field_name, str) else "selected field"
    counts = Counter()
    pct_sums = dict.fromkeys(TOKEN_ORDER, 0.0)
    n = 0
    for rec in records:
        text = select(rec)
        if not text:
            raise MissingField(rec.id, label)
        tokens = parse(text, sentinels).tokens
        if not tokens:
            raise MissingField(rec.id, label)
        counts.update(t.value for t in tokens)
        for t, pct in occupancy(tokens).items():
            pct_sums[t] += pct
        n += 1
    if n == 0:
        raise ZeroSamples("no records to summarise")
    total = sum(counts.values())
    return CoverageStats(
        n_samples=n,
        total_tokens=total,
        counts={t: counts.get(t, 0) for t in TOKEN_ORDER},
        avg_pct={t: pct_sums[t] / n for t in TOKEN_ORDER},
        pooled_pct={t: 100.0 * counts.get(t, 0) / total for t in TOKEN_ORDER},
    )


# -- ground truth -----------------------------------------------------------

@dataclass(frozen=True)
class GroundTruth:
    tags: HtmlTagSequence
    shape: tuple[int, int] | None
    complex: bool


def ground_truth(rec: SampleRecord, sentinels=None) -> GroundTruth:
    """Structure tags of the record's ground truth; gt_otsl wins over gt_html."""
    if rec.gt_otsl:
        m = from_text(rec.gt_otsl, sentinels)
        return GroundTruth(otsl_to_html(m), (m.rows, m.cols), is_complex(m))
    if rec.gt_html:
        tags = filter_structure(rec.gt_html)
        try:
            m = html_to_otsl(tags)
        except InconsistentGeometry:
            spanned = any(t.colspan or t.rowspan for t in tags)
            return GroundTruth(tags, None, spanned)
        return GroundTruth(tags, (m.rows, m.cols), is_complex(m))
    raise MissingField(rec.id, "gt_otsl/gt_html")


def split_simple_complex(records: Iterable[SampleRecord], sentinels=None):
    simple, complex_ = [], []
    for rec in records:
        (complex_ if ground_truth(rec, sentinels).complex else simple).append(rec)
    return simple, complex_


# -- evaluation -------------------------------------------------------------

@dataclass(frozen=True)
class EvalConfig:
    score_threshold: float = DEFAULT_SCORE_THRESHOLD
    row_nms_iou: float | None = DEFAULT_ROW_NMS_IOU
    col_nms_iou: float | None = None
    max_len: int | None = 224
    group_by: tuple[str, ...] = ()
    sentinels: tuple[str, str] | None = None
    jobs: int = 1
    deterministic: bool = False
    score: bool = True  # False skips TEDS-S (latency profiling)


@dataclass
class RecordResult:
    id: str
    teds_s: float = 0.0
    failed: bool = False
    reason: str | None = None
    rows: int | None = None
    cols: int | None = None
    grid_source: str | None = None
    gt_shape: tuple[int, int] | None = None
    complex: bool | None = None
    repairs: dict = field(default_factory=dict)
    groups: dict = field(default_factory=dict)
    t_align: float = 0.0
    t_convert: float = 0.0
    t_score: float = 0.0
    t_grid: float | None = None
    t_sprint: float | None = None
    repair_log: list | None = None
    pred_html: str | None = None

    def to_dict(self, verbose: bool = False) -> dict:
        d = asdict(self)
        if not verbose:
            d.pop("repair_log")
            d.pop("pred_html")
        return d


def _external_time(rec: SampleRecord, key: str) -> float | None:
    value = rec.extra.get(key)
    return float(value) if isinstance(value, (int, float)) else None


def evaluate_record(rec: SampleRecord, config: EvalConfig = EvalConfig(),
                    detections: list[Detection] | None = None) -> RecordResult:
    """Run grid, alignment, conversion and scoring for one record.

    Failures never raise; they score 0 and carry a reason.
    """
    res = RecordResult(rec.id, groups={k: rec.group_value(k) for k in config.group_by},
                       t_grid=_external_time(rec, "t_grid"), t_sprint=_external_time(rec, "t_sprint"))

    def fail(reason: str) -> RecordResult:
        res.failed, res.reason, res.teds_s = True, reason, 0.0
        return res

    try:
        gt = ground_truth(rec, config.sentinels)
    except OtslError as exc:
        return fail(f"ground truth: {exc}")
    res.gt_shape, res.complex = gt.shape, gt.complex

    if rec.gt_grid is not None:
        res.rows, res.cols = rec.gt_grid
        res.grid_source = "gt_grid"
    elif detections is not None:
        est = estimate_grid(detections, config.score_threshold, config.row_nms_iou, config.col_nms_iou)
        res.rows, res.cols = est.rows, est.cols
        res.grid_source = "detections"
    else:
        return fail("no grid source")
    if res.rows < 1 or res.cols < 1:
        return fail("empty grid")
    if rec.pred_otsl is None:
        return fail("missing prediction")

    t0 = time.perf_counter()
    matrix, repairs = align_text(rec.pred_otsl, res.rows, res.cols, config.sentinels, config.max_len)
    t1 = time.perf_counter()
    pred = otsl_to_html(matrix)
    t2 = time.perf_counter()
    if config.score:
        res.teds_s = teds_s(gt.tags, pred)
    t3 = time.perf_counter()
    res.repairs = dict(repairs.counts)
    res.repair_log = [e.to_dict() for e in repairs.entries]
    res.pred_html = str(pred)
    if not config.deterministic:
        res.t_align, res.t_convert, res.t_score = t1 - t0, t2 - t1, t3 - t2
    return res


def _evaluate_task(config: EvalConfig, task) -> RecordResult:
    rec, dets = task
    return evaluate_record(rec, config, dets)


@dataclass(frozen=True)
class GroupScores:
    n: int
    n_simple: int
    n_complex: int
    n_failed: int
    simple: float | None
    complex: float | None
    overall: float | None
    overall_excluding_failed: float | None

    def to_dict(self) -> dict:
        return asdict(self)


def _mean100(values: list[float]) -> float | None:
    return 100.0 * math.fsum(values) / len(values) if values else None


def aggregate(results: Sequence[RecordResult]) -> GroupScores:
    ordered = sorted(results, key=lambda r: r.id)
    simple = [r.teds_s for r in ordered if r.complex is False]
    complex_ = [r.teds_s for r in ordered if r.complex]
    ok = [r.teds_s for r in ordered if not r.failed]
    return GroupScores(
        n=len(ordered), n_simple=len(simple), n_complex=len(complex_),
        n_failed=len(ordered) - len(ok),
        simple=_mean100(simple), complex=_mean100(complex_),
        overall=_mean100([r.teds_s for r in ordered]),
        overall_excluding_failed=_mean100(ok),
    )


@dataclass
class EvalReport:
    records: list[RecordResult]
    groups: dict[str, GroupScores]
    grid_metrics: GridMatchMetrics | None
    config: EvalConfig

    @property
    def overall(self) -> GroupScores:
        return self.groups["overall"]

    def to_dict(self, verbose: bool = False) -> dict:
        return {
            "config": asdict(self.config),
            "groups": {k: v.to_dict() for k, v in self.groups.items()},
            "grid_metrics": self.grid_metrics.to_dict() if self.grid_metrics else None,
            "timing": timing_report(self).to_dict(),
            "records": [r.to_dict(verbose) for r in self.records],
        }

    def to_json(self, verbose: bool = False) -> str:
        return json.dumps(self.to_dict(verbose), indent=2, sort_keys=True)

    def to_text(self) -> str:
        def fmt(v):
            return f"{v:>9.2f}" if v is not None else f"{'-':>9}"

        width = max([24] + [len(k) + 2 for k in self.groups])
        lines = [f"{'TEDS-S x100':<{width}}{'N':>6}{'Simple':>9}{'Complex':>9}{'Overall':>9}"
                 f"{'Failed':>8}{'Overall*':>10}"]
        for name, g in self.groups.items():
            lines.append(f"{name:<{width}}{g.n:>6}{fmt(g.simple)}{fmt(g.complex)}{fmt(g.overall)}"
                         f"{g.n_failed:>8}{fmt(g.overall_excluding_failed):>10}")
        lines.append("* failed records excluded; failed records score 0 in every other column")
        gm = self.grid_metrics
        if gm is not None:
            lines += ["", f"Grid estimate vs ground truth (n={gm.n})",
                      f"{'':<12}{'Exact %':>9}{'Avg L1':>9}",
                      f"{'Rows':<12}{gm.exact_match_rows:>9.2f}{gm.l1_rows:>9.3f}",
                      f"{'Cols':<12}{gm.exact_match_cols:>9.2f}{gm.l1_cols:>9.3f}",
                      f"{'Rows & Cols':<12}{gm.exact_match_both:>9.2f}{gm.l1_both:>9.3f}",
                      f"L1 for rows & cols = {gm.l1_both_formula}"]
        t = timing_report(self)
        lines += ["", "Mean time per table (ms)"]
        for name, value in t.rows():
            lines.append(f"  {name:<18}{value}")
        return "\n".join(lines)


def _check_group_keys(records: Sequence[SampleRecord], keys: Iterable[str]) -> None:
    for key in keys:
        if key in FIELDS and key not in GROUP_FIELDS:
            raise ConfigError(f"cannot group by {key!r}")
        if key not in GROUP_FIELDS and not any(key in r.extra for r in records):
            raise ConfigError(f"grouping key {key!r} is not a record field")


def evaluate_batch(records: Iterable[SampleRecord], detections: dict | Callable | None = None,
                   config: EvalConfig = EvalConfig(), detections_dir=None) -> EvalReport:
    """Evaluate every record and aggregate TEDS-S by simple/complex and configured groups.

    ``detections`` maps a record's ``detections_ref`` (or its id) to detections;
    a callable taking the record is also accepted. Records with ``gt_grid``
    never consult detections.
    """
    records = list(records)
    _check_group_keys(records, config.group_by)
    tasks = []
    for rec in records:
        dets = None
        if rec.gt_grid is None:
            if callable(detections):
                dets = detections(rec)
            else:
                dets = resolve_detections(rec.detections_ref or rec.id, detections, detections_dir)
                if dets is None and rec.detections_ref:
                    dets = resolve_detections(rec.id, detections, detections_dir)
        tasks.append((rec, dets))

    worker = partial(_evaluate_task, config)
    if config.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            results = list(pool.map(worker, tasks, chunksize=max(1, len(tasks) // (config.jobs * 4))))
    else:
        results = [worker(t) for t in tasks]
    for r in results:
        if r.failed:
            log.info("record %s scored 0: %s", r.id, r.reason)

    groups = {"overall": aggregate(results)}
    for key in config.group_by:
        values = sorted({str(r.groups.get(key)) for r in results})
        for value in values:
            members = [r for r in results if str(r.groups.get(key)) == value]
            groups[f"{key}={value}"] = aggregate(members)

    pairs = [((r.rows, r.cols), r.gt_shape) for r in sorted(results, key=lambda r: r.id)
             if r.grid_source == "detections" and r.gt_shape is not None]
    metrics = grid_match_metrics(*map(list, zip(*pairs))) if pairs else None
    return EvalReport(results, groups, metrics, config)


# -- timing -----------------------------------------------------------------

@dataclass(frozen=True)
class TimingReport:
    n: int
    t_alignment: float
    t_conversion: float
    t_score: float
    t_grid: float | str
    t_sprint: float | str
    t_post_processing: float
    t_total: float | str
    totals: dict[str, float]

    def to_dict(self) -> dict:
        return asdict(self)

    def rows(self):
        def ms(v):
            return f"{v * 1000:.3f}" if isinstance(v, float) else v

        return [("T_Grid", ms(self.t_grid)), ("T_Alignment", ms(self.t_alignment)),
                ("T_Conversion", ms(self.t_conversion)), ("T_Post-Processing", ms(self.t_post_processing)),
                ("T_SPRINT", ms(self.t_sprint)), ("T_total", ms(self.t_total)),
                ("T_score", ms(self.t_score))]


def timing_report(report: EvalReport) -> TimingReport:
    """Mean per-table phase times; T_post = T_grid + T_align + T_conv, T_total = T_model + T_post.

    Model and grid-detector times are not measured here: they count only
    when every record supplies ``t_sprint`` / ``t_grid``, else they are
    reported as "external" and left out of the sums.
    """
    rs = [r for r in report.records if not r.failed]
    n = len(rs)
    if n == 0:
        log.warning("timing report over an empty batch")
        zero = {"t_alignment": 0.0, "t_conversion": 0.0, "t_score": 0.0}
        return TimingReport(0, 0.0, 0.0, 0.0, "external", "external", 0.0, "external", zero)
    totals = {"t_alignment": math.fsum(r.t_align for r in rs),
              "t_conversion": math.fsum(r.t_convert for r in rs),
              "t_score": math.fsum(r.t_score for r in rs)}

    def external(attr):
        values = [getattr(r, attr) for r in rs]
        if all(v is not None for v in values):
            totals[attr] = math.fsum(values)
            return totals[attr] / n
        return "external"

    t_grid, t_sprint = external("t_grid"), external("t_sprint")
    t_post = (totals["t_alignment"] + totals["t_conversion"]) / n
    if isinstance(t_grid, float):
        t_post += t_grid
    t_total = t_sprint + t_post if isinstance(t_sprint, float) else "external"
    return TimingReport(n, totals["t_alignment"] / n, totals["t_conversion"] / n, totals["t_score"] / n,
                        t_grid, t_sprint, t_post, t_total, totals)
