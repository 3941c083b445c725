"""Grid estimation from row/column detections, and the grid-count metrics."""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import LengthMismatch, ParseError

ROW, COLUMN, OTHER = "table-row", "table-column", "other"

DEFAULT_SCORE_THRESHOLD = 0.25
DEFAULT_ROW_NMS_IOU = 0.25


def normalize_label(label: str) -> str:
    """Map detector class names ('table row', 'table_column', ...) onto our three classes."""
    norm = label.strip().lower().replace("_", "-").replace(" ", "-")
    return norm if norm in (ROW, COLUMN) else OTHER


@dataclass(frozen=True)
class Detection:
    label: str
    score: float
    bbox: tuple[float, float, float, float]

    def __post_init__(self):
        x0, y0, x1, y1 = self.bbox
        if not (x0 < x1 and y0 < y1):
            raise ValueError(f"degenerate box {self.bbox}")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")
        object.__setattr__(self, "bbox", (float(x0), float(y0), float(x1), float(y1)))

    @property
    def class_label(self) -> str:
        return normalize_label(self.label)

    @classmethod
    def from_dict(cls, d: dict) -> "Detection":
        return cls(str(d["label"]), float(d["score"]), tuple(d["bbox"]))

    def to_dict(self) -> dict:
        return {"label": self.label, "score": self.score, "bbox": list(self.bbox)}


def iou(a: Sequence[float], b: Sequence[float]) -> float:
    ix = min(a[2], b[2]) - max(a[0], b[0])
    iy = min(a[3], b[3]) - max(a[1], b[1])
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    return inter / union


def _position_key(det: Detection):
    x0, y0, x1, y1 = det.bbox
    if det.class_label == COLUMN:
        return (x0, y0, x1, y1)
    return (y0, x0, y1, x1)


def nms(dets: Iterable[Detection], iou_threshold: float) -> list[Detection]:
    """Greedy NMS on one class; survivors are returned in reading order.

    Equal scores are broken by position (top, then left) so the result does
    not depend on input order.
    """
    order = sorted(dets, key=lambda d: (-d.score, d.bbox[1], d.bbox[0], d.bbox[3], d.bbox[2]))
    kept: list[Detection] = []
    for det in order:
        if all(iou(det.bbox, k.bbox) <= iou_threshold for k in kept):
            kept.append(det)
    return sorted(kept, key=_position_key)


@dataclass(frozen=True)
class GridEstimate:
    kept_row_boxes: tuple[Detection, ...] = ()
    kept_col_boxes: tuple[Detection, ...] = ()

    @property
    def rows(self) -> int:
        return len(self.kept_row_boxes)

    @property
    def cols(self) -> int:
        return len(self.kept_col_boxes)


def estimate_grid(dets: Iterable[Detection], score_threshold: float = DEFAULT_SCORE_THRESHOLD,
                  row_nms_iou: float | None = DEFAULT_ROW_NMS_IOU,
                  col_nms_iou: float | None = None) -> GridEstimate:
    """Count table rows and columns among confident detections.

    Only the row class goes through NMS by default; pass ``col_nms_iou`` to
    suppress overlapping columns too. Other classes are ignored.
    """
    rows, cols = [], []
    for d in dets:
        if d.score < score_threshold:
            continue
        cls = d.class_label
        if cls == ROW:
            rows.append(d)
        elif cls == COLUMN:
            cols.append(d)
    rows = nms(rows, row_nms_iou) if row_nms_iou is not None else sorted(rows, key=_position_key)
    cols = nms(cols, col_nms_iou) if col_nms_iou is not None else sorted(cols, key=_position_key)
    return GridEstimate(tuple(rows), tuple(cols))


@dataclass(frozen=True)
class GridMatchMetrics:
    n: int
    exact_match_rows: float
    exact_match_cols: float
    exact_match_both: float
    l1_rows: float
    l1_cols: float
    l1_both: float
    l1_both_formula: str = field(default="mean over samples of (|dR| + |dC|) / 2")

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def grid_match_metrics(pred: Sequence[tuple[int, int]], gt: Sequence[tuple[int, int]]) -> GridMatchMetrics:
    if len(pred) != len(gt):
        raise LengthMismatch(f"{len(pred)} predictions vs {len(gt)} ground truths")
    n = len(gt)
    if n == 0:
        raise LengthMismatch("no samples")
    dr = [abs(p[0] - g[0]) for p, g in zip(pred, gt)]
    dc = [abs(p[1] - g[1]) for p, g in zip(pred, gt)]
    return GridMatchMetrics(
        n=n,
        exact_match_rows=100.0 * sum(d == 0 for d in dr) / n,
        exact_match_cols=100.0 * sum(d == 0 for d in dc) / n,
        exact_match_both=100.0 * sum(r == 0 and c == 0 for r, c in zip(dr, dc)) / n,
        l1_rows=sum(dr) / n,
        l1_cols=sum(dc) / n,
        l1_both=sum((r + c) / 2 for r, c in zip(dr, dc)) / n,
    )


def parse_detections(obj) -> list[Detection]:
    if not isinstance(obj, list):
        raise ValueError("detections must be a JSON array")
    return [Detection.from_dict(d) for d in obj]


def load_detection_file(path) -> list[Detection]:
    with open(path, encoding="utf-8") as fh:
        return parse_detections(json.load(fh))


def load_detections(path) -> dict[str, list[Detection]]:
    """Detections keyed by image id.

    ``path`` is a directory of ``<id>.json`` arrays, a single ``.json`` array
    (keyed by its stem), or a JSONL stream of ``{"id": ..., "detections": [...]}``.
    """
    path = Path(path)
    if path.is_dir():
        return {p.stem: load_detection_file(p) for p in sorted(path.glob("*.json"))}
    if path.suffix == ".json":
        return {path.stem: load_detection_file(path)}
    out: dict[str, list[Detection]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                out[str(obj["id"])] = parse_detections(obj["detections"])
            except (ValueError, KeyError, TypeError) as exc:
                raise ParseError(lineno, str(exc)) from None
    return out


def resolve_detections(ref: str, source: dict | None, base_dir=None) -> list[Detection] | None:
    """Find detections by key in ``source`` or, failing that, as a file path."""
    if source is not None and ref in source:
        return source[ref]
    candidate = Path(base_dir, ref) if base_dir and not os.path.isabs(ref) else Path(ref)
    if candidate.is_file():
        return load_detection_file(candidate)
    return None
