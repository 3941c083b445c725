"""Parse, repair, convert and score OTSL table-structure sequences."""

__version__ = "0.1.0"

from .align import RepairLog, align, align_text
from .convert import (CellSpan, HtmlTag, HtmlTagSequence, filter_structure, get_cell_spans,
                      html_to_otsl, otsl_to_html, parse_tags)
from .dataset import (CoverageStats, EvalConfig, EvalReport, SampleRecord, coverage_stats,
                      evaluate_batch, load_records, split_simple_complex, timing_report)
from .errors import *  # noqa: F401,F403
from .grid import Detection, GridEstimate, GridMatchMetrics, estimate_grid, grid_match_metrics, iou, nms
from .otsl import (OtslMatrix, OtslSequence, Token, ValidationReport, from_text, is_complex, parse,
                   random_valid, serialize, to_matrix, validate)
from .teds import EditCostModel, TableTree, build_tree, teds_s, tree_edit_distance
