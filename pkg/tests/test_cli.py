import json
import subprocess
import sys

import pytest

from otslkit.cli import main
from otslkit.dataset import write_records
from otslkit.synthetic import make_records

HEADER_SPAN = "FLNFFNFFNFFNFFN"
HEADER_SPAN_HTML = ("<html><table><tbody><tr><td colspan=2></td></tr>"
                    + "<tr><td></td><td></td></tr>" * 4 + "</tbody></table></html>")
ROW_2 = "<table><tbody><tr><td></td><td></td></tr></tbody></table>"
ROW_1 = "<table><tbody><tr><td></td></tr></tbody></table>"


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def write(tmp_path):
    def _write(name, text):
        p = tmp_path / name
        p.write_text(text)
        return p
    return _write


class TestValidate:
    def test_valid(self, capsys, write):
        code, out, _ = run(capsys, "validate", write("a.txt", "FLNFFN\nFN\n"))
        assert code == 0 and "2/2 lines valid" in out

    def test_invalid_line_named(self, capsys, write):
        code, out, _ = run(capsys, "validate", write("a.txt", "FN\nLN\n"), "--format", "json")
        report = json.loads(out)
        assert code == 1 and report["n_invalid"] == 1
        assert [x["line"] for x in report["lines"] if not x["valid"]] == [2]

    def test_missing_file(self, capsys, tmp_path):
        code, _, err = run(capsys, "validate", tmp_path / "nope.txt")
        assert code == 2 and "cannot read" in err

    def test_shape_flags(self, capsys, write):
        assert run(capsys, "validate", write("a.txt", "FFNFFN\n"), "--rows", 3, "--cols", 2)[0] == 1

    def test_unknown_character(self, capsys, write):
        code, out, _ = run(capsys, "validate", write("a.txt", "FQN\n"))
        assert code == 1 and "vocabulary" in out


class TestAlign:
    def test_header_span(self, capsys, write, tmp_path):
        log = tmp_path / "log.jsonl"
        code, out, _ = run(capsys, "align", write("a.txt", HEADER_SPAN[:-1] + "\n"), "--rows", 5, "--cols", 2,
                           "--log", log)
        assert code == 0 and out == HEADER_SPAN + "\n"
        assert json.loads(log.read_text())["counts"] == {"padded": 1, "forced-N": 1}

    def test_empty_input(self, capsys, write):
        assert run(capsys, "align", write("a.txt", ""), "--rows", 1, "--cols", 1) == (0, "", "")

    def test_grid_file_missing_id(self, capsys, write):
        grids = write("g.jsonl", json.dumps({"id": "a", "rows": 1, "cols": 2}) + "\n")
        code, out, err = run(capsys, "align", write("a.txt", "a\tFL\nb\tFN\n"), "--grid-file", grids)
        assert code == 1
        assert out == "a\tFLN\nb\t\n"
        assert json.loads(err.strip())["id"] == "b"

    def test_needs_grid(self, capsys, write):
        assert run(capsys, "align", write("a.txt", "FN\n"))[0] == 1

    def test_parallel_order(self, capsys, write):
        lines = "".join(f"k{i}\t{'FUXL' * (i % 7)}\n" for i in range(60))
        serial = run(capsys, "align", write("a.txt", lines), "--rows", 3, "--cols", 3)
        parallel = run(capsys, "align", write("a.txt", lines), "--rows", 3, "--cols", 3, "--jobs", 3)
        assert serial == parallel and serial[0] == 0


class TestConvert:
    def test_otsl2html_header_span(self, capsys, write):
        assert run(capsys, "otsl2html", write("a.txt", HEADER_SPAN + "\n")) == (0, HEADER_SPAN_HTML + "\n", "")

    def test_one_by_one(self, capsys, write):
        _, out, _ = run(capsys, "otsl2html", write("a.txt", "FN\n"))
        assert out == "<html><table><tbody><tr><td></td></tr></tbody></table></html>\n"

    def test_malformed_line_continues(self, capsys, write):
        code, out, err = run(capsys, "otsl2html", write("a.txt", "FN\nLN\nFFN\n"))
        assert code == 1 and out.splitlines()[1] == "" and len(out.splitlines()) == 3
        assert json.loads(err.strip())["line"] == 2

    def test_html2otsl(self, capsys, write):
        code, out, _ = run(capsys, "html2otsl", write("a.html", HEADER_SPAN_HTML + "\n<table><tr><td>x\n"))
        assert code == 0 and out == HEADER_SPAN + "\nFN\n"

    def test_html2otsl_bad(self, capsys, write):
        code, out, _ = run(capsys, "html2otsl", write("a.html", "<p>x</p>\n"))
        assert code == 1 and out == "\n"


class TestTeds:
    def test_identical(self, capsys, write):
        f = write("a.txt", HEADER_SPAN + "\nFN\n")
        code, out, _ = run(capsys, "teds", f, f, "--format", "json")
        assert code == 0 and json.loads(out)["mean"] == 1.0

    def test_known_pair(self, capsys, write):
        code, out, _ = run(capsys, "teds", write("g.txt", ROW_2 + "\n"), write("p.txt", ROW_1 + "\n"),
                           "--format", "json")
        assert code == 0 and json.loads(out)["mean"] == pytest.approx(0.8, abs=1e-12)

    def test_mixed_forms(self, capsys, write):
        code, out, _ = run(capsys, "teds", write("g.txt", ROW_2 + "\n"), write("p.txt", "FFN\n"))
        assert code == 0 and out.startswith("1\t1.0000")

    def test_length_mismatch(self, capsys, write):
        code, _, err = run(capsys, "teds", write("g.txt", "FN\nFN\n"), write("p.txt", "FN\n"))
        assert code == 1 and "mismatch" in err


def _det(label, box, score=0.9):
    return {"label": label, "score": score, "bbox": list(box)}


class TestGrid:
    def test_grid_and_metrics(self, capsys, tmp_path, write):
        d = tmp_path / "dets"
        d.mkdir()
        (d / "a.json").write_text(json.dumps(
            [_det("table row", (0, y, 100, y + 20)) for y in (0, 20, 40)]
            + [_det("table row", (0, 0, 100, 18), 0.5), _det("table row", (0, 60, 100, 80), 0.1)]
            + [_det("table column", (x, 0, x + 25, 60)) for x in (0, 25, 50, 75)]))
        (d / "b.json").write_text(json.dumps([_det("table row", (0, 0, 10, 10)),
                                              _det("table column", (0, 0, 10, 10))]))
        code, out, _ = run(capsys, "grid", d)
        assert code == 0
        assert [json.loads(x) for x in out.splitlines()] == [{"id": "a", "rows": 3, "cols": 4},
                                                             {"id": "b", "rows": 1, "cols": 1}]

    def test_metrics_worked_example(self, capsys, write):
        pred = write("p.jsonl", '{"id": "x", "rows": 3, "cols": 4}\n{"id": "y", "rows": 5, "cols": 2}\n')
        gt = write("g.jsonl", '{"id": "x", "rows": 3, "cols": 5}\n{"id": "y", "rows": 5, "cols": 2}\n')
        code, out, _ = run(capsys, "gridmetrics", pred, gt, "--format", "json")
        m = json.loads(out)
        assert code == 0
        assert (m["exact_match_rows"], m["l1_rows"], m["exact_match_cols"], m["l1_cols"]) == (100.0, 0.0, 50.0, 0.5)
        assert m["exact_match_both"] == 50.0

    def test_metrics_missing_prediction(self, capsys, write):
        pred = write("p.jsonl", "")
        gt = write("g.jsonl", '{"id": "x", "rows": 3, "cols": 5}\n')
        assert run(capsys, "gridmetrics", pred, gt)[0] == 1

    def test_missing_detections(self, capsys, tmp_path):
        assert run(capsys, "grid", tmp_path / "none.jsonl")[0] == 2


class TestStats:
    def test_two_records(self, capsys, write):
        f = write("d.jsonl", '{"id": "a", "gt_otsl": "FLN"}\n{"id": "b", "gt_otsl": "FFN"}\n')
        code, out, _ = run(capsys, "stats", f, "--format", "json")
        cov = json.loads(out)["groups"]["all"]
        assert code == 0 and cov["coverage"]["avg_pct"]["F"] == 50.0
        assert (cov["simple"], cov["complex"]) == (1, 1)

    def test_per_language(self, capsys, tmp_path):
        p = tmp_path / "m.jsonl"
        write_records(make_records(30, seed=2), p)
        code, out, _ = run(capsys, "stats", p, "--group-by", "language")
        assert code == 0 and out.count("language=") >= 2

    def test_missing_field_warns(self, capsys, write):
        f = write("d.jsonl", '{"id": "a", "gt_otsl": "FN"}\n{"id": "b"}\n')
        code, _, err = run(capsys, "stats", f)
        assert code == 0 and json.loads(err.strip())["id"] == "b"


class TestEval:
    def oracle(self, tmp_path, n=10):
        records = make_records(n, seed=11)
        for r in records:
            r.pred_otsl = r.gt_otsl
        p = tmp_path / "oracle.jsonl"
        write_records(records, p)
        return p

    def test_oracle(self, capsys, tmp_path):
        code, out, _ = run(capsys, "eval", self.oracle(tmp_path), "--format", "json")
        assert code == 0 and json.loads(out)["groups"]["overall"]["overall"] == 100.0

    def test_text_table(self, capsys, tmp_path):
        _, out, _ = run(capsys, "eval", self.oracle(tmp_path))
        assert "100.00" in out

    def test_header_span_with_repairs(self, capsys, write, tmp_path):
        f = write("d.jsonl", json.dumps({"id": "f", "gt_otsl": HEADER_SPAN, "pred_otsl": HEADER_SPAN[:-1],
                                         "gt_grid": [5, 2]}) + "\n")
        log = tmp_path / "log.jsonl"
        code, out, _ = run(capsys, "eval", f, "--format", "json", "--log", log)
        assert code == 0 and json.loads(out)["groups"]["overall"]["overall"] == 100.0
        assert json.loads(log.read_text())["repairs"] == {"padded": 1, "forced-N": 1}

    def test_corrupted_record_completes(self, capsys, write):
        f = write("d.jsonl", json.dumps({"id": "ok", "gt_otsl": "FN", "pred_otsl": "FN", "gt_grid": [1, 1]})
                  + "\n" + json.dumps({"id": "bad", "gt_html": "<p>no table here</p>",
                                       "pred_otsl": "FN", "gt_grid": [1, 1]}) + "\n")
        code, out, _ = run(capsys, "eval", f, "--format", "json")
        report = json.loads(out)
        assert code == 0 and report["groups"]["overall"]["overall"] == 50.0

    def test_deterministic_bytes(self, capsys, tmp_path):
        p = tmp_path / "noisy.jsonl"
        write_records(make_records(15, seed=4, noise=0.2), p)
        first = run(capsys, "eval", p, "--format", "json", "--deterministic", "--verbose")
        second = run(capsys, "eval", p, "--format", "json", "--deterministic", "--verbose", "--jobs", 2)
        a, b = json.loads(first[1]), json.loads(second[1])
        a.pop("config"), b.pop("config")
        assert a == b
        assert first == run(capsys, "eval", p, "--format", "json", "--deterministic", "--verbose")

    def test_bad_jsonl(self, capsys, write):
        assert run(capsys, "eval", write("d.jsonl", "{oops\n"))[0] == 1

    def test_missing_dataset(self, capsys, tmp_path):
        assert run(capsys, "eval", tmp_path / "x.jsonl")[0] == 2


def test_module_entry_point(tmp_path):
    f = tmp_path / "a.txt"
    f.write_text("FN\n")
    done = subprocess.run([sys.executable, "-m", "otslkit", "otsl2html", str(f)], capture_output=True, text=True)
    assert done.returncode == 0 and done.stdout.startswith("<html><table>")
