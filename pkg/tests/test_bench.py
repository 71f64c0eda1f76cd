import json
import time

from pofvm.bench import COLUMNS, app_rows, goto_sweep, to_csv, to_json, to_text, write_report


def test_goto_sweep_exact_and_fast():
    t0 = time.perf_counter()
    rows = goto_sweep()
    assert time.perf_counter() - t0 < 1.0
    assert len(rows) == 16
    for r in rows:
        assert (r["i"], r["s"]) == (r["ref_i"], r["ref_s"]), r


def test_app_rows_shape():
    rows = app_rows()
    assert [(r["mode"], r["case"]) for r in rows] == [
        ("non-sdn", "reference"), ("interp", "golden"), ("compile", "golden"),
        ("interp", "worst-path"), ("compile", "worst-path")]
    golden = {r["mode"]: r for r in rows if r["case"] == "golden"}
    assert (golden["interp"]["i"], golden["interp"]["s"]) == (1089, 146)
    assert (golden["compile"]["i"], golden["compile"]["s"]) == (551, 100)


def test_serializers():
    rows = goto_sweep(ns=[1])
    csv_text = to_csv(rows)
    assert csv_text.splitlines()[0] == ",".join(COLUMNS)
    assert json.loads(to_json(rows, report="x"))["rows"][0]["i"] == 70
    assert to_text(rows).splitlines()[0].split() == list(COLUMNS)


def test_write_report(tmp_path):
    paths = write_report("app", app_rows(), tmp_path)
    assert [p.suffix for p in paths] == [".csv", ".json", ".png"]
    assert all(p.stat().st_size > 0 for p in paths)
    assert paths[2].read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
