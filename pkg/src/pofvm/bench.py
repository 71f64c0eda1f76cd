"""Benchmarks: the Goto_Table sweep and the IPv4 application comparison.

Rows are plain dicts so they serialize to CSV and JSON unchanged. Figures
are rendered with the Agg backend and written next to the data files.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

from .apps import GOLDEN_PACKET, GOLDEN_PORT, L3_FRAMEWORK, load_app
from .compiler import static_cost, worst_path
from .isa import Drop, FieldRef, GotoTable, InstructionBlock, Program, Space
from .machine import VerdictKind
from .perf import REFERENCE_ROWS, ChipModel, CostReport, default_chip, project
from .runtime import Mode, SwitchRuntime
from .tables import FlowEntry, MatchType, TableSchema

COLUMNS = ("mode", "case", "i", "s", "mpps", "latency_cycles", "ref_i", "ref_s", "ref_mpps",
           "ref_latency")


def goto_program(n: int) -> Program:
    """One GOTO_TABLE over ``n`` byte fields, hitting an entry whose block drops."""
    keys = tuple(FieldRef(Space.PACKET, 8 * k, 8) for k in range(n))
    schema = TableSchema(1, MatchType.EXACT, 8 * n)
    value = int.from_bytes(bytes(range(1, n + 1)), "big")
    return Program(
        (schema,),
        (InstructionBlock(1, (GotoTable(1, keys),)), InstructionBlock(2, (Drop(),))),
        ((1, FlowEntry(value, schema.full_mask, 2)),),
        1,
    )


def _measure(program: Program, packet: bytes, mode: Mode, start: int | None = None) -> CostReport:
    rt = SwitchRuntime()
    rt.load(program)
    if start is not None:
        rt.start_block = start
    rt.set_mode(mode)
    return rt.inject((0, packet)).cost


def _row(mode: str, case, cost: CostReport, chip: ChipModel, ref: tuple | None = None) -> dict:
    mpps, lat = project(cost, chip)
    row = {"mode": mode, "case": case, "i": cost.i, "s": cost.s, "mpps": round(mpps, 2),
           "latency_cycles": round(lat, 1)}
    keys = ("ref_i", "ref_s", "ref_mpps", "ref_latency")
    row.update(dict(zip(keys, ref)) if ref else dict.fromkeys(keys, ""))
    return row


def goto_sweep(ns=range(1, 9), chip: ChipModel | None = None) -> list[dict]:
    """Measured cost of one Goto_Table with ``n`` key fields, per mode.

    The block reached on a hit is measured on its own and subtracted, so a
    row is the cost of the table instruction alone.
    """
    chip = chip or default_chip()
    rows = []
    packet = bytes(range(1, 65))
    for mode in Mode:
        for n in ns:
            prog = goto_program(n)
            total = _measure(prog, packet, mode)
            tail = _measure(prog, packet, mode, start=2)
            cost = CostReport(total.i - tail.i, total.s - tail.s)
            ref = (37 + 33 * n, 7 + 3 * n) if mode is Mode.INTERP else (13 + n, 1)
            rows.append(_row(mode.value, n, cost, chip, ref + ("", "")))
    return rows


def app_rows(program: Program | None = None, packet: bytes = GOLDEN_PACKET, port: int = GOLDEN_PORT,
             framework: CostReport = L3_FRAMEWORK, chip: ChipModel | None = None) -> list[dict]:
    """Non-SDN reference plus measured interpreter and compiler rows for one app."""
    program = program or load_app()
    chip = chip or default_chip()
    rows = [_row("non-sdn", "reference", CostReport(*REFERENCE_ROWS["non-sdn"][:2]), chip, REFERENCE_ROWS["non-sdn"])]
    for mode in Mode:
        rt = SwitchRuntime(framework=framework)
        rt.load(program)
        rt.set_mode(mode)
        v = rt.inject((port, packet))
        if v.kind is not VerdictKind.OUTPUT:
            raise RuntimeError(f"benchmark packet was not forwarded in {mode.value} mode: {v}")
        rows.append(_row(mode.value, "golden", v.cost, chip, REFERENCE_ROWS[mode.value]))
    worst = worst_path(static_cost(program, framework=framework))
    rows.append(_row("interp", "worst-path", worst.interp, chip, REFERENCE_ROWS["interp"]))
    rows.append(_row("compile", "worst-path", worst.compiled, chip, REFERENCE_ROWS["compile"]))
    return rows


def to_csv(rows: list[dict]) -> str:
    out = io.StringIO()
    w = csv.DictWriter(out, fieldnames=COLUMNS, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return out.getvalue()


def to_json(rows: list[dict], **extra) -> str:
    return json.dumps({**extra, "rows": rows}, indent=2)


def to_text(rows: list[dict]) -> str:
    widths = {c: max(len(c), *(len(str(r[c])) for r in rows)) for c in COLUMNS}
    lines = ["  ".join(c.ljust(widths[c]) for c in COLUMNS)]
    lines += ["  ".join(str(r[c]).ljust(widths[c]) for c in COLUMNS) for r in rows]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# figures


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams.update({"figure.dpi": 120, "axes.spines.top": False, "axes.spines.right": False,
                         "font.size": 9})
    return plt


def plot_goto_sweep(rows: list[dict], path: Path) -> Path:
    plt = _pyplot()
    fig, (ax_i, ax_s) = plt.subplots(1, 2, figsize=(8, 3.2))
    for mode, marker in (("interp", "o"), ("compile", "s")):
        sub = [r for r in rows if r["mode"] == mode]
        ns = [r["case"] for r in sub]
        ax_i.plot(ns, [r["i"] for r in sub], marker=marker, label=f"{mode} (measured)")
        ax_i.plot(ns, [r["ref_i"] for r in sub], ls=":", color="grey")
        ax_s.plot(ns, [r["s"] for r in sub], marker=marker, label=mode)
        ax_s.plot(ns, [r["ref_s"] for r in sub], ls=":", color="grey")
    ax_i.set(xlabel="key fields n", ylabel="micro-instructions", title="Goto_Table instruction count")
    ax_s.set(xlabel="key fields n", ylabel="thread switches", title="Goto_Table thread switches")
    ax_i.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_app(rows: list[dict], path: Path) -> Path:
    plt = _pyplot()
    sel = [r for r in rows if r["case"] in ("reference", "golden")]
    labels = [r["mode"] for r in sel]
    xs = range(len(sel))
    fig, (ax_r, ax_l) = plt.subplots(1, 2, figsize=(8, 3.2))
    w = 0.38
    ax_r.bar([x - w / 2 for x in xs], [r["mpps"] for r in sel], w, label="model")
    ax_r.bar([x + w / 2 for x in xs], [r["ref_mpps"] for r in sel], w, label="measured", color="grey")
    ax_l.bar([x - w / 2 for x in xs], [r["latency_cycles"] for r in sel], w, label="model")
    ax_l.bar([x + w / 2 for x in xs], [r["ref_latency"] for r in sel], w, label="measured", color="grey")
    for ax, title in ((ax_r, "throughput (Mpps)"), (ax_l, "latency (cycles)")):
        ax.set_xticks(list(xs), labels)
        ax.set_title(title)
    ax_r.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def write_report(kind: str, rows: list[dict], out_dir: Path) -> list[Path]:
    """CSV, JSON and a PNG figure for ``kind`` ('goto-sweep' or 'app') under ``out_dir``."""
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = kind.replace("-", "_")
    csv_path = out_dir / f"{stem}.csv"
    csv_path.write_text(to_csv(rows))
    json_path = out_dir / f"{stem}.json"
    json_path.write_text(to_json(rows, report=kind))
    plot = plot_goto_sweep if kind == "goto-sweep" else plot_app
    return [csv_path, json_path, plot(rows, out_dir / f"{stem}.png")]
