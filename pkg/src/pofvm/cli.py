"""Operator command line.

Every verb runs against a :class:`SwitchRuntime`. Runtime state survives
between invocations through a session journal (``--session FILE``): each
successful state-changing command is appended, and the journal is replayed
on the next run. Replays are deterministic, so this reproduces the exact
tables, pool and counters. ``pofvm script FILE`` runs many verbs in one
process instead.

Exit status: 0 on success, 1 when an injected packet misses its ``expect``,
2 on usage or program errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import shlex
import sys
from pathlib import Path

from . import bench
from .apps import L3_FRAMEWORK, app_source, load_app
from .asm import assemble, disassemble, parse_block, parse_schema
from .codec import decode, encode
from .errors import PofError
from .isa import Program
from .perf import CostReport, fit_chip
from .runtime import SwitchRuntime, parse_hex, read_script
from .tables import FlowEntry

log = logging.getLogger("pofvm")

BUILTIN_PREFIX = "@"  # ``@l3_ipv4`` names a bundled app
STATEFUL = {"load", "mode", "add-entry", "del-entry", "mod-entry", "add-block", "del-block", "add-table",
            "del-table", "inject", "trace"}


class CliError(Exception):
    pass


def read_program(path: str) -> Program:
    if path.startswith(BUILTIN_PREFIX):
        name = path[1:] if path.endswith(".pof") else path[1:] + ".pof"
        return assemble(app_source(name), name)
    p = Path(path)
    data = p.read_bytes()
    if p.suffix == ".pofb" or data[:4] == b"POFB":
        return decode(data)
    return assemble(data.decode(), str(p))


def _int(text: str) -> int:
    return int(text, 0)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pofvm", description=__doc__.split("\n\n")[0])
    ap.add_argument("--session", help="journal file that carries runtime state between invocations")
    ap.add_argument("--framework", choices=("l3", "none"), default="l3",
                    help="per-packet receive/transmit cost added in both modes (default: l3)")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("load", help="validate and install a .pof/.pofb program (or @l3_ipv4)")
    p.add_argument("program")
    p = sub.add_parser("mode", help="select the execution engine")
    p.add_argument("mode", choices=("interp", "compile"))
    p = sub.add_parser("add-entry", help="insert a flow entry")
    p.add_argument("table", type=_int)
    p.add_argument("value", type=_int)
    p.add_argument("mask", type=_int)
    p.add_argument("block", type=_int)
    p.add_argument("--prio", type=_int, default=0)
    p.add_argument("--params", default="", help="hex bytes")
    p = sub.add_parser("mod-entry", help="repoint an entry at another block/params")
    p.add_argument("table", type=_int)
    p.add_argument("value", type=_int)
    p.add_argument("mask", type=_int)
    p.add_argument("block", type=_int)
    p.add_argument("--prio", type=_int)
    p.add_argument("--params", default="")
    p = sub.add_parser("del-entry", help="remove a flow entry")
    p.add_argument("table", type=_int)
    p.add_argument("value", type=_int)
    p.add_argument("mask", type=_int)
    p.add_argument("--prio", type=_int)
    p = sub.add_parser("add-block", help="install a block from a file holding one 'block N { ... }'")
    p.add_argument("file")
    p = sub.add_parser("del-block")
    p.add_argument("block", type=_int)
    p = sub.add_parser("add-table", help="e.g. add-table 7 EXACT key 16 miss drop")
    p.add_argument("schema", nargs="+")
    p = sub.add_parser("del-table")
    p.add_argument("table", type=_int)
    p = sub.add_parser("inject", help="run an injection script ('in <port> <hex> [expect ...]' per line)")
    p.add_argument("script")
    p.add_argument("--ports", help="directory for egress/packet-in hex sinks")
    p = sub.add_parser("stats", help="table counters, pool window, per-mode cost")
    p.add_argument("--json", action="store_true")
    p.add_argument("--pool-offset", type=_int, default=0)
    p.add_argument("--pool-length", type=_int, default=64)
    p = sub.add_parser("trace", help="per-instruction cost trace for later injections")
    p.add_argument("state", choices=("on", "off"))
    p = sub.add_parser("bench", help="cost reports: Goto_Table sweep or IPv4 app comparison")
    p.add_argument("kind", choices=("goto-sweep", "app"))
    p.add_argument("--csv", action="store_true", help="comma-separated rows on stdout")
    p.add_argument("--json", action="store_true", help="structured rows on stdout")
    p.add_argument("--out", help="write CSV, JSON and a PNG figure into this directory")
    p.add_argument("--program", help="app to benchmark (default @l3_ipv4)")
    p = sub.add_parser("fit-chip", help="fit cf and p from a CSV with columns i,s,mpps,latency")
    p.add_argument("csv")
    p.add_argument("--affine", action="store_true", help="also fit a fixed latency overhead")
    p = sub.add_parser("build", help="assemble .pof into a .pofb image")
    p.add_argument("source")
    p.add_argument("output")
    p = sub.add_parser("disasm", help="print a program as assembly text")
    p.add_argument("program")
    p = sub.add_parser("dump", help="print the compiled micro-ops of an installed block")
    p.add_argument("block", type=_int)
    p = sub.add_parser("script", help="run verbs from a file, one per line, in a single runtime")
    p.add_argument("file")
    return ap


class Session:
    """One runtime plus the verb implementations. ``out`` receives user-facing text."""

    def __init__(self, framework: CostReport = L3_FRAMEWORK, out=None) -> None:
        self.rt = SwitchRuntime(framework=framework)
        self.out = out
        self.quiet = False
        self.failed_expects = 0

    def say(self, text: str) -> None:
        if not self.quiet:
            print(text, file=self.out or sys.stdout)

    def run(self, args: argparse.Namespace) -> int:
        handler = getattr(self, "do_" + args.verb.replace("-", "_"))
        return handler(args) or 0

    def do_load(self, a) -> None:
        prog = read_program(a.program)
        self.rt.load(prog)
        self.say(f"loaded {a.program}: {len(prog.schemas)} tables, {len(prog.blocks)} blocks, "
                 f"{len(prog.entries)} entries, start {prog.start_block}")

    def do_mode(self, a) -> None:
        self.rt.set_mode(a.mode)
        self.say(f"mode {a.mode}")

    def do_add_entry(self, a) -> None:
        self.rt.add_entry(a.table, FlowEntry(a.value, a.mask, a.block, a.prio, parse_hex(a.params)))

    def do_mod_entry(self, a) -> None:
        self.rt.mod_entry(a.table, a.value, a.mask, a.prio, a.block, parse_hex(a.params))

    def do_del_entry(self, a) -> None:
        self.rt.del_entry(a.table, a.value, a.mask, a.prio)

    def do_add_block(self, a) -> None:
        self.rt.add_block(parse_block(Path(a.file).read_text(), a.file))

    def do_del_block(self, a) -> None:
        self.rt.del_block(a.block)

    def do_add_table(self, a) -> None:
        self.rt.add_table(parse_schema(" ".join(a.schema)))

    def do_del_table(self, a) -> None:
        self.rt.del_table(a.table)

    def do_trace(self, a) -> None:
        self.rt.trace_on = a.state == "on"

    def do_inject(self, a) -> int:
        records = read_script(Path(a.script).read_text())
        sinks = Path(a.ports) if getattr(a, "ports", None) and not self.quiet else None
        if sinks:
            sinks.mkdir(parents=True, exist_ok=True)
        failed = 0
        for rec in records:
            self.rt.trace.clear()
            v = self.rt.inject(rec)
            ok = rec.check(v)
            failed += not ok
            mark = "" if rec.expect is None else ("  ok" if ok else "  EXPECT FAILED")
            self.say(f"line {rec.line}: port {rec.port} -> {v}  i={v.cost.i} s={v.cost.s}{mark}")
            for note in v.notes:
                self.say(f"    note: {note}")
            for t in self.rt.trace:
                self.say("    trace " + " ".join(map(str, t)))
            if sinks and v.kind.value == "out":
                with open(sinks / f"port_{v.value}.hex", "a") as fh:
                    fh.write(v.packet.hex() + "\n")
            elif sinks and v.kind.value == "packetin":
                with open(sinks / "packet_in.hex", "a") as fh:
                    fh.write(f"{v.value} {v.packet.hex()}\n")
        self.failed_expects += failed
        if failed:
            self.say(f"{failed} of {len(records)} expectations failed")
            return 1
        return 0

    def do_stats(self, a) -> None:
        st = self.rt.stats(a.pool_offset, a.pool_length)
        if a.json:
            self.say(json.dumps(st, indent=2, sort_keys=True))
            return
        self.say("table  hits  misses  entries")
        for tid, t in sorted(st["tables"].items()):
            self.say(f"{tid:<6} {t['hits']:<5} {t['misses']:<7} {t['entries']}")
        for mode, m in st["modes"].items():
            self.say(f"mode {mode}: packets={m['packets']} i={m['i']} s={m['s']}")
        self.say(f"pool[{st['pool']['offset']}:]: {st['pool']['bytes']}")
        self.say(f"ports: {st['ports']}  packet-in: {st['packet_in']}")

    def do_bench(self, a) -> None:
        if a.kind == "goto-sweep":
            rows = bench.goto_sweep()
        else:
            prog = read_program(a.program) if a.program else load_app()
            rows = bench.app_rows(prog, framework=self.rt.framework)
        if a.out:
            for path in bench.write_report(a.kind, rows, Path(a.out)):
                log.info("wrote %s", path)
        if a.csv:
            self.say(bench.to_csv(rows).rstrip("\n"))
        elif a.json:
            self.say(bench.to_json(rows, report=a.kind))
        else:
            self.say(bench.to_text(rows).rstrip("\n"))

    def do_fit_chip(self, a) -> None:
        with open(a.csv, newline="") as fh:
            rows = [(float(r["i"]), float(r["s"]), float(r["mpps"]), float(r["latency"]))
                    for r in csv.DictReader(fh)]
        chip = fit_chip(rows, affine=a.affine)
        self.say(f"cf={chip.cf:.6g} cycles/s  p={chip.p:.3f} cycles/switch"
                 + (f"  overhead={chip.overhead:.1f} cycles" if a.affine else ""))

    def do_build(self, a) -> None:
        data = encode(read_program(a.source))
        Path(a.output).write_bytes(data)
        self.say(f"wrote {a.output} ({len(data)} bytes)")

    def do_disasm(self, a) -> None:
        self.say(disassemble(read_program(a.program)).rstrip("\n"))

    def do_dump(self, a) -> None:
        if a.block not in self.rt.store:
            raise CliError(f"block {a.block} is not installed")
        self.say(self.rt.store[a.block].dump().rstrip("\n"))

    def do_script(self, a) -> int:
        status = 0
        parser = build_parser()
        for lineno, raw in enumerate(Path(a.file).read_text().splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            try:
                sub = parser.parse_args(shlex.split(line))
            except SystemExit:
                raise CliError(f"{a.file}:{lineno}: bad command {line!r}") from None
            if sub.verb == "script":
                raise CliError(f"{a.file}:{lineno}: scripts do not nest")
            self.say(f"> {line}")
            status = max(status, self.run(sub))
        return status


def _journal(path: Path) -> list[str]:
    return [ln for ln in path.read_text().splitlines() if ln.strip()] if path.exists() else []


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    framework = L3_FRAMEWORK if args.framework == "l3" else CostReport()
    session = Session(framework)
    journal = Path(args.session) if args.session else None
    try:
        if journal is not None:
            session.quiet = True
            for line in _journal(journal):
                session.run(parser.parse_args(shlex.split(line)))
            session.quiet = False
        status = session.run(args)
        if journal is not None and args.verb in STATEFUL:
            verb_at = argv.index(args.verb)
            with journal.open("a") as fh:
                fh.write(shlex.join(argv[verb_at:]) + "\n")
        return status
    except (PofError, CliError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
