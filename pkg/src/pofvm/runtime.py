"""Switch runtime: installed program, tables, pool, engines and port sinks."""

from __future__ import annotations

import enum
import logging
import re
from dataclasses import dataclass, field

from .compiler import DEFAULT_REGISTERS, CompiledStore, MicroExecutor
from .errors import RuntimeFault
from .interp import DEFAULT_COSTS, InterpCosts, Interpreter
from .isa import InstructionBlock, Program, Sizes, declared_schemas, validate_block, validate_program
from .machine import Frame, Verdict, VerdictKind
from .perf import CostReport
from .tables import FlowEntry, TableSchema, TableStore

log = logging.getLogger(__name__)


class Mode(enum.Enum):
    INTERP = "interp"
    COMPILE = "compile"


@dataclass(frozen=True)
class InjectionRecord:
    port: int
    packet: bytes
    expect: tuple[VerdictKind, int | None] | None = None
    line: int = 0

    @classmethod
    def parse(cls, line: str, lineno: int = 0) -> "InjectionRecord":
        """``in <port> <hex> [expect out <port>|drop|packetin]``"""
        toks = line.split()
        if len(toks) < 3 or toks[0] != "in":
            raise RuntimeFault("BAD_RECORD", f"line {lineno}: expected 'in <port> <hex> [expect ...]'")
        port = int(toks[1], 0)
        packet = parse_hex(toks[2])
        expect = None
        rest = toks[3:]
        if rest:
            if rest[0] != "expect" or len(rest) < 2:
                raise RuntimeFault("BAD_RECORD", f"line {lineno}: trailing tokens {rest}")
            word = rest[1]
            if word == "out":
                if len(rest) != 3:
                    raise RuntimeFault("BAD_RECORD", f"line {lineno}: 'expect out' needs a port")
                expect = (VerdictKind.OUTPUT, int(rest[2], 0))
            elif word == "drop":
                expect = (VerdictKind.DROP, None)
            elif word == "packetin":
                expect = (VerdictKind.PACKET_IN, int(rest[2], 0) if len(rest) > 2 else None)
            else:
                raise RuntimeFault("BAD_RECORD", f"line {lineno}: unknown expectation {word!r}")
        return cls(port, packet, expect, lineno)

    def check(self, verdict: Verdict) -> bool:
        if self.expect is None:
            return True
        kind, value = self.expect
        return verdict.kind is kind and (value is None or verdict.value == value)


def parse_hex(text: str) -> bytes:
    text = text.strip().replace(":", "").replace("_", "")
    if text.lower().startswith("0x"):
        text = text[2:]
    if len(text) % 2 or not re.fullmatch(r"[0-9a-fA-F]*", text):
        raise RuntimeFault("MALFORMED_HEX", f"{text[:32]!r} is not an even-length hex string")
    data = bytes.fromhex(text)
    if len(data) > 16384:
        raise RuntimeFault("MALFORMED_HEX", "packet longer than 16384 bytes")
    return data


def read_script(text: str) -> list[InjectionRecord]:
    records = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        records.append(InjectionRecord.parse(line, lineno))
    return records


def fresh_state(program: Program, tables: TableStore | None = None, pool: bytearray | None = None,
                sizes: Sizes = Sizes()):
    """Blocks dict, tables and pool with ``program`` installed (used by one-shot helpers)."""
    blocks = {b.block_id: b for b in program.blocks}
    if tables is None:
        tables = TableStore(lambda b: b in blocks)
        for s in program.schemas:
            tables.create(s)
        for table_id, entry in program.entries:
            tables.insert(table_id, entry)
    if pool is None:
        pool = bytearray(sizes.pool)
    return blocks, tables, pool


@dataclass
class ModeStats:
    packets: int = 0
    cost: CostReport = field(default_factory=CostReport)


class SwitchRuntime:
    """Owns all mutable datapath state. Mutations happen only between packets."""

    def __init__(self, sizes: Sizes = Sizes(), registers: int = DEFAULT_REGISTERS,
                 costs: InterpCosts = DEFAULT_COSTS, framework: CostReport = CostReport()) -> None:
        self.sizes = sizes
        self.registers = registers
        self.costs = costs
        self.framework = framework
        self.mode = Mode.INTERP
        self.trace_on = False
        self.trace: list[tuple] = []
        self.program: Program | None = None
        self.reset()

    # -- installation -------------------------------------------------

    def reset(self) -> None:
        self.blocks: dict[int, InstructionBlock] = {}
        self.tables = TableStore(lambda b: b in self.blocks)
        self.pool = bytearray(self.sizes.pool)
        self.store = CompiledStore(self.registers)
        self.start_block: int | None = None
        self.ports: dict[int, list[bytes]] = {}
        self.samples: list[tuple[int, bytes]] = []
        self.mode_stats = {m: ModeStats() for m in Mode}
        self.trace.clear()
        self._schemas: dict[int, TableSchema] = {}

    def load(self, program: Program) -> None:
        diags = validate_program(program, self.sizes)
        if diags:
            raise RuntimeFault("INVALID_PROGRAM", "; ".join(str(d) for d in diags))
        self.reset()
        self.program = program
        self._schemas = declared_schemas(program)
        for b in program.blocks:
            self.blocks[b.block_id] = b
        for b in program.blocks:
            self.store.install(b, self._schemas)
        for s in program.schemas:
            self.tables.create(s)
        for table_id, entry in program.entries:
            self.tables.insert(table_id, entry)
        self.start_block = program.start_block

    def set_mode(self, mode: Mode | str) -> None:
        self.mode = Mode(mode)

    # -- control channel ----------------------------------------------

    def _schemas_now(self) -> dict[int, TableSchema]:
        out = dict(self._schemas)
        out.update({t.schema.table_id: t.schema for t in self.tables})
        return out

    def add_block(self, block: InstructionBlock) -> None:
        if block.block_id in self.blocks:
            raise RuntimeFault("DUPLICATE_BLOCK", f"block {block.block_id} installed; blocks are immutable")
        known = set(self.blocks) | {block.block_id}
        diags = validate_block(block, self.sizes, self._schemas_now(), known)
        if diags:
            raise RuntimeFault("INVALID_BLOCK", "; ".join(str(d) for d in diags))
        self.store.install(block, self._schemas_now())
        self.blocks[block.block_id] = block

    def del_block(self, block_id: int) -> None:
        if block_id not in self.blocks:
            raise RuntimeFault("UNKNOWN_BLOCK", f"block {block_id} not installed")
        if block_id in self.tables.referenced_blocks() or block_id == self.start_block:
            raise RuntimeFault("REFERENCED_BLOCK", f"block {block_id} is still referenced")
        del self.blocks[block_id]
        self.store.retire(block_id)

    def swap_block(self, old_id: int, new_block: InstructionBlock) -> None:
        """Install ``new_block``, repoint every entry from ``old_id`` to it, retire the old block."""
        self.add_block(new_block)
        for table in self.tables:
            for e in list(table.entries()):
                if e.block_id == old_id:
                    table.modify(e.key_value, e.key_mask, e.priority, new_block.block_id, e.params)
        if self.start_block == old_id:
            self.start_block = new_block.block_id
        self.del_block(old_id)

    def add_table(self, schema: TableSchema) -> None:
        self.tables.create(schema)

    def del_table(self, table_id: int) -> None:
        self.tables.drop(table_id)

    def add_entry(self, table_id: int, entry: FlowEntry) -> None:
        self.tables.insert(table_id, entry)

    def del_entry(self, table_id: int, value: int, mask: int, priority: int | None = None) -> None:
        self.tables.delete(table_id, value, mask, priority)

    def mod_entry(self, table_id: int, value: int, mask: int, priority: int | None, block_id: int,
                  params: bytes) -> None:
        self.tables.modify(table_id, value, mask, priority, block_id, params)

    # -- datapath -----------------------------------------------------

    def _trace_sink(self, block_id: int, index: int, kind: str, delta: CostReport) -> None:
        self.trace.append((block_id, index, kind, delta.i, delta.s))

    def inject(self, record: InjectionRecord | tuple[int, bytes]) -> Verdict:
        if self.start_block is None:
            raise RuntimeFault("NO_PROGRAM", "load a program first")
        if not isinstance(record, InjectionRecord):
            record = InjectionRecord(record[0], record[1])
        frame = Frame(record.packet, record.port, self.pool, self.tables, self.sizes)
        if self.mode is Mode.INTERP:
            engine = Interpreter(self.blocks, self.costs, self._trace_sink if self.trace_on else None)
            verdict = engine.run(frame, self.start_block)
        else:
            verdict = MicroExecutor(self.store).run(frame, self.start_block)
            if self.trace_on:
                self.trace.append(("micro", verdict.cost.i, verdict.cost.s))
        verdict.cost = verdict.cost + self.framework
        st = self.mode_stats[self.mode]
        st.packets += 1
        st.cost = st.cost + verdict.cost
        if verdict.kind is VerdictKind.OUTPUT:
            self.ports.setdefault(verdict.value, []).append(verdict.packet)
        elif verdict.kind is VerdictKind.PACKET_IN:
            self.samples.append((verdict.value, verdict.packet))
        if verdict.error:
            log.debug("packet dropped: %s", verdict.error)
        return verdict

    def run_script(self, records: list[InjectionRecord]) -> list[tuple[InjectionRecord, Verdict, bool]]:
        return [(r, v, r.check(v)) for r in records for v in [self.inject(r)]]

    # -- inspection ---------------------------------------------------

    def stats(self, pool_offset: int = 0, pool_length: int = 64) -> dict:
        return {
            "tables": {
                t.schema.table_id: {"hits": t.hits, "misses": t.misses, "entries": len(t)} for t in self.tables
            },
            "pool": {"offset": pool_offset, "bytes": self.pool[pool_offset:pool_offset + pool_length].hex()},
            "modes": {m.value: {"packets": s.packets, "i": s.cost.i, "s": s.cost.s}
                      for m, s in self.mode_stats.items()},
            "ports": {p: len(v) for p, v in sorted(self.ports.items())},
            "packet_in": len(self.samples),
        }

    def snapshot(self) -> tuple:
        """Table contents and pool bytes, for cross-engine comparison."""
        return self.tables.snapshot(), bytes(self.pool)

