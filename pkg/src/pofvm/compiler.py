"""Compiler mode: lower instruction blocks to register micro-programs.

Offsets and lengths are resolved at compile time, key construction is
unrolled into one KEYPUT per field, and entry parameters stay in the
PARAMETER space (loaded with LD, never inlined). Every micro-op costs one
instruction; LOOKUP, pool ops and CKSUM also hang the thread once, and
ENTRYOP/TBLOP twice.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping

from . import bits
from .errors import BitError, CompileError, PofError, TableError
from .isa import (
    HIT_FLAG, AddField, Branch, Calc, CalcOp, Checksum, Cmp, DelField, Drop, EntryMod, FieldRef, GotoTable, Imm, IncPool,
    Instruction, InstructionBlock, Jump, Output, PacketIn, ReadPool, SearchTable, SetField, Sizes, Space, TableMod,
    WritePool, declared_schemas,
)
from .interp import DEFAULT_COSTS, InterpCosts, interp_cost, params_slice
from .machine import HOP_LIMIT, MISS_REASON, Fault, Frame, Verdict, VerdictKind, alu, compare
from .perf import CostReport
from .tables import MissKind, MissPolicy, TableSchema

DEFAULT_REGISTERS = 32
RESERVED = 10

HANGS = {"LOOKUP": 1, "POOLLD": 1, "POOLST": 1, "POOLINC": 1, "CKSUM": 1, "ENTRYOP": 2, "TBLOP": 2}
TERMINAL_OPS = {"EMIT", "DROPM", "PKIN"}

DISPATCH = "DISPATCH"
TRAP_KEY = "TRAP_KEY"
TRAP_HOP = "TRAP_HOP"


class Reg(int):
    """Register operand; plain ints in operand slots are immediates."""

    def __repr__(self) -> str:
        return f"r{int(self)}"


@dataclass(frozen=True)
class RegFile:
    """Register layout: general registers low, lookup machinery in the top ten."""

    size: int = DEFAULT_REGISTERS

    def __post_init__(self) -> None:
        if self.size < RESERVED + 1:
            raise CompileError("REGISTER_PRESSURE", f"{self.size} registers leave none for temporaries")

    @property
    def general(self) -> int:
        return self.size - RESERVED

    def _top(self, k: int) -> Reg:
        return Reg(self.size - 1 - k)

    tid = property(lambda self: self._top(0))  # table select
    kw = property(lambda self: self._top(1))  # expected key width
    kcur = property(lambda self: self._top(2))  # key bits assembled so far
    hit = property(lambda self: self._top(3))  # lookup hit status
    blk = property(lambda self: self._top(4))  # hit entry's block id
    res = property(lambda self: self._top(5))  # received result
    disp = property(lambda self: self._top(6))  # dispatch block id
    hops = property(lambda self: self._top(7))  # table hops this packet
    pbind = property(lambda self: self._top(8))  # bind staged params on dispatch


@dataclass(frozen=True)
class MicroOp:
    kind: str
    args: tuple = ()
    src: int = -1  # originating instruction index
    note: str = ""

    @property
    def hangs(self) -> int:
        return HANGS.get(self.kind, 0)

    def render(self) -> str:
        return f"{self.kind:<10}{', '.join(_fmt(a) for a in self.args)}"


def _fmt(a) -> str:
    if isinstance(a, Reg):
        return repr(a)
    if isinstance(a, bool) or a is None:
        return str(a)
    if isinstance(a, int):
        return f"#{a}"
    if isinstance(a, (Space, Cmp, CalcOp)):
        return a.value
    if isinstance(a, tuple):
        return ":".join(str(x) for x in a)
    if isinstance(a, (FieldRef, str)):
        return str(a)
    return type(a).__name__


@dataclass(frozen=True)
class MicroProgram:
    block_id: int
    ops: tuple[MicroOp, ...]
    registers: int = DEFAULT_REGISTERS
    entry_points: tuple[int, ...] = ()  # first op of each source instruction

    def dump(self) -> str:
        """One op per line with its cost annotation."""
        lines = [f"; block {self.block_id} ({len(self.ops)} ops, {self.registers} regs)"]
        for k, op in enumerate(self.ops):
            cost = f"i=1 s={op.hangs}"
            note = f" {op.note}" if op.note else ""
            lines.append(f"{k:4d}  {op.render():<44}; {cost} [#{op.src}{note}]")
        return "\n".join(lines)


class _Lowerer:
    def __init__(self, block: InstructionBlock, schemas: Mapping[int, TableSchema], regs: RegFile) -> None:
        self.block = block
        self.schemas = schemas
        self.regs = regs
        self.ops: list[MicroOp] = []
        self.src = 0
        self.temps = 0

    def emit(self, kind: str, *args, note: str = "") -> None:
        self.ops.append(MicroOp(kind, tuple(args), self.src, note))

    def temp(self) -> Reg:
        if self.temps >= self.regs.general:
            raise CompileError("REGISTER_PRESSURE",
                               f"block {self.block.block_id} #{self.src} needs more than "
                               f"{self.regs.general} temporaries")
        r = Reg(self.temps)
        self.temps += 1
        return r

    def load(self, f: FieldRef) -> Reg:
        r = self.temp()
        first = f.offset // 8
        last = (f.end + 7) // 8
        if last - first > 8:
            raise CompileError("FIELD_SPAN", f"{f} straddles more than 8 bytes")
        self.emit("LD", r, f.space, first, last - first)
        if f.offset % 8 or f.end % 8:
            self.emit("SHIFTMASK", r, last * 8 - f.end, (1 << f.length) - 1)
        return r

    def value(self, op) -> Reg | int:
        """Register holding a field operand, or the immediate itself."""
        return self.load(op) if isinstance(op, FieldRef) else op.value

    def into_reg(self, op) -> Reg:
        if isinstance(op, FieldRef):
            return self.load(op)
        r = self.temp()
        self.emit("MOV", r, op.value)
        return r

    def lower(self) -> MicroProgram:
        entry_points = []
        fixups: list[tuple[int, int]] = []
        for self.src, ins in enumerate(self.block.instructions):
            entry_points.append(len(self.ops))
            self.temps = 0
            self.instruction(ins, fixups)
        ops = self.ops
        for pos, target_index in fixups:
            op = ops[pos]
            dest = entry_points[target_index] if 0 <= target_index < len(entry_points) else len(ops)
            ops[pos] = MicroOp(op.kind, op.args[:-1] + (dest,), op.src, op.note)
        return MicroProgram(self.block.block_id, tuple(ops), self.regs.size, tuple(entry_points))

    def table_prologue(self, ins) -> None:
        rf = self.regs
        schema = self.schemas.get(ins.table_id)
        width = schema.key_width_bits if schema else sum(f.length for f in ins.key_fields)
        self.emit("MOV", rf.tid, ins.table_id, note="table select")
        self.emit("MOV", rf.kw, width, note="key width")
        self.emit("MOV", rf.kcur, 0, note="key buffer reset")
        self.emit("MOV", rf.hit, 0, note="result clear")
        for slot, f in enumerate(ins.key_fields):
            self.emit("KEYPUT", slot, f.space, f.offset, f.length)
        self.emit("BR", Cmp.NE, rf.kcur, rf.kw, TRAP_KEY, note="key length check")

    def instruction(self, ins: Instruction, fixups: list) -> None:  # noqa: C901 - flat dispatch
        rf = self.regs
        if isinstance(ins, SetField):
            r = self.into_reg(ins.src)
            self.emit("ST", ins.dst.space, ins.dst.offset, ins.dst.length, r)
        elif isinstance(ins, Calc):
            a = self.value(ins.a)
            b = self.value(ins.b)
            r = a if isinstance(a, Reg) else b if isinstance(b, Reg) else self.temp()
            self.emit("ALU", ins.op, r, a, b)
            self.emit("ST", ins.dst.space, ins.dst.offset, ins.dst.length, r)
        elif isinstance(ins, AddField):
            r = self.into_reg(ins.src)
            self.emit("PINS", ins.offset, ins.length, r)
        elif isinstance(ins, DelField):
            self.emit("PDEL", ins.offset, ins.length)
        elif isinstance(ins, ReadPool):
            r = self.temp()
            self.emit("POOLLD", ins.pool_offset, ins.length, r)
            self.emit("ST", ins.dst.space, ins.dst.offset, ins.dst.length, r)
        elif isinstance(ins, WritePool):
            self.emit("POOLST", ins.pool_offset, ins.length, self.value(ins.src))
        elif isinstance(ins, IncPool):
            self.emit("POOLINC", ins.pool_offset, ins.length, ins.delta)
        elif isinstance(ins, Checksum):
            r = self.temp()
            self.emit("CKSUM", r, ins.region_offset, ins.region_length, ins.dst)
            self.emit("ST", ins.dst.space, ins.dst.offset, ins.dst.length, r)
        elif isinstance(ins, GotoTable):
            self.table_prologue(ins)
            self.emit("LOOKUP", rf.tid, None, note="lookup issue")
            self.emit("MOV", rf.res, rf.hit, note="result receive")
            self.emit("BR", Cmp.EQ, rf.res, 0, ("MISS", ins.table_id), note="miss test")
            self.emit("MOV", rf.disp, rf.blk, note="block id latch")
            self.emit("MOV", rf.pbind, 1, note="params bind")
            self.emit("ALU", _ADD, rf.hops, rf.hops, 1, note="hop count")
            self.emit("BR", Cmp.GT, rf.hops, HOP_LIMIT, TRAP_HOP, note="hop limit")
            self.emit("JMP", DISPATCH, note="dispatch")
        elif isinstance(ins, SearchTable):
            self.table_prologue(ins)
            self.emit("LOOKUP", rf.tid, ins.dst, note="lookup issue, params deposit")
            self.emit("MOV", rf.res, rf.hit, note="result receive")
            self.emit("ST", HIT_FLAG.space, HIT_FLAG.offset, HIT_FLAG.length, rf.res, note="hit flag")
            self.emit("MOV", rf.kcur, 0, note="key buffer release")
            self.emit("MOV", rf.kw, 0, note="key width release")
            self.emit("MOV", rf.tid, 0, note="table release")
            self.emit("MOV", rf.hit, 0, note="result clear")
            self.emit("MOV", rf.res, 0, note="result clear")
        elif isinstance(ins, Output):
            self.emit("EMIT", self.value(ins.port))
        elif isinstance(ins, Drop):
            self.emit("DROPM")
        elif isinstance(ins, PacketIn):
            self.emit("PKIN", ins.reason)
        elif isinstance(ins, Branch):
            a = self.value(ins.a)
            b = self.value(ins.b)
            self.emit("BR", ins.cmp, a, b, None)
            fixups.append((len(self.ops) - 1, ins.target.resolve(self.src)))
        elif isinstance(ins, Jump):
            self.emit("JMP", None)
            fixups.append((len(self.ops) - 1, ins.target.resolve(self.src)))
        elif isinstance(ins, EntryMod):
            self.emit("ENTRYOP", ins)
        elif isinstance(ins, TableMod):
            self.emit("TBLOP", ins)
        else:  # pragma: no cover
            raise CompileError("UNKNOWN_KIND", type(ins).__name__)


_ADD = CalcOp.ADD


def lower_block(block: InstructionBlock, schemas: Mapping[int, TableSchema] | Iterable[TableSchema] = (),
                sizes: Sizes = Sizes(), registers: int = DEFAULT_REGISTERS) -> MicroProgram:
    """Lower one validated block. ``sizes`` is accepted for symmetry with validation."""
    if not isinstance(schemas, Mapping):
        schemas = {s.table_id: s for s in schemas}
    return _Lowerer(block, schemas, RegFile(registers)).lower()


def miss_stub(policy: MissPolicy, registers: int = DEFAULT_REGISTERS) -> tuple[MicroOp, ...]:
    """Ops executed after a GOTO_TABLE miss, chosen by the table's live miss policy."""
    rf = RegFile(registers)
    if policy.kind is MissKind.DROP:
        return (MicroOp("DROPM", note="miss: drop"),)
    if policy.kind is MissKind.PACKET_IN:
        return (MicroOp("PKIN", (MISS_REASON,), note="miss: packet-in"),)
    return (
        MicroOp("MOV", (rf.disp, policy.block_id), note="miss: block"),
        MicroOp("MOV", (rf.pbind, 0), note="params cleared"),
        MicroOp("ALU", (_ADD, rf.hops, rf.hops, 1), note="hop count"),
        MicroOp("BR", (Cmp.GT, rf.hops, HOP_LIMIT, TRAP_HOP), note="hop limit"),
        MicroOp("JMP", (DISPATCH,), note="dispatch"),
    )


class CompiledStore:
    """Compiled micro-programs keyed by block id.

    Blocks are immutable once installed: an update installs the new block
    under a fresh id, entries are repointed, and the old id is retired.
    """

    def __init__(self, registers: int = DEFAULT_REGISTERS) -> None:
        self.registers = registers
        self.programs: dict[int, MicroProgram] = {}
        self._stubs: dict[MissPolicy, tuple[MicroOp, ...]] = {}

    def __contains__(self, block_id: int) -> bool:
        return block_id in self.programs

    def __getitem__(self, block_id: int) -> MicroProgram:
        return self.programs[block_id]

    def install(self, block: InstructionBlock, schemas: Mapping[int, TableSchema]) -> MicroProgram:
        prog = lower_block(block, schemas, registers=self.registers)
        self.programs[block.block_id] = prog
        return prog

    def retire(self, block_id: int) -> None:
        self.programs.pop(block_id, None)

    def stub(self, policy: MissPolicy) -> tuple[MicroOp, ...]:
        if policy not in self._stubs:
            self._stubs[policy] = miss_stub(policy, self.registers)
        return self._stubs[policy]

    @classmethod
    def from_program(cls, program, registers: int = DEFAULT_REGISTERS) -> "CompiledStore":
        store = cls(registers)
        schemas = declared_schemas(program)
        for b in program.blocks:
            store.install(b, schemas)
        return store


def _operand(regs: list[int], x) -> int:
    return regs[x] if isinstance(x, Reg) else x


class MicroExecutor:
    """Executes compiled micro-programs against a packet frame."""

    def __init__(self, store: CompiledStore) -> None:
        self.store = store

    def run(self, frame: Frame, start_block: int) -> Verdict:  # noqa: C901 - dispatch loop
        store = self.store
        rf = RegFile(store.registers)
        regs = [0] * store.registers
        key = 0
        staged = b""
        i = s = 0
        try:
            if start_block not in store:
                raise Fault("UNKNOWN_BLOCK", f"block {start_block} not compiled")
            ops = store[start_block].ops
            pc = 0
            while True:
                if pc >= len(ops):
                    raise Fault("FELL_OFF_BLOCK", "micro-program ended without a terminal")
                op = ops[pc]
                i += 1
                s += op.hangs
                k = op.kind
                a = op.args
                pc += 1
                if k == "LD":
                    regs[a[0]] = bits.get_field(frame.buffer(a[1]), a[2] * 8, a[3] * 8)
                elif k == "SHIFTMASK":
                    regs[a[0]] = (regs[a[0]] >> a[1]) & a[2]
                elif k == "ST":
                    frame.write(FieldRef(a[0], a[1], a[2]), regs[a[3]])
                elif k == "MOV":
                    regs[a[0]] = _operand(regs, a[1])
                elif k == "ALU":
                    regs[a[1]] = alu(a[0], _operand(regs, a[2]), _operand(regs, a[3]))
                elif k == "KEYPUT":
                    if a[0] == 0:
                        key = 0
                    key = (key << a[3]) | bits.get_field(frame.buffer(a[1]), a[2], a[3])
                    regs[rf.kcur] += a[3]
                elif k == "LOOKUP":
                    entry = frame.tables.lookup(regs[a[0]], key, regs[rf.kcur])
                    regs[rf.hit] = int(entry is not None)
                    if a[1] is None:
                        regs[rf.blk] = entry.block_id if entry is not None else 0
                        staged = entry.params if entry is not None else b""
                    elif entry is not None:
                        frame.write(a[1], params_slice(frame, entry.params, a[1]))
                elif k == "BR":
                    if compare(a[0], _operand(regs, a[1]), _operand(regs, a[2])):
                        target = a[3]
                        if isinstance(target, int):
                            pc = target
                        elif target == TRAP_KEY:
                            raise Fault("KEY_WIDTH", "assembled key width differs from table")
                        elif target == TRAP_HOP:
                            raise Fault("HOP_LIMIT", f"more than {HOP_LIMIT} table hops")
                        else:  # ("MISS", table_id)
                            ops, pc = store.stub(frame.tables.get(target[1]).schema.miss_policy), 0
                elif k == "JMP":
                    if a[0] == DISPATCH:
                        block_id = regs[rf.disp]
                        if block_id not in store:
                            raise Fault("UNKNOWN_BLOCK", f"block {block_id} not compiled")
                        frame.bind_params(staged if regs[rf.pbind] else b"")
                        ops, pc = store[block_id].ops, 0
                    else:
                        pc = a[0]
                elif k == "EMIT":
                    return frame.verdict(VerdictKind.OUTPUT, _operand(regs, a[0]), CostReport(i, s))
                elif k == "DROPM":
                    return frame.verdict(VerdictKind.DROP, 0, CostReport(i, s))
                elif k == "PKIN":
                    return frame.verdict(VerdictKind.PACKET_IN, a[0], CostReport(i, s))
                elif k == "POOLLD":
                    regs[a[2]] = bits.get_field(frame.pool, a[0], a[1])
                elif k == "POOLST":
                    bits.set_field(frame.pool, a[0], a[1], _operand(regs, a[2]))
                elif k == "POOLINC":
                    cur = bits.get_field(frame.pool, a[0], a[1])
                    bits.set_field(frame.pool, a[0], a[1], (cur + a[2]) & ((1 << a[1]) - 1))
                elif k == "CKSUM":
                    regs[a[0]] = frame.checksum(a[3], a[1], a[2])
                elif k == "PINS":
                    bits.insert_bits(frame.packet, a[0], a[1], regs[a[2]])
                elif k == "PDEL":
                    bits.delete_bits(frame.packet, a[0], a[1])
                elif k == "ENTRYOP":
                    frame.entry_mod(a[0])
                elif k == "TBLOP":
                    frame.table_mod(a[0])
                else:  # pragma: no cover
                    raise Fault("UNKNOWN_OP", k)
        except PofError as exc:
            return frame.verdict(VerdictKind.DROP, 0, CostReport(i, s), exc.code)


def run_micro(store: CompiledStore, program_entry: int, frame: Frame) -> Verdict:
    return MicroExecutor(store).run(frame, program_entry)


# ---------------------------------------------------------------------------
# static cost


@dataclass(frozen=True)
class PathCost:
    """One straight-line path through an app: blocks visited and its cost in both modes."""

    blocks: tuple[int, ...]
    compiled: CostReport
    interp: CostReport
    exit: str

    @property
    def ratio(self) -> float:
        return self.compiled.i / self.interp.i if self.interp.i else 0.0


def _block_paths(ops: tuple[MicroOp, ...], schemas: Mapping[int, TableSchema], store: CompiledStore,
                 ) -> Iterator[tuple[int, int, tuple[int, ...], tuple]]:
    """Yield ``(ops, hangs, source indices, exit)`` per path through one micro-program.

    Exits: ``("verdict", kind)`` or ``("dispatch", table_id | None, block_id | None)``.
    Trap branches are treated as not taken.
    """
    stack = [(ops, 0, 0, 0, (), None)]
    while stack:
        cur, pc, n, h, srcs, last_table = stack.pop()
        while True:
            op = cur[pc]
            n += 1
            h += op.hangs
            if op.src >= 0 and (not srcs or srcs[-1] != op.src):
                srcs = srcs + (op.src,)
            if op.kind == "LOOKUP" and op.args[1] is None:
                last_table = ("hit",)
            if op.kind in TERMINAL_OPS:
                yield n, h, srcs, ("verdict", op.kind)
                break
            if op.kind == "JMP":
                if op.args[0] == DISPATCH:
                    yield n, h, srcs, ("dispatch", last_table)
                    break
                pc = op.args[0]
                continue
            if op.kind == "BR":
                target = op.args[3]
                if isinstance(target, int):
                    stack.append((cur, target, n, h, srcs, last_table))
                elif isinstance(target, tuple):
                    schema = schemas.get(target[1])
                    policy = schema.miss_policy if schema else MissPolicy.drop()
                    stack.append((store.stub(policy), 0, n, h, srcs, ("miss", target[1], policy)))
            pc += 1
            if pc >= len(cur):
                break


def static_cost(program, store: CompiledStore | None = None, costs: InterpCosts = DEFAULT_COSTS,
                framework: CostReport = CostReport(), max_paths: int = 100_000) -> list[PathCost]:
    """Enumerate every packet path from the start block across table dispatches.

    Successor blocks after a lookup hit are taken from the program's
    installed entries; a miss follows the table's miss policy. A block is
    not revisited on the same path. ``framework`` is added to both modes.
    """
    store = store or CompiledStore.from_program(program)
    schemas = declared_schemas(program)
    blocks = {b.block_id: b for b in program.blocks}
    tid_by_goto: dict[tuple[int, int], int] = {}
    for b in program.blocks:
        for idx, ins in enumerate(b.instructions):
            if isinstance(ins, GotoTable):
                tid_by_goto[(b.block_id, idx)] = ins.table_id
    successors: dict[int, list[int]] = {}
    for table_id, entry in program.entries:
        lst = successors.setdefault(table_id, [])
        if entry.block_id not in lst:
            lst.append(entry.block_id)
    out: list[PathCost] = []

    def interp_of(block_id: int, srcs: tuple[int, ...]) -> CostReport:
        total = CostReport()
        for idx in srcs:
            total = total + interp_cost(blocks[block_id].instructions[idx], costs)
        return total

    def walk(block_id: int, visited: tuple[int, ...], comp: CostReport, intr: CostReport) -> None:
        if len(out) >= max_paths:
            return
        for n, h, srcs, exit_ in _block_paths(store[block_id].ops, schemas, store):
            c = comp + CostReport(n, h)
            t = intr + interp_of(block_id, srcs)
            path = visited + (block_id,)
            if exit_[0] == "verdict":
                out.append(PathCost(path, c + framework, t + framework, exit_[1]))
                continue
            info = exit_[1]
            if info[0] == "miss":
                nxt = [info[2].block_id]
            else:
                goto_idx = srcs[-1]
                nxt = successors.get(tid_by_goto.get((block_id, goto_idx)), [])
            for b in nxt:
                if b in path or b not in store:
                    continue
                walk(b, path, c, t)

    walk(program.start_block, (), CostReport(), CostReport())
    return out


def worst_path(paths: list[PathCost]) -> PathCost:
    return max(paths, key=lambda p: (p.compiled.i, p.interp.i))

