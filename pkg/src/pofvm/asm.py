"""Text assembly for programs: recursive-descent parser and disassembler.

Example::

    table 1 LPM key 48 miss packetin
    block 2 {
        set meta[16:16] <- param[0:16]
        goto 1 key(meta[16:16], pkt[240:32])
    }
    entry 1 value 0x00010a000000 mask 0xffffff000000 block 3 params 0x0003
    start 2

Fields are ``space[offset:length]`` in bits over ``pkt``, ``meta``,
``param`` or ``pool``. Immediates are ``imm <int>[/<width>]``; without a
width they take the width of the slot they are written to.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import AsmError, PofError
from .isa import (
    AddField, Branch, Calc, CalcOp, Checksum, Cmp, DelField, Drop, EntryMod, EntryOp, FieldRef, GotoTable, Imm,
    IncPool, Instruction, InstructionBlock, Jump, Output, PacketIn, Program, ReadPool, SearchTable, SetField,
    Space, TableMod, TableOp, Target, WritePool, validate_program,
)
from .tables import FlowEntry, MatchType, MissKind, MissPolicy, TableSchema

_TOKEN = re.compile(r"""
    (?P<ws>[ \t\r]+)
  | (?P<comment>\#[^\n]*)
  | (?P<nl>\n)
  | (?P<num>0[xX][0-9a-fA-F]+|\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op><-|->|\+=|[\[\]:(){},;@+\-/])
""", re.VERBOSE)

_SPACES = {s.value: s for s in Space}
_DEFAULT_SIZE = 1024


@dataclass
class Token:
    kind: str
    text: str
    line: int
    col: int


@dataclass
class SourceUnit:
    text: str
    filename: str = "<input>"
    # (block_id, index), ("block", id), ("table" | "entry", k), ("start",) -> (line, col)
    positions: dict = field(default_factory=dict)


def tokenize(text: str, filename: str = "<input>") -> list[Token]:
    tokens = []
    pos = 0
    line, line_start = 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise AsmError("SYNTAX", f"unexpected character {text[pos]!r}", line, pos - line_start + 1, filename)
        kind = m.lastgroup
        if kind == "nl":
            tokens.append(Token("nl", "\n", line, pos - line_start + 1))
            line += 1
            line_start = m.end()
        elif kind not in ("ws", "comment"):
            tokens.append(Token(kind, m.group(), line, pos - line_start + 1))
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


class Parser:
    def __init__(self, unit: SourceUnit) -> None:
        self.unit = unit
        self.toks = tokenize(unit.text, unit.filename)
        self.i = 0

    # -- token helpers ------------------------------------------------

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def error(self, message: str, tok: Token | None = None, code: str = "SYNTAX") -> AsmError:
        tok = tok or self.tok
        return AsmError(code, message, tok.line, tok.col, self.unit.filename)

    def next(self) -> Token:
        tok = self.tok
        if tok.kind != "eof":
            self.i += 1
        return tok

    def at(self, text: str) -> bool:
        return self.tok.text == text and self.tok.kind in ("ident", "op")

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.i += 1
            return True
        return False

    def expect(self, text: str) -> Token:
        if not self.at(text):
            found = self.tok.text.strip() or self.tok.kind
            raise self.error(f"expected {text!r}, found {found!r}")
        return self.next()

    def skip_nl(self) -> None:
        while self.tok.kind == "nl" or self.at(";"):
            self.i += 1

    def end_stmt(self) -> None:
        if self.tok.kind in ("nl", "eof") or self.at(";") or self.at("}"):
            return
        raise self.error(f"unexpected {self.tok.text!r} at end of statement")

    def int(self, what: str = "integer", lo: int = 0, hi: int | None = None) -> int:
        tok = self.tok
        if tok.kind != "num":
            raise self.error(f"expected {what}, found {tok.text.strip() or tok.kind!r}")
        self.i += 1
        value = int(tok.text, 0)
        if value < lo or (hi is not None and value > hi):
            raise self.error(f"{what} {value} outside {lo}..{hi}", tok, "RANGE")
        return value

    def signed(self) -> int:
        neg = self.accept("-")
        if not neg:
            self.accept("+")
        v = self.int()
        return -v if neg else v

    def word(self, choices: dict, what: str):
        tok = self.tok
        key = tok.text.lower() if tok.kind == "ident" else None
        if key not in choices:
            raise self.error(f"expected {what} ({'|'.join(choices)}), found {tok.text.strip() or tok.kind!r}")
        self.i += 1
        return choices[key]

    # -- grammar ------------------------------------------------------

    def program(self) -> Program:
        schemas, blocks, entries = [], [], []
        start = None
        start_tok = None
        self.skip_nl()
        while self.tok.kind != "eof":
            tok = self.tok
            if self.accept("table"):
                self.unit.positions[("table", len(schemas))] = (tok.line, tok.col)
                schemas.append(self.schema_tail())
            elif self.accept("block"):
                blocks.append(self.block_tail(tok))
                self.skip_nl()
                continue
            elif self.accept("entry"):
                self.unit.positions[("entry", len(entries))] = (tok.line, tok.col)
                entries.append(self.entry_tail())
            elif self.accept("start"):
                if start_tok is not None:
                    raise self.error("duplicate start directive", tok, "DUPLICATE_START")
                start_tok = tok
                self.unit.positions[("start",)] = (tok.line, tok.col)
                start = self.int("block id", 0, 0xFFFFFFFF)
            else:
                raise self.error(f"expected table/block/entry/start, found {tok.text.strip() or tok.kind!r}")
            self.end_stmt()
            self.skip_nl()
        if start is None:
            raise AsmError("MISSING_START", "program has no start directive", self.tok.line, self.tok.col,
                           self.unit.filename)
        return Program(tuple(schemas), tuple(blocks), tuple(entries), start)

    def schema_tail(self) -> TableSchema:
        tok = self.tok
        table_id = self.int("table id", 0, 0xFFFF)
        match = self.word({m.value.lower(): m for m in MatchType}, "match type")
        self.expect("key")
        width = self.int("key width", 1, 512)
        size = _DEFAULT_SIZE
        if self.accept("size"):
            size = self.int("table size", 0, 0xFFFFFFFF)
        self.expect("miss")
        kind = self.word({k.value: k for k in MissKind}, "miss policy")
        policy = MissPolicy(kind, self.int("block id", 0, 0xFFFFFFFF) if kind is MissKind.GOTO_BLOCK else None)
        try:
            return TableSchema(table_id, match, width, size, policy)
        except PofError as exc:
            raise self.error(str(exc), tok, exc.code) from None

    def block_tail(self, head: Token) -> InstructionBlock:
        block_id = self.int("block id", 0, 0xFFFFFFFF)
        self.unit.positions[("block", block_id)] = (head.line, head.col)
        self.expect("{")
        instrs = []
        self.skip_nl()
        while not self.at("}"):
            if self.tok.kind == "eof":
                raise self.error("unterminated block", code="UNEXPECTED_EOF")
            self.unit.positions[(block_id, len(instrs))] = (self.tok.line, self.tok.col)
            instrs.append(self.instruction())
            self.end_stmt()
            self.skip_nl()
        self.expect("}")
        return InstructionBlock(block_id, tuple(instrs))

    def entry_tail(self) -> tuple[int, FlowEntry]:
        table_id = self.int("table id", 0, 0xFFFF)
        self.expect("value")
        value = self.int("key value")
        self.expect("mask")
        mask = self.int("key mask")
        prio = self.int("priority", 0, 0xFFFF) if self.accept("prio") else 0
        self.expect("block")
        block_id = self.int("block id", 0, 0xFFFFFFFF)
        params = self.param_bytes() if self.accept("params") else b""
        return table_id, FlowEntry(value, mask, block_id, prio, params)

    def param_bytes(self) -> bytes:
        tok = self.tok
        if tok.kind != "num" or not tok.text.lower().startswith("0x") or len(tok.text) % 2:
            raise self.error("params are written 0x<even number of hex digits>")
        self.i += 1
        return bytes.fromhex(tok.text[2:])

    def field(self) -> FieldRef:
        space = self.word(_SPACES, "space")
        self.expect("[")
        off = self.int("bit offset", 0, 0xFFFF)
        self.expect(":")
        length = self.int("bit length", 1, 512)
        self.expect("]")
        return FieldRef(space, off, length)

    def operand(self, default_width: int | None = 64) -> FieldRef | Imm:
        if self.accept("imm"):
            tok = self.tok
            value = self.int("immediate")
            if self.accept("/"):
                width = self.int("immediate width", 1, 64)
            elif default_width is None:
                raise self.error("immediate needs an explicit /width here", tok)
            else:
                width = default_width
            return Imm(value, width)
        return self.field()

    def operand_list(self, explicit: bool = False) -> tuple:
        self.expect("(")
        items = [self.operand(None) if explicit else self.field()]
        while self.accept(","):
            items.append(self.operand(None) if explicit else self.field())
        self.expect(")")
        return tuple(items)

    def target(self) -> Target:
        if self.accept("@"):
            return Target(False, self.int("instruction index", 0, 255))
        if self.at("+") or self.at("-"):
            return Target(True, self.signed())
        raise self.error("expected @<index> or +/-<delta>")

    def instruction(self) -> Instruction:  # noqa: C901 - one branch per mnemonic
        tok = self.tok
        if tok.kind != "ident":
            raise self.error(f"expected instruction, found {tok.text.strip() or tok.kind!r}")
        name = self.next().text.lower()
        if name == "set":
            dst = self.field()
            self.expect("<-")
            return SetField(dst, self.operand(dst.length))
        if name == "addf":
            f = self.field()
            self._packet_only(f, tok)
            self.expect("<-")
            return AddField(f.offset, f.length, self.operand(f.length))
        if name == "delf":
            f = self.field()
            self._packet_only(f, tok)
            return DelField(f.offset, f.length)
        if name == "calc":
            op = self.word({o.value: o for o in CalcOp}, "alu op")
            dst = self.field()
            self.expect("<-")
            a = self.operand()
            self.expect(",")
            return Calc(op, dst, a, self.operand())
        if name == "rdpool":
            dst = self.field()
            self.expect("<-")
            src = self.field()
            self._pool_only(src, tok)
            return ReadPool(dst, src.offset, src.length)
        if name == "wrpool":
            dst = self.field()
            self._pool_only(dst, tok)
            self.expect("<-")
            return WritePool(dst.offset, dst.length, self.operand(dst.length))
        if name == "incpool":
            dst = self.field()
            self._pool_only(dst, tok)
            self.expect("+=")
            return IncPool(dst.offset, dst.length, self.int("delta"))
        if name == "checksum":
            dst = self.field()
            self.expect("over")
            region = self.field()
            self._packet_only(region, tok)
            return Checksum(dst, region.offset, region.length)
        if name == "goto":
            table_id = self.int("table id", 0, 0xFFFF)
            self.expect("key")
            return GotoTable(table_id, self.operand_list())
        if name == "search":
            table_id = self.int("table id", 0, 0xFFFF)
            self.expect("key")
            keys = self.operand_list()
            self.expect("->")
            return SearchTable(table_id, keys, self.field())
        if name == "out":
            return Output(self.operand(32))
        if name == "drop":
            return Drop()
        if name == "packetin":
            return PacketIn(self.int("reason", 0, 0xFFFF))
        if name == "br":
            a = self.operand()
            cmp = self.word({c.value: c for c in Cmp}, "comparison")
            b = self.operand()
            self.expect("->")
            return Branch(a, cmp, b, self.target())
        if name == "jmp":
            return Jump(self.target())
        if name == "entry_mod":
            op = self.word({o.value: o for o in EntryOp}, "entry op")
            table_id = self.int("table id", 0, 0xFFFF)
            self.expect("key")
            keys = self.operand_list(explicit=True)
            self.expect("mask")
            mask = self.int("mask")
            prio = self.int("priority", 0, 0xFFFF) if self.accept("prio") else 0
            block_id = self.int("block id", 0, 0xFFFFFFFF) if self.accept("block") else 0
            params = self.operand_list(explicit=True) if self.accept("params") else ()
            return EntryMod(op, table_id, keys, mask, prio, block_id, params)
        if name == "table_mod":
            op = self.word({o.value: o for o in TableOp}, "table op")
            if op is TableOp.CREATE:
                schema = self.schema_tail()
                return TableMod(op, schema.table_id, schema)
            return TableMod(op, self.int("table id", 0, 0xFFFF))
        raise self.error(f"unknown instruction {name!r}", tok, "UNKNOWN_MNEMONIC")

    def _packet_only(self, f: FieldRef, tok: Token) -> None:
        if f.space is not Space.PACKET:
            raise self.error("this instruction addresses the packet", tok, "BAD_SPACE")

    def _pool_only(self, f: FieldRef, tok: Token) -> None:
        if f.space is not Space.POOL:
            raise self.error("pool operand expected", tok, "BAD_SPACE")


def parse(unit: SourceUnit | str, filename: str = "<input>") -> Program:
    """Parse source text into a Program; syntax errors raise :class:`AsmError` with line:col."""
    if isinstance(unit, str):
        unit = SourceUnit(unit, filename)
    try:
        return Parser(unit).program()
    except AsmError:
        raise
    except (PofError, ValueError, OverflowError) as exc:  # defensive: never leak raw errors
        raise AsmError("SYNTAX", str(exc), 0, 0, unit.filename) from None


def parse_instruction(text: str) -> Instruction:
    p = Parser(SourceUnit(text))
    ins = p.instruction()
    p.skip_nl()
    if p.tok.kind != "eof":
        raise p.error("trailing input after instruction")
    return ins


def assemble(text: str, filename: str = "<input>") -> Program:
    """Parse and validate; semantic problems raise AsmError at the offending instruction."""
    unit = SourceUnit(text, filename)
    program = parse(unit)
    diags = validate_program(program)
    if diags:
        d = diags[0]
        pos = unit.positions
        line, col = (pos.get(d.item) or pos.get((d.block_id, d.index)) or pos.get(("block", d.block_id))
                     or pos.get(("start",), (1, 1)))
        more = f" (+{len(diags) - 1} more)" if len(diags) > 1 else ""
        raise AsmError(d.code, f"{d}{more}", line, col, filename)
    return program


# ---------------------------------------------------------------------------
# disassembly


def _imm(op: Imm, default: int | None) -> str:
    return f"imm {op.value:#x}" if op.width == default else f"imm {op.value:#x}/{op.width}"


def _opnd(op, default: int | None = 64) -> str:
    return _imm(op, default) if isinstance(op, Imm) else str(op)


def _schema(s: TableSchema) -> str:
    text = f"{s.table_id} {s.match_type.value} key {s.key_width_bits}"
    if s.max_entries != _DEFAULT_SIZE:
        text += f" size {s.max_entries}"
    text += f" miss {s.miss_policy.kind.value}"
    if s.miss_policy.kind is MissKind.GOTO_BLOCK:
        text += f" {s.miss_policy.block_id}"
    return text


def render_instruction(ins: Instruction) -> str:  # noqa: C901
    if isinstance(ins, SetField):
        return f"set {ins.dst} <- {_opnd(ins.src, ins.dst.length)}"
    if isinstance(ins, AddField):
        return f"addf pkt[{ins.offset}:{ins.length}] <- {_opnd(ins.src, ins.length)}"
    if isinstance(ins, DelField):
        return f"delf pkt[{ins.offset}:{ins.length}]"
    if isinstance(ins, Calc):
        return f"calc {ins.op.value} {ins.dst} <- {_opnd(ins.a)}, {_opnd(ins.b)}"
    if isinstance(ins, ReadPool):
        return f"rdpool {ins.dst} <- pool[{ins.pool_offset}:{ins.length}]"
    if isinstance(ins, WritePool):
        return f"wrpool pool[{ins.pool_offset}:{ins.length}] <- {_opnd(ins.src, ins.length)}"
    if isinstance(ins, IncPool):
        return f"incpool pool[{ins.pool_offset}:{ins.length}] += {ins.delta}"
    if isinstance(ins, Checksum):
        return f"checksum {ins.dst} over pkt[{ins.region_offset}:{ins.region_length}]"
    if isinstance(ins, GotoTable):
        return f"goto {ins.table_id} key({', '.join(map(str, ins.key_fields))})"
    if isinstance(ins, SearchTable):
        return f"search {ins.table_id} key({', '.join(map(str, ins.key_fields))}) -> {ins.dst}"
    if isinstance(ins, Output):
        return f"out {_opnd(ins.port, 32)}"
    if isinstance(ins, Drop):
        return "drop"
    if isinstance(ins, PacketIn):
        return f"packetin {ins.reason}"
    if isinstance(ins, Branch):
        return f"br {_opnd(ins.a)} {ins.cmp.value} {_opnd(ins.b)} -> {ins.target}"
    if isinstance(ins, Jump):
        return f"jmp {ins.target}"
    if isinstance(ins, EntryMod):
        text = (f"entry_mod {ins.op.value} {ins.table_id} key({', '.join(_opnd(k, None) for k in ins.key_src)})"
                f" mask {ins.mask:#x}")
        if ins.priority:
            text += f" prio {ins.priority}"
        if ins.block_id:
            text += f" block {ins.block_id}"
        if ins.params_src:
            text += f" params({', '.join(_opnd(p, None) for p in ins.params_src)})"
        return text
    if isinstance(ins, TableMod):
        if ins.op is TableOp.CREATE:
            return f"table_mod create {_schema(ins.schema)}"
        return f"table_mod delete {ins.table_id}"
    raise TypeError(type(ins).__name__)


def disassemble(program: Program) -> str:
    lines = [f"table {_schema(s)}" for s in program.schemas]
    for b in program.blocks:
        if len(b.instructions) == 1:
            lines.append(f"block {b.block_id} {{ {render_instruction(b.instructions[0])} }}")
            continue
        lines.append(f"block {b.block_id} {{")
        lines.extend(f"    {render_instruction(ins)}" for ins in b.instructions)
        lines.append("}")
    for table_id, e in program.entries:
        text = f"entry {table_id} value {e.key_value:#x} mask {e.key_mask:#x}"
        if e.priority:
            text += f" prio {e.priority}"
        text += f" block {e.block_id}"
        if e.params:
            text += f" params 0x{e.params.hex()}"
        lines.append(text)
    lines.append(f"start {program.start_block}")
    return "\n".join(lines) + "\n"


def _parse_one(text: str, filename: str, method: str, head: str | None = None):
    p = Parser(SourceUnit(text, filename))
    p.skip_nl()
    tok = p.tok
    if head is not None:
        p.expect(head)
    out = getattr(p, method)(tok) if method == "block_tail" else getattr(p, method)()
    p.skip_nl()
    if p.tok.kind != "eof":
        raise p.error("trailing input")
    return out


def parse_block(text: str, filename: str = "<input>") -> InstructionBlock:
    """A lone ``block <id> { ... }`` definition."""
    return _parse_one(text, filename, "block_tail", "block")


def parse_schema(text: str, filename: str = "<input>") -> TableSchema:
    """``<id> <EXACT|LPM|MASKED> key <bits> [size N] miss ...`` (the leading ``table`` is optional)."""
    text = text.strip()
    if text.startswith("table"):
        text = text[len("table"):]
    return _parse_one(text, filename, "schema_tail")
