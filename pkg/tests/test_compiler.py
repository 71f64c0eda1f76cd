from pathlib import Path

import pytest

from helpers import META, PARAM, PKT, F, I, block, entry, exact, program
from pofvm.apps import GOLDEN_PACKET, load_app
from pofvm.compiler import CompiledStore, MicroExecutor, lower_block, static_cost, worst_path
from pofvm.errors import CompileError
from pofvm.interp import interp_cost
from pofvm.isa import (
    Branch, Calc, CalcOp, Checksum, Cmp, DelField, Drop, EntryMod, EntryOp, GotoTable, IncPool, Jump, Output,
    PacketIn, ReadPool, SearchTable, SetField, TableMod, TableOp, Target, WritePool, AddField,
)
from pofvm.machine import Frame, VerdictKind
from pofvm.perf import CostReport
from pofvm.runtime import SwitchRuntime, fresh_state

GOLDEN = Path(__file__).parent / "golden"


def cost_of(*instrs, schemas=()):
    mp = lower_block(block(1, *instrs), schemas)
    return len(mp.ops), sum(op.hangs for op in mp.ops)


def keys(n):
    return tuple(F(PKT, 8 * k, 8) for k in range(n))


@pytest.mark.parametrize("n", range(1, 17))
def test_goto_affine_law(n):
    assert cost_of(GotoTable(1, keys(n))) == (13 + n, 1)


@pytest.mark.parametrize("n", [1, 2, 5])
def test_search_is_13_plus_n(n):
    assert cost_of(SearchTable(1, keys(n), F(META, 64, 16))) == (13 + n, 1)


def test_goto_itemization_is_frozen():
    mp = lower_block(block(1, GotoTable(1, keys(2))), [exact(1, 16)])
    assert [op.kind for op in mp.ops] == [
        "MOV", "MOV", "MOV", "MOV", "KEYPUT", "KEYPUT", "BR", "LOOKUP", "MOV", "BR", "MOV", "MOV", "ALU", "BR", "JMP",
    ]


def test_set_field_lowering():
    assert [op.kind for op in lower_block(block(1, SetField(F(META, 16, 16), I(5, 16)), Drop())).ops[:-1]] == \
        ["MOV", "ST"]
    assert [op.kind for op in lower_block(block(1, SetField(F(META, 16, 4), F(PKT, 4, 4)), Drop())).ops[:-1]] == \
        ["LD", "SHIFTMASK", "ST"]


def test_two_sets_cost_four():
    ops, hangs = cost_of(SetField(F(META, 8, 8), I(1, 8)), SetField(F(META, 16, 16), I(2, 16)), Drop())
    assert (ops - 1, hangs) == (4, 0)


def test_rule_sizes():
    assert cost_of(Calc(CalcOp.ADD, F(META, 8, 8), F(PKT, 0, 8), F(PKT, 8, 8)))[0] <= 4
    assert cost_of(IncPool(0, 32, 1)) == (1, 1)
    assert cost_of(WritePool(0, 32, I(3, 32))) == (1, 1)
    assert cost_of(Checksum(F(PKT, 80, 16), 0, 160)) == (2, 1)
    assert cost_of(Output(F(PARAM, 0, 16))) == (2, 0)
    assert cost_of(Branch(F(META, 8, 8), Cmp.EQ, I(0), Target(True, 1)))[0] == 2  # LD then BR


def test_cost_dominance_per_kind():
    t = exact(1, 16)
    samples = [
        SetField(F(PKT, 3, 7), F(META, 13, 7)), Calc(CalcOp.XOR, F(PKT, 0, 32), F(PKT, 4, 12), F(META, 8, 64)),
        AddField(0, 16, I(1, 16)), DelField(8, 8), ReadPool(F(META, 8, 32), 0, 32), WritePool(0, 8, F(PKT, 0, 8)),
        IncPool(0, 64, 5), Checksum(F(PKT, 80, 16), 0, 400), GotoTable(1, keys(2)),
        SearchTable(1, keys(2), F(META, 64, 16)), Output(F(PARAM, 0, 16)), Drop(), PacketIn(3),
        Branch(F(PKT, 0, 64), Cmp.LT, F(META, 8, 64), Target(False, 5)), Jump(Target(True, 1)),
        EntryMod(EntryOp.INSERT, 1, (I(1, 16),), 0xFFFF, 0, 1, ()), TableMod(TableOp.DELETE, 1),
    ]
    for ins in samples:
        n, h = cost_of(ins, schemas=[t])
        ref = interp_cost(ins)
        assert n <= ref.i and h <= ref.s, type(ins).__name__


def test_recompilation_is_stable():
    b = load_app().block(2)
    assert lower_block(b).ops == lower_block(b).ops


def test_register_pressure():
    with pytest.raises(CompileError) as e:
        lower_block(block(1, Calc(CalcOp.ADD, F(META, 8, 8), F(PKT, 0, 8), F(PKT, 8, 8)), Drop()), registers=11)
    assert e.value.code == "REGISTER_PRESSURE"


def test_all_drop_costs_one():
    prog = program(block(1, Drop()))
    blocks, tables, pool = fresh_state(prog)
    v = MicroExecutor(CompiledStore.from_program(prog)).run(Frame(bytes(64), 0, pool, tables), 1)
    assert v.kind is VerdictKind.DROP and v.cost == CostReport(1, 0)


def test_lone_goto_static_cost():
    prog = program(block(1, GotoTable(1, keys(3))), block(2, Drop()), schemas=[exact(1, 24)],
                   entries=[(1, entry(0, 24, 2))])
    paths = static_cost(prog)
    hit = [p for p in paths if p.blocks == (1, 2)][0]
    assert hit.compiled == CostReport(16 + 1, 1)  # goto plus the DROPM of block 2


def test_l3_worst_path_pinned():
    w = worst_path(static_cost(load_app()))
    assert w.blocks == (1, 2, 3, 4)
    assert (w.compiled, w.interp) == (CostReport(94, 7), CostReport(632, 53))


def test_l3_micro_dump_golden():
    store = CompiledStore.from_program(load_app())
    text = "\n".join(store[b].dump() for b in sorted(store.programs)) + "\n"
    assert text == (GOLDEN / "l3_ipv4.micro").read_text()


def test_l3_engines_agree_on_golden_packet():
    prog = load_app()
    out = []
    for engine in ("interp", "compile"):
        rt = SwitchRuntime()
        rt.load(prog)
        rt.set_mode(engine)
        out.append(rt.inject((1, GOLDEN_PACKET)))
    assert out[0].outcome() == out[1].outcome()
    assert out[0].cost.i > out[1].cost.i
