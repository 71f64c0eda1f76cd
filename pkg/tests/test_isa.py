from helpers import META, PARAM, PKT, F, I, block, entry, exact, program
from pofvm.apps import load_app
from pofvm.isa import (
    Branch, Calc, CalcOp, Cmp, DelField, Drop, GotoTable, Jump, Output, ReadPool, SetField, Space, Target,
    validate_block, validate_program,
)
from pofvm.tables import MatchType, TableSchema


def codes(diags):
    return [d.code for d in diags]


def test_missing_terminal():
    d = validate_block(block(1, SetField(F(META, 8, 8), I(1, 8))))
    assert codes(d) == ["MISSING_TERMINAL"]
    assert d[0].index == 0


def test_key_width_mismatch():
    b = block(1, GotoTable(1, (F(PKT, 0, 8),)))
    d = validate_block(b, schemas=[exact(1, 16)])
    assert codes(d) == ["KEY_WIDTH_MISMATCH"]


def test_target_out_of_block():
    b = block(1, Branch(I(1), Cmp.EQ, I(1), Target(True, 10)), Drop(), Drop(), Drop())
    assert codes(validate_block(b)) == ["TARGET_OUT_OF_BLOCK"]


def test_backward_branch_rejected():
    b = block(1, Drop(), Jump(Target(False, 0)), Drop())
    assert "BACKWARD_BRANCH" in codes(validate_block(b))


def test_unknown_block_and_duplicate_table():
    p = program(block(1, Drop()), schemas=[exact(3, 8), exact(3, 8)], entries=[(3, entry(1, 8, 7))])
    d = validate_program(p)
    assert ("UNKNOWN_BLOCK", 7) in [(x.code, x.subject) for x in d]
    assert ("DUPLICATE_TABLE", 3) in [(x.code, x.subject) for x in d]


def test_space_rules():
    cases = {
        "READ_ONLY": SetField(F(PARAM, 0, 8), I(1, 8)),
        "RESERVED_FLAG": SetField(F(META, 0, 1), I(1, 1)),
        "FIELD_SPAN": SetField(F(PKT, 4, 64), I(1, 64)),
        "OUT_OF_RANGE": SetField(F(META, 1020, 8), I(1, 8)),
        "POOL_ACCESS": SetField(F(Space.POOL, 0, 8), I(1, 8)),
        "WIDTH_MISMATCH": SetField(F(META, 8, 8), F(PKT, 0, 16)),
        "VALUE_TOO_WIDE": SetField(F(META, 8, 4), I(16, 8)),
        "UNALIGNED": DelField(4, 8),
        "BAD_SPACE": ReadPool(F(PKT, 0, 8), 0, 8),
    }
    for code, ins in cases.items():
        assert code in codes(validate_block(block(1, ins, Drop()))), code


def test_calc_and_output_are_fine():
    b = block(1, Calc(CalcOp.SUB, F(PKT, 176, 8), F(PKT, 176, 8), I(1)), Output(F(PARAM, 0, 16)))
    assert validate_block(b) == []


def test_validation_is_pure():
    p = program(block(1, GotoTable(9, (F(PKT, 0, 8),))), schemas=[TableSchema(9, MatchType.LPM, 16)])
    assert validate_program(p) == validate_program(p)
    assert validate_program(p)


def test_bundled_app_is_clean():
    assert validate_program(load_app()) == []
