"""Interpreter and compiler must agree on everything observable."""

import random

from hypothesis import given, settings, strategies as st

from progen import packet, random_program
from pofvm.isa import DelField, TableMod, TableOp
from pofvm.runtime import SwitchRuntime

PACKETS_PER_PROGRAM = 4


def run_both(seed: int):
    prog = random_program(seed)
    rng = random.Random(seed * 7919 + 1)
    pkts = [packet(rng) for _ in range(PACKETS_PER_PROGRAM)]
    results = []
    for mode in ("interp", "compile"):
        rt = SwitchRuntime()
        rt.load(prog)
        rt.set_mode(mode)
        verdicts = [rt.inject(p).outcome() for p in pkts]
        results.append((verdicts, rt.snapshot()))
    return prog, results


def differential_cases(n_programs: int, first_seed: int = 0) -> int:
    cases = 0
    for seed in range(first_seed, first_seed + n_programs):
        _, (a, b) = run_both(seed)
        assert a[0] == b[0], f"seed {seed}: verdicts differ"
        assert a[1] == b[1], f"seed {seed}: final tables/pool differ"
        cases += PACKETS_PER_PROGRAM
    return cases


def test_engine_equivalence_10k():
    assert differential_cases(2500) >= 10_000


@settings(max_examples=150, deadline=None)
@given(st.integers(10_000, 2**40))
def test_engine_equivalence_hypothesis(seed):
    _, (a, b) = run_both(seed)
    assert a == b


def _mutates_layout(prog) -> bool:
    return any(isinstance(i, DelField) or (isinstance(i, TableMod) and i.op is TableOp.DELETE)
               for b in prog.blocks for i in b.instructions)


def test_validation_is_sound_for_execution():
    """Valid programs never fault on range or references, unless they delete bytes or tables at run time."""
    checked = 0
    for seed in range(3000):
        prog = random_program(seed)
        if _mutates_layout(prog):
            continue
        rng = random.Random(seed)
        rt = SwitchRuntime()
        rt.load(prog)
        for _ in range(3):
            v = rt.inject(packet(rng))
            assert not (v.error or "").startswith(("OUT_OF_RANGE", "UNKNOWN_")), (seed, v.error)
            checked += 1
    assert checked > 3000
