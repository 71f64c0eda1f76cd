"""Acceptance criteria 1-9.

Each criterion is a function returning ``(ok, detail)``. The pytest wrappers
assert on it, and every outcome is printed as one PASS/FAIL line: in the
pytest terminal summary (see conftest.py), or directly when this file is run
as a script.
"""

from __future__ import annotations

import random
import sys
import time
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from oracles import ones_sum_oracle  # noqa: E402
from scenarios import ACTIVE_SCRIPT, ACTIVE_SRC  # noqa: E402
from pofvm.apps import GOLDEN_PACKET, GOLDEN_PORT, L3_FRAMEWORK, load_app  # noqa: E402
from pofvm.asm import assemble, disassemble, parse  # noqa: E402
from pofvm.bench import goto_sweep  # noqa: E402
from pofvm.codec import decode, encode  # noqa: E402
from pofvm.compiler import static_cost, worst_path  # noqa: E402
from pofvm.isa import Checksum, FieldRef, Output, Imm, Space  # noqa: E402
from pofvm.machine import VerdictKind  # noqa: E402
from pofvm.perf import REFERENCE_ROWS, default_chip, latency_cycles, throughput  # noqa: E402
from pofvm.runtime import Mode, SwitchRuntime, read_script  # noqa: E402

GOLDEN = Path(__file__).parent / "golden"
RESULTS: dict[int, tuple[bool, str]] = {}


def c1_goto_table_exact():
    t0 = time.perf_counter()
    rows = goto_sweep(range(1, 9))
    dt = time.perf_counter() - t0
    bad = [(r["mode"], r["case"], r["i"], r["s"]) for r in rows
           if (r["i"], r["s"]) != ((37 + 33 * r["case"], 7 + 3 * r["case"]) if r["mode"] == "interp"
                                   else (13 + r["case"], 1))]
    return not bad and dt < 1.0, f"16 rows, mismatches={bad}, {dt:.3f}s"


def c2_reduction_range():
    t0 = time.perf_counter()
    w = worst_path(static_cost(load_app(), framework=L3_FRAMEWORK))
    ratio = w.compiled.i / w.interp.i
    bare = worst_path(static_cost(load_app()))
    dt = time.perf_counter() - t0
    return 0.40 <= ratio <= 0.55 and dt < 1.0, (
        f"worst path {w.compiled.i}/{w.interp.i} = {ratio:.1%} with framework "
        f"(flow instructions alone {bare.compiled.i}/{bare.interp.i} = {bare.compiled.i / bare.interp.i:.1%}), {dt:.3f}s")


def c3_throughput_doubling():
    chip = default_chip()
    rates = {}
    for mode in Mode:
        rt = SwitchRuntime(framework=L3_FRAMEWORK)
        rt.load(load_app())
        rt.set_mode(mode)
        rates[mode] = throughput(rt.inject((GOLDEN_PORT, GOLDEN_PACKET)).cost.i, chip)
    ratio = rates[Mode.COMPILE] / rates[Mode.INTERP]
    return 1.8 <= ratio <= 2.2, f"compile/interp throughput = {ratio:.3f}"


def c4_chip_fit():
    chip = default_chip()
    cf_ok = abs(chip.cf / 38.42e9 - 1) <= 0.005
    errs = {k: latency_cycles(i, s, chip.p) / lat - 1 for k, (i, s, _, lat) in REFERENCE_ROWS.items()}
    lat_ok = all(abs(e) <= 0.10 for e in errs.values())
    detail = f"cf={chip.cf / 1e9:.3f}G ({'ok' if cf_ok else 'off'}), p={chip.p:.2f}, latency error " + \
        ", ".join(f"{k} {e:+.1%}" for k, e in errs.items())
    return cf_ok and lat_ok, detail


def c5_engine_equivalence():
    from test_differential import differential_cases

    t0 = time.perf_counter()
    cases = differential_cases(2500)
    dt = time.perf_counter() - t0
    return cases >= 10_000 and dt < 60, f"{cases} cases identical, {dt:.1f}s"


def c6_lookup_oracle():
    from pofvm.tables import MatchType
    from test_tables import oracle_run

    n = {mt: sum(oracle_run(mt, seed, 100) for seed in range(100)) for mt in (MatchType.LPM, MatchType.MASKED)}
    return all(v >= 10_000 for v in n.values()), ", ".join(f"{k.value} {v} queries" for k, v in n.items())


def _checksum_region(rng: random.Random, modes=tuple(Mode), zero=False) -> bool:
    start = rng.randrange(0, 40)
    length = rng.randrange(2, 60 - start) if not zero else 20
    dst = start + 2 * rng.randrange(0, length // 2)
    data = bytearray(bytes(64) if zero else rng.randbytes(64))
    prog = parse(f"block 1 {{ checksum pkt[{dst * 8}:16] over pkt[{start * 8}:{length * 8}]; out imm 1 }}\nstart 1")
    for mode in modes:
        rt = SwitchRuntime()
        rt.load(prog)
        rt.set_mode(mode)
        v = rt.inject((0, bytes(data)))
        if v.kind is not VerdictKind.OUTPUT or ones_sum_oracle(v.packet[start:start + length]) != 0xFFFF:
            return False
        if zero and v.packet[dst:dst + 2] != b"\xff\xff":
            return False
    return True


def c7_checksum_invariant():
    rng = random.Random(7)
    good = sum(_checksum_region(rng) for _ in range(1000))
    zero_ok = _checksum_region(rng, zero=True)
    return good == 1000 and zero_ok, f"{good}/1000 regions sum to 0xFFFF in both modes, all-zero region {'ok' if zero_ok else 'wrong'}"


def c8_roundtrips():
    from progen import random_program

    for seed in range(1000):
        p = random_program(seed)
        if decode(encode(p)) != p or parse(disassemble(p)) != p:
            return False, f"seed {seed} does not roundtrip"
    app = load_app()
    golden_ok = (encode(app) == (GOLDEN / "l3_ipv4.pofb").read_bytes()
                 and disassemble(app) == (GOLDEN / "l3_ipv4.dis").read_text()
                 and decode((GOLDEN / "l3_ipv4.pofb").read_bytes()) == app)
    return golden_ok, f"1000 random programs roundtrip in both codecs, golden files {'match' if golden_ok else 'differ'}"


def c9_active_datapath():
    outcomes = []
    for mode in Mode:
        rt = SwitchRuntime()
        rt.load(assemble(ACTIVE_SRC))
        rt.set_mode(mode)
        outcomes.append(all(ok for _, _, ok in rt.run_script(read_script(ACTIVE_SCRIPT))))
    return all(outcomes), "interp " + ("ok" if outcomes[0] else "failed") + ", compile " + \
        ("ok" if outcomes[1] else "failed")


CRITERIA = {
    1: ("goto_table cost exactness", c1_goto_table_exact),
    2: ("compiler reduction range", c2_reduction_range),
    3: ("throughput doubling", c3_throughput_doubling),
    4: ("chip-fit consistency", c4_chip_fit),
    5: ("engine equivalence", c5_engine_equivalence),
    6: ("lookup oracle", c6_lookup_oracle),
    7: ("checksum invariant", c7_checksum_invariant),
    8: ("codec/asm roundtrips", c8_roundtrips),
    9: ("active datapath scenario", c9_active_datapath),
}


def report_line(n: int) -> str:
    ok, detail = RESULTS[n]
    return f"criterion {n} {'PASS' if ok else 'FAIL'}: {CRITERIA[n][0]}: {detail}"


def evaluate(n: int) -> tuple[bool, str]:
    try:
        RESULTS[n] = CRITERIA[n][1]()
    except Exception as exc:  # a crash counts as a failure with its reason
        RESULTS[n] = (False, f"{type(exc).__name__}: {exc}")
    print(report_line(n))
    return RESULTS[n]


@pytest.mark.parametrize("n", sorted(CRITERIA))
def test_criterion(n):
    ok, detail = evaluate(n)
    assert ok, detail


if __name__ == "__main__":
    sys.exit(0 if all([evaluate(n)[0] for n in sorted(CRITERIA)]) else 1)
