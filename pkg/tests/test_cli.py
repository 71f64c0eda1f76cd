import json

import pytest

from scenarios import ACTIVE_SCRIPT, ACTIVE_SRC
from pofvm.apps import GOLDEN_PACKET
from pofvm.cli import main


@pytest.fixture
def files(tmp_path):
    prog = tmp_path / "active.pof"
    prog.write_text(ACTIVE_SRC)
    script = tmp_path / "pkts.txt"
    script.write_text(ACTIVE_SCRIPT)
    return tmp_path, prog, script


def test_session_journal_carries_state(files, capsys):
    d, prog, script = files
    sess = str(d / "s.journal")
    assert main(["--session", sess, "load", str(prog)]) == 0
    assert main(["--session", sess, "mode", "compile"]) == 0
    assert main(["--session", sess, "inject", str(script)]) == 0
    capsys.readouterr()
    assert main(["--session", sess, "stats", "--json"]) == 0
    st = json.loads(capsys.readouterr().out)
    assert st["tables"]["1"] == {"hits": 1, "misses": 1, "entries": 1}
    assert st["modes"]["compile"]["packets"] == 2
    assert st["ports"] == {"7": 1}


def test_failed_expect_exits_one(files, tmp_path, capsys):
    d, prog, _ = files
    bad = d / "bad.txt"
    bad.write_text("in 0 " + "00" * 64 + " expect out 9\n")
    sess = str(d / "s.journal")
    main(["--session", sess, "load", str(prog)])
    assert main(["--session", sess, "inject", str(bad)]) == 1
    assert "EXPECT FAILED" in capsys.readouterr().out


def test_script_mode_runs_verbs_in_one_runtime(files, capsys):
    d, prog, script = files
    cmds = d / "cmds.txt"
    cmds.write_text(f"load {prog}\nmode interp\ninject {script}\nstats\nadd-entry 1 0x55 0xff 3 --params 09\n"
                    f"dump 2\n")
    assert main(["script", str(cmds)]) == 0
    out = capsys.readouterr().out
    assert "ok" in out and "mode interp: packets=2" in out


def test_load_errors_exit_two(tmp_path, capsys):
    bad = tmp_path / "bad.pof"
    bad.write_text("block 1 {\n  frob\n}\nstart 1\n")
    assert main(["load", str(bad)]) == 2
    assert "2:3" in capsys.readouterr().err


def test_inject_writes_port_sinks(tmp_path, capsys):
    script = tmp_path / "g.txt"
    script.write_text(f"in 1 {GOLDEN_PACKET.hex()} expect out 3\n")
    sess = str(tmp_path / "s.journal")
    main(["--session", sess, "load", "@l3_ipv4"])
    assert main(["--session", sess, "inject", str(script), "--ports", str(tmp_path / "sinks")]) == 0
    assert (tmp_path / "sinks" / "port_3.hex").read_text().strip().startswith("0200000000020200")


def test_bench_out_writes_report_files(tmp_path, capsys):
    assert main(["bench", "goto-sweep", "--csv", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert out.splitlines()[0].startswith("mode,case,i,s")
    assert {p.name for p in tmp_path.iterdir()} == {"goto_sweep.csv", "goto_sweep.json", "goto_sweep.png"}
    assert main(["bench", "app", "--json"]) == 0
    assert json.loads(capsys.readouterr().out)["report"] == "app"


def test_fit_chip_from_csv(tmp_path, capsys):
    f = tmp_path / "t.csv"
    f.write_text("i,s,mpps,latency\n496,94,77.5,4468\n1089,146,35.3,6361\n550,74,69.8,4022\n")
    assert main(["fit-chip", str(f)]) == 0
    assert "cf=3.842" in capsys.readouterr().out


def test_build_and_disasm_roundtrip(tmp_path, capsys):
    img = tmp_path / "l3.pofb"
    assert main(["build", "@l3_ipv4", str(img)]) == 0
    capsys.readouterr()
    assert main(["disasm", str(img)]) == 0
    text = capsys.readouterr().out
    src = tmp_path / "l3.pof"
    src.write_text(text)
    assert main(["load", str(src)]) == 0
