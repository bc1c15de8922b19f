import os
import shutil
import subprocess
import sys

import pytest

from conftest import PROGRAMS
from spnet.cli import main, parse_budget
from spnet.services import HEADER, load_trace, lookup_event, parse_trace

LABEL1 = os.path.join(PROGRAMS, "label1.spnet")
LABEL1_IN = os.path.join(PROGRAMS, "label1.in")


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_check_ok_and_verbose(capsys):
    assert main(["check", LABEL1, "-v"]) == 0
    out = capsys.readouterr().out
    assert out.splitlines()[0].startswith("[]\t")


def test_check_exit_codes(tmp_path, capsys):
    assert main(["check", write(tmp_path, "p.spnet", "A ..")]) == 2
    assert ":1:5\tPARSE" in capsys.readouterr().err
    assert main(["check", write(tmp_path, "s.spnet", "box A ((a) -> (a)); A .. Z")]) == 1
    assert "SIG001" in capsys.readouterr().out


def test_run_writes_outputs_and_trace(tmp_path, capsys):
    trace = str(tmp_path / "t.trace")
    assert main(["run", LABEL1, "--input", LABEL1_IN, "--trace", trace]) == 0
    outs = capsys.readouterr().out.split()
    assert outs
    text = open(trace).read()
    assert text.startswith(HEADER)
    tr = parse_trace(text)
    assert tr.header["config"]["seed"] == 0 and tr.events
    assert all(len(e.line().split("\t")) == 4 for e in tr.events)


def test_inspect_services(tmp_path, capsys):
    trace = str(tmp_path / "t.trace")
    main(["run", LABEL1, "--input", LABEL1_IN, "--trace", trace])
    capsys.readouterr()
    tr = load_trace(trace)
    ev = next(i for i, e in enumerate(tr.events) if e.kind == "box_call" and e.payload.startswith("{b="))
    assert main(["inspect", trace, "lookup", str(ev), "Y"]) == 0
    assert capsys.readouterr().out.strip() == lookup_event(tr, ev, "Y")
    assert main(["inspect", trace, "lookup", str(ev), "X", "--functional"]) == 0
    assert capsys.readouterr().out.strip().startswith("[1;")
    assert main(["inspect", trace, "lookup", str(ev), "Nope"]) == 3
    assert "UnknownLabel" in capsys.readouterr().err
    assert main(["inspect", trace, "arity", "[]", "--at", "0"]) == 0
    assert capsys.readouterr().out.startswith("liveness=")
    assert main(["inspect", trace, "state", "[1]"]) == 0
    assert '"kind"' in capsys.readouterr().out


def test_runtime_exception_exit_code(tmp_path, capsys):
    prog = write(tmp_path, "f.spnet", "box F ((x) -> (x)) = { emit {x = x} } fault Boom when x = 2;\nF")
    inp = write(tmp_path, "f.in", "{x=1}\n{x=2}\n")
    assert main(["run", prog, "--input", inp]) == 3
    cap = capsys.readouterr()
    assert "runtime exception: Boom" in cap.err
    assert "{x=1}" in cap.out


def test_missing_resources_is_config_error(tmp_path, capsys):
    prog = os.path.join(PROGRAMS, "x08_shared_placement.spnet")
    assert main(["run", prog, "--input", os.path.join(PROGRAMS, "default.in")]) == 1


def test_budget_option():
    assert parse_budget("mc=64MB") == ("mc", float(64 * 2**20))
    assert parse_budget("mp=5") == ("mp", 5000.0)
    assert parse_budget("mfl=10ms") == ("mfl", 10_000_000.0)
    with pytest.raises(Exception):
        parse_budget("zz=3")


def test_budget_applies_at_root(tmp_path, capsys):
    prog = write(tmp_path, "b.spnet", "box A ((a) -> (a)) = { emit {a = a} } cost(storage=64B);\nA")
    inp = write(tmp_path, "b.in", "{a=1}\n")
    assert main(["run", prog, "--input", inp, "--budget", "mc=32B"]) == 3
    assert "Violation(mc)" in capsys.readouterr().err


def test_plugin_host_box(tmp_path, capsys):
    plugin = write(tmp_path, "dbl.py", "from spnet.boxes import register_box\n"
                   "register_box('Dbl', '(a) -> (a)', lambda a: [{'a': 2 * a}])\n")
    prog = write(tmp_path, "h.spnet", "box Dbl ((a) -> (a));\nDbl")
    inp = write(tmp_path, "h.in", "{a=21}\n")
    trace = str(tmp_path / "h.trace")
    assert main(["run", prog, "--input", inp, "--plugin", plugin, "--trace", trace]) == 0
    assert capsys.readouterr().out.strip() == "{a=42}"
    assert main(["inspect", trace, "arity", "[]"]) == 0


@pytest.mark.skipif(shutil.which("spnet") is None, reason="console script not installed")
def test_console_script():
    r = subprocess.run(["spnet", "check", LABEL1], capture_output=True, text=True)
    assert r.returncode == 0
    r = subprocess.run([sys.executable, "-m", "spnet.cli", "run", LABEL1, "--input", LABEL1_IN],
                       capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout
