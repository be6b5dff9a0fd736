import csv
import io
import json
import subprocess
import sys

import pytest

from sqpc import __version__
from sqpc.cli import main, parse_hex_bits, parse_placement


def invoke(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_hex_decoding():
    assert parse_hex_bits("0xA5", 8) == [1, 0, 1, 0, 0, 1, 0, 1]
    assert parse_hex_bits("3", 4) == [0, 0, 1, 1]


def test_placement_parsing():
    assert parse_placement("concat", 2) == (0, 1, 2, 3)
    assert parse_placement("swap", 2) == (2, 3, 0, 1)
    assert parse_placement("perm:2,1,4,3", 2) == (1, 0, 3, 2)


def test_run_equal(capsys):
    code, out, _ = invoke(capsys, "run", "--n", "8", "--x", "0xA5", "--y", "0xA5", "--seed", "7")
    assert code == 0
    data = json.loads(out)
    assert data["outcome"] == "equal" and data["rounds_used"] == 8 and data["seed"] == 7


def test_run_unequal_stops_at_first_difference(capsys):
    code, out, _ = invoke(capsys, "run", "--n", "4", "--x", "0x8", "--y", "0xA", "--seed", "1")
    assert code == 0
    data = json.loads(out)
    assert data["outcome"] == "unequal" and data["rounds_used"] == 3


def test_run_abort_exits_one_and_dumps_knowledge(capsys):
    code, out, _ = invoke(capsys, "run", "--n", "8", "--x", "0xA5", "--y", "0x25", "--seed", "7",
                          "--strategy", "eve-mr")
    assert code == 1
    data = json.loads(out)
    assert data["outcome"] == "aborted" and data["aborted_check"] in ("ctrl", "sift")
    assert len(data["knowledge"]["learned_A"]) == 16


def test_run_exact_mode_reports_distribution(capsys):
    code, out, _ = invoke(capsys, "run", "--n", "2", "--x", "1", "--y", "1", "--seed", "3", "--mode", "exact")
    assert code == 0
    assert json.loads(out)["distribution"]["equal"]["num"] == 1


def test_run_writes_transcript(capsys, tmp_path):
    path = tmp_path / "t.jsonl"
    code, _, _ = invoke(capsys, "run", "--n", "2", "--x", "2", "--y", "3", "--seed", "9", "--transcript", str(path))
    assert code == 0
    events = [json.loads(line) for line in path.read_text().splitlines()]
    assert all(e["version"] == "transcript_v1" for e in events)
    assert events[-1]["event_type"] == "result"


def test_run_with_permutation_placement(capsys):
    code, out, _ = invoke(capsys, "run", "--n", "2", "--x", "1", "--y", "1", "--seed", "3",
                          "--placement", "perm:3,1,4,2")
    assert code == 0 and json.loads(out)["outcome"] == "equal"


def test_attack_report(capsys):
    code, out, _ = invoke(capsys, "attack", "--strategy", "eve-mr", "--trials", "20000", "--seed", "1")
    assert code == 0
    data = json.loads(out)
    assert data["exact_p"] == {"num": 1, "den": 2, "value": 0.5}
    assert data["within_3sigma"]


def test_attack_with_run_length(capsys):
    _, out, _ = invoke(capsys, "attack", "--strategy", "alice-ir", "--trials", "10", "--seed", "1", "--n", "2")
    assert json.loads(out)["per_run_abort"]["num"] == 15


def test_efficiency(capsys):
    code, out, _ = invoke(capsys, "efficiency", "--n", "16", "--delta", "0")
    assert code == 0
    eta = json.loads(out)["eta"]
    assert (eta["num"], eta["den"]) == (1, 19)


def test_table1_csv(capsys):
    code, out, _ = invoke(capsys, "table1", "--format", "csv")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == 0 and len(rows) == 16
    assert all(r["passed"] == "True" for r in rows)


def test_leakage(capsys):
    code, out, _ = invoke(capsys, "leakage", "--n", "2", "--trials", "300", "--seed", "5")
    data = json.loads(out)
    assert code == 0 and data["analytic"]["den"] == 2


def test_report_bundle(capsys):
    code, out, _ = invoke(capsys, "report", "--seed", "11", "--trials", "50", "--leakage-trials", "20")
    assert code == 0
    data = json.loads(out)
    assert data["seed"] == 11 and data["version"] == __version__
    assert data["table1"]["passed"]
    assert len(data["detection"]) == 7 and len(data["leakage"]) == 3
    assert {"efficiency", "sample_run"} <= set(data)


def test_report_csv(capsys):
    code, out, _ = invoke(capsys, "report", "--seed", "11", "--trials", "20", "--leakage-trials", "10",
                          "--format", "csv")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == 0
    assert {"section": "meta", "key": "seed", "value": "11"} in rows


@pytest.mark.parametrize(
    "argv",
    [
        ["run", "--n", "8", "--x", "0x1A5", "--y", "0", "--seed", "1"],
        ["run", "--n", "8", "--x", "zz", "--y", "0", "--seed", "1"],
        ["run", "--n", "3", "--x", "1", "--y", "1", "--seed", "1"],
        ["run", "--n", "2", "--x", "1", "--y", "1", "--seed", "1", "--placement", "perm:1,1,2,3"],
        ["attack", "--strategy", "mallory"],
        ["efficiency", "--n", "4", "--m", "3"],
        ["leakage", "--n", "1", "--trials", "5", "--seed", "1"],
        ["run", "--n", "2"],
        [],
    ],
)
def test_usage_errors_exit_two(capsys, argv):
    with pytest.raises(SystemExit) as exc:
        sys.exit(main(argv))
    assert exc.value.code == 2
    assert "usage:" in capsys.readouterr().err


def test_unknown_strategy_lists_valid_names(capsys):
    with pytest.raises(SystemExit):
        main(["attack", "--strategy", "mallory"])
    err = capsys.readouterr().err
    assert "eve-mr" in err and "tp-fake" in err


def test_seed_from_environment(capsys, monkeypatch):
    monkeypatch.setenv("SQPC_SEED", "42")
    _, out, err = invoke(capsys, "run", "--n", "2", "--x", "1", "--y", "1")
    assert json.loads(out)["seed"] == 42 and err == ""


def test_fresh_seed_is_printed(capsys, monkeypatch):
    monkeypatch.delenv("SQPC_SEED", raising=False)
    _, out, err = invoke(capsys, "run", "--n", "2", "--x", "1", "--y", "1")
    seed = json.loads(out)["seed"]
    assert f"seed: {seed}" in err


def _cli(*argv):
    return subprocess.run([sys.executable, "-m", "sqpc", *argv], capture_output=True, check=False)


def test_output_is_byte_identical():
    argv = ("run", "--n", "8", "--x", "0x3C", "--y", "0x3D", "--seed", "1234", "--strategy", "tp-fake")
    a, b = _cli(*argv), _cli(*argv)
    assert a.returncode == b.returncode == 0
    assert a.stdout == b.stdout and a.stdout


def test_attack_output_is_byte_identical():
    argv = ("attack", "--strategy", "alice-mr", "--trials", "3000", "--seed", "5", "--format", "csv")
    assert _cli(*argv).stdout == _cli(*argv).stdout
