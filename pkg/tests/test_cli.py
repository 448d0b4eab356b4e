import io
import json
import subprocess
import sys

import pytest

from dsagg.cli import EXIT_BUDGET, EXIT_FAIL, EXIT_OK, EXIT_USAGE, main
from dsagg.netsim import Transcript


def call(*argv):
    out = io.StringIO()
    code = main(list(argv), out=out)
    return code, out.getvalue()


@pytest.fixture(autouse=True)
def _in_tmp(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("DSA_BUDGET", raising=False)


def test_run_happy_path(tmp_path):
    code, text = call("run", "--users", "3", "--collusion", "0", "--modulus", "2", "--len", "1", "--seed", "7")
    assert code == EXIT_OK
    assert (tmp_path / "transcript.jsonl").exists()
    assert "agreement: yes" in text
    assert "seed=7" in text


def test_run_trivial_regime_messages(capsys):
    assert call("run", "--users", "2", "--seed", "1")[0] == EXIT_USAGE
    assert "no meaningful security" in capsys.readouterr().err.lower()
    assert call("run", "--users", "4", "--collusion", "2", "--seed", "1")[0] == EXIT_USAGE


def test_run_missing_users():
    assert call("run", "--seed", "1")[0] == EXIT_USAGE


def test_run_with_inputs_file(tmp_path):
    (tmp_path / "w.txt").write_text("1\n0\n1\n")
    code, text = call("run", "--users", "3", "--seed", "7", "--inputs", "w.txt", "--out", "t.jsonl", "--format", "machine")
    assert code == EXIT_OK
    row = json.loads(text)
    assert row["sum"] == [0] and row["agreement"] is True
    golden = (tmp_path / "t.jsonl").read_text()
    assert Transcript.from_text(golden).results()[1].coords == (0,)


def test_run_bad_inputs_file(tmp_path):
    (tmp_path / "w.txt").write_text("1\n0\n")
    assert call("run", "--users", "3", "--seed", "7", "--inputs", "w.txt")[0] == EXIT_USAGE
    (tmp_path / "w.txt").write_text("1\n0\n2\n")
    assert call("run", "--users", "3", "--seed", "7", "--inputs", "w.txt")[0] == EXIT_USAGE


def test_run_without_seed_records_one(tmp_path):
    code, _ = call("run", "--users", "3", "--out", "t.jsonl")
    assert code == EXIT_OK
    header = json.loads((tmp_path / "t.jsonl").read_text().splitlines()[0])
    assert isinstance(header["seed"], int)


def test_identical_invocations_byte_identical(tmp_path):
    args = ["run", "--users", "5", "--collusion", "1", "--modulus", "7", "--len", "3", "--seed", "11",
            "--order", "seeded-shuffle"]
    a = call(*args, "--out", "a.jsonl")
    b = call(*args, "--out", "b.jsonl")
    assert a[1].replace("a.jsonl", "") == b[1].replace("b.jsonl", "")
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    v1 = call("verify", "--users", "4", "--collusion", "1", "--format", "machine")
    v2 = call("verify", "--users", "4", "--collusion", "1", "--format", "machine")
    assert v1 == v2


def test_verify_k3_all_pass():
    code, text = call("verify", "--users", "3", "--collusion", "0", "--modulus", "2", "--len", "1")
    assert code == EXIT_OK
    assert "FAIL" not in text
    assert text.count("PASS") == 9


def test_verify_k5_t2():
    assert call("verify", "--users", "5", "--collusion", "2", "--modulus", "2", "--len", "1")[0] == EXIT_OK


def test_verify_budget_exceeded(capsys):
    code, _ = call("verify", "--users", "8", "--modulus", "2", "--len", "4")
    assert code == EXIT_BUDGET
    assert str(2**60) in capsys.readouterr().err


def test_verify_budget_flag_and_env(monkeypatch):
    assert call("verify", "--users", "3", "--budget", "31")[0] == EXIT_BUDGET
    monkeypatch.setenv("DSA_BUDGET", "31")
    assert call("verify", "--users", "3")[0] == EXIT_BUDGET
    assert call("verify", "--users", "3", "--budget", "32")[0] == EXIT_OK


def test_verify_selected_checks_and_report(tmp_path):
    code, text = call("verify", "--users", "4", "--checks", "lemma3,security", "--out", "r.jsonl",
                      "--format", "machine")
    assert code == EXIT_OK
    rows = [json.loads(line) for line in text.splitlines()]
    assert {r["check"] for r in rows} == {"lemma3", "security"}
    assert (tmp_path / "r.jsonl").read_text() == text


def test_verify_unknown_check():
    assert call("verify", "--users", "3", "--checks", "lemma9")[0] == EXIT_USAGE


def _rate_rows(text):
    return [line.split() for line in text.splitlines()[1:]]


def test_rates_k3():
    code, text = call("rates", "--users", "3")
    assert code == EXIT_OK
    assert _rate_rows(text) == [["3", "0", "1", "1", "2", "(1,1,2)", "yes"]]


def test_rates_k6():
    rows = _rate_rows(call("rates", "--users", "6")[1])
    assert rows == [["6", "0", "1", "1", "5", "(1,1,5)", "yes"]]


def test_rates_sweep_machine():
    code, text = call("rates", "--users", "3-8", "--format", "machine")
    assert code == EXIT_OK
    rows = [json.loads(line) for line in text.splitlines()]
    assert [r["K"] for r in rows] == list(range(3, 9))
    assert all(r["R_ZSigma"] == r["K"] - 1 and r["optimal"] for r in rows)


def test_single_users_value_required_outside_rates():
    assert call("verify", "--users", "3-4")[0] == EXIT_USAGE


def test_replay_roundtrip(tmp_path):
    call("run", "--users", "4", "--collusion", "1", "--seed", "3", "--out", "t.jsonl")
    code, text = call("replay", "t.jsonl")
    assert code == EXIT_OK and "identical" in text
    lines = (tmp_path / "t.jsonl").read_text().splitlines()
    ev = json.loads(lines[-1])
    raw = bytearray.fromhex(ev["payload"])
    raw[0] ^= 1
    ev["payload"] = raw.hex()
    lines[-1] = json.dumps(ev)
    (tmp_path / "bad.jsonl").write_text("\n".join(lines) + "\n")
    assert call("replay", "bad.jsonl")[0] == EXIT_FAIL


def test_replay_missing_or_malformed(tmp_path):
    assert call("replay", "nope.jsonl")[0] == EXIT_USAGE
    (tmp_path / "junk.jsonl").write_text("garbage\n")
    assert call("replay", "junk.jsonl")[0] == EXIT_USAGE


def test_config_file_and_flag_precedence(tmp_path):
    (tmp_path / "c.cfg").write_text("schema_version=1\n# demo\nusers=4\ncollusion=1\nmodulus=7\nseed=5\nformat=machine\n")
    code, text = call("run", "--config", "c.cfg")
    assert code == EXIT_OK
    row = json.loads(text)
    assert (row["K"], row["T"], row["q"], row["seed"]) == (4, 1, 7, 5)
    row = json.loads(call("run", "--config", "c.cfg", "--users", "5", "--seed", "6")[1])
    assert (row["K"], row["seed"]) == (5, 6)


@pytest.mark.parametrize(
    "content", ["users=3\n", "schema_version=2\nusers=3\n", "schema_version=1\nwidth=3\n", "schema_version=1\nusers\n"]
)
def test_config_file_rejected(tmp_path, content):
    (tmp_path / "c.cfg").write_text(content)
    assert call("run", "--config", "c.cfg")[0] == EXIT_USAGE


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "dsagg", "rates", "--users", "4"], capture_output=True, text=True, cwd=tmp_path
    )
    assert proc.returncode == 0
    assert "(1,1,3)" in proc.stdout
