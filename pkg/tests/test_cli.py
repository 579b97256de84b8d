import csv
import json
from pathlib import Path

import pytest

from grassroots.cli import analyze_rows, main
from grassroots.sim.eventlog import read_log, replay

SCEN = Path(__file__).resolve().parent.parent / "scenarios"


@pytest.fixture(scope="module")
def runs(tmp_path_factory):
    out = {}
    for name in ("two_friends", "community", "doublespend", "hawala_broken", "bank_risk"):
        d = tmp_path_factory.mktemp(name)
        assert main(["run", str(SCEN / f"{name}.toml"), "--out", str(d)]) == 0
        out[name] = d
    return out


def test_run_writes_outputs(runs):
    d = runs["two_friends"]
    assert {p.name for p in d.iterdir()} == {"eventlog.jsonl", "metrics.csv", "final-state.json"}
    state = json.loads((d / "final-state.json").read_text())
    assert state["schema"] == 1 and state["stalled"] == []
    with open(d / "metrics.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert {r["agent"] for r in rows} == {"alice", "bob"}


def test_run_is_reproducible(runs, tmp_path):
    assert main(["run", str(SCEN / "two_friends.toml"), "--out", str(tmp_path)]) == 0
    for f in ("eventlog.jsonl", "metrics.csv", "final-state.json"):
        assert (tmp_path / f).read_bytes() == (runs["two_friends"] / f).read_bytes()


def test_run_horizon_zero(tmp_path):
    assert main(["run", str(SCEN / "two_friends.toml"), "--horizon", "0", "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "eventlog.jsonl").read_text().splitlines()
    assert len(lines) == 2
    assert json.loads(lines[0])["kind"] == "header" and json.loads(lines[1])["kind"] == "footer"


def test_usage_errors(tmp_path, capsys):
    assert main(["run", str(tmp_path / "missing.toml")]) == 2
    assert main(["run", str(SCEN / "two_friends.toml"), "--bogus"]) == 2
    assert main([]) == 2
    assert main(["grassroots", "--depth", "9"]) == 2
    assert "BudgetExceeded" in capsys.readouterr().err
    bad = tmp_path / "bad.toml"
    bad.write_text('schema = 1\nname = "x"\n[[agents]]\nname = "a"\n[[agents]]\nname = "a"\n')
    assert main(["run", str(bad)]) == 2


def test_verify_clean(runs, capsys):
    log = str(runs["community"] / "eventlog.jsonl")
    for mode in ("refinement", "safety", "liveness"):
        assert main(["verify", log, "--mode", mode]) == 0
    assert "OK" in capsys.readouterr().out


def test_verify_doublespend_fails_with_round(runs, capsys):
    log = str(runs["doublespend"] / "eventlog.jsonl")
    assert main(["verify", log, "--mode", "safety"]) == 1
    out = capsys.readouterr().out
    assert "round" in out and "FAIL" in out


def test_verify_liveness_flags_dodger(runs, capsys):
    log = str(runs["hawala_broken"] / "eventlog.jsonl")
    assert main(["verify", log, "--mode", "liveness"]) == 1
    assert "starvation" in capsys.readouterr().out


def test_verify_truncated_log(runs, tmp_path):
    lines = (runs["community"] / "eventlog.jsonl").read_text().splitlines()
    cut = tmp_path / "cut.jsonl"
    cut.write_text("\n".join(lines[:-3]) + "\n")
    assert main(["verify", str(cut)]) == 2
    assert main(["analyze", str(cut)]) == 2


def test_analyze_matches_recomputation(runs, tmp_path, capsys):
    log = runs["bank_risk"] / "eventlog.jsonl"
    rp = replay(read_log(log))
    out_csv = tmp_path / "a.csv"
    assert main(["analyze", str(log), "--at", "1", "--csv", str(out_csv)]) == 0
    assert "note:" in capsys.readouterr().out
    with open(out_csv) as fh:
        got = list(csv.DictReader(fh))
    want = analyze_rows(rp, 1)
    assert [r["agent"] for r in got] == [w["agent"] for w in want]
    assert [r["fd"] for r in got] == [str(w["fd"]) for w in want]


def test_analyze_final_matches_metrics(runs):
    d = runs["bank_risk"]
    rp = replay(read_log(d / "eventlog.jsonl"))
    last = rp.run.end_round
    with open(d / "metrics.csv") as fh:
        rows = [r for r in csv.DictReader(fh) if int(r["round"]) == last]
    want = analyze_rows(rp, None)
    assert [(r["agent"], r["fd"]) for r in rows] == [(w["agent"], str(w["fd"])) for w in want]


def test_grassroots_commands(capsys):
    assert main(["grassroots"]) == 0
    assert "CONSISTENT" in capsys.readouterr().out
    assert main(["grassroots", "--protocol", "ata"]) == 1
    assert "COUNTEREXAMPLE" in capsys.readouterr().out


def test_enumerate_claims(runs, capsys):
    log = str(runs["doublespend"] / "eventlog.jsonl")
    assert main(["enumerate-claims", log]) == 0
    out = capsys.readouterr().out
    assert "Settled-Accepted" in out and "Settled-Rejected" in out
    assert main(["enumerate-claims", log, "--json"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert sorted(d["claimant"] for d in data) == ["q", "s"]
