import json
import os
import subprocess
import sys

import pytest

from soslab.cli import main


def records(out):
    return [json.loads(line) for line in out.splitlines() if line.strip()]


@pytest.mark.parametrize("sos,t,code,solvable", [
    ("{{1},{1,2},{1,3},{2,3}}", 1, 3, False),
    ("{{}}", 7, 0, True),
    ("{{1},{2}}", 0, 0, True),
])
def test_decide(capsys, sos, t, code, solvable):
    assert main(["decide", "--sos", sos, "--t", str(t)]) == code
    (rec,) = records(capsys.readouterr().out)
    assert rec["solvable"] is solvable


def test_decide_parse_error(capsys):
    assert main(["decide", "--sos", "{{1},{x}}", "--t", "0"]) == 2
    assert "column 7" in capsys.readouterr().err


def test_usage_errors(capsys):
    assert main([]) == 2
    assert main(["bounds", "--d", "x", "--t", "1"]) == 2
    assert main(["run", "--protocol", "alg1", "--n", "6", "--t", "1"]) == 2  # no --sos
    assert main(["run", "--protocol", "alg2", "--d", "2", "--n", "3", "--t", "1",
                 "--crash", "1@0", "--crash", "2@0"]) == 2


def test_bounds(capsys):
    assert main(["bounds", "--d", "3", "--t", "5"]) == 0
    assert records(capsys.readouterr().out) == [{"d": 3, "t": 5, "lower": 11, "upper": 12}]


def test_run_is_deterministic_and_replays(capsys, tmp_path):
    args = ["run", "--protocol", "alg2", "--d", "2", "--t", "1", "--n", "3", "--seed", "42"]
    assert main(args) == 0
    first = capsys.readouterr().out
    assert main(args) == 0
    assert capsys.readouterr().out == first
    trace = tmp_path / "trace.jsonl"
    trace.write_text(first)
    assert main(args[:-2] + ["--replay", str(trace)]) == 0
    assert capsys.readouterr().out == first


def test_seed_from_environment(capsys, monkeypatch):
    args = ["run", "--protocol", "alg2", "--d", "2", "--t", "1", "--n", "3"]
    monkeypatch.setenv("SOSLAB_SEED", "42")
    main(args)
    from_env = capsys.readouterr().out
    main(args + ["--seed", "42"])
    assert capsys.readouterr().out == from_env
    monkeypatch.setenv("SOSLAB_SEED", "abc")
    assert main(args) == 2


def test_explore_alg3(capsys):
    assert main(["explore", "--protocol", "alg3", "--sos", "{{0},{1}}", "--n", "1"]) == 0
    recs = records(capsys.readouterr().out)
    assert sorted(r["output_set"] for r in recs) == ["{0}", "{1}"]


def test_adversary_exit_codes(capsys):
    assert main(["adversary", "--protocol", "alg2", "--d", "2", "--t", "1", "--n", "2", "--relaxed"]) == 3
    (rec,) = records(capsys.readouterr().out)
    assert rec["violated"] and rec["crash_set"] == [2]
    assert main(["adversary", "--protocol", "alg2", "--d", "2", "--t", "1", "--n", "3", "--seed", "5"]) == 0


def test_valence_extract_and_file(capsys, tmp_path):
    dump = tmp_path / "g.txt"
    assert main(["valence", "--protocol", "alg3", "--sos", "{{0},{1}}", "--n", "1",
                 "--dump", str(dump)]) == 0
    summary = records(capsys.readouterr().out)[-1]["summary"]
    assert summary["input_valence"] == ["{0}", "{1}"] and summary["critical"]
    assert main(["valence", "--file", str(dump), "--states"]) == 0
    recs = records(capsys.readouterr().out)
    assert recs[-1]["summary"] == summary
    assert len(recs) == summary["states"] + 1
    assert main(["valence"]) == 2


def test_campaign(capsys, tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text("# soslab-campaign v1\n[campaign]\nname = c\nprotocol = alg1\n"
                   "sos = {{1},{3},{1,2},{1,3},{2,3}}\nn = 6\nt = 1\nseeds = 0:5\n"
                   "checks = safety, model, completeness\n")
    assert main(["campaign", str(cfg)]) == 0
    recs = records(capsys.readouterr().out)
    assert [r["check"] for r in recs] == ["sweep", "completeness"]
    assert recs[1]["status"] == "inconclusive" or recs[1]["status"] == "passed"
    assert main(["campaign", str(cfg), "--strategy", "witness"]) == 0
    cfg.write_text("[campaign]\n")
    assert main(["campaign", str(cfg)]) == 2


def test_module_entry_point():
    env = dict(os.environ, PYTHONPATH=os.pathsep.join(sys.path))
    proc = subprocess.run([sys.executable, "-m", "soslab", "bounds", "--d", "2", "--t", "1"],
                          capture_output=True, text=True, env=env, check=False)
    assert proc.returncode == 0
    assert json.loads(proc.stdout) == {"d": 2, "t": 1, "lower": 3, "upper": 3}
