import json

import pytest

from siamdibs.cli import main, parse_config_text

TINY = """
data.n_c = 3
data.N_c = 10
data.d = 4
scenario.kind = dense
scenario.n_pairs_target = 60
noise.kind = pln
noise.effective = 0.1
"""


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_parse_key_value_and_json():
    doc = parse_config_text("a.b = 3\n# comment\nc = [1, 2]\nd = dense  # trailing\n")
    assert doc == {"a": {"b": 3}, "c": [1, 2], "d": "dense"}
    assert parse_config_text('{"x": {"y": 0.5}}') == {"x": {"y": 0.5}}


def test_bounds_prints_csv(tmp_path, capsys):
    cfg = write(tmp_path, "b.cfg", "P = [0.1]\nn_c = [2, 10]\nN_c = 50\n")
    assert main(["bounds", "--config", cfg]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "P,n_c,N_c,e_sim,e_diff,lower,upper"
    assert lines[1].startswith("0.1,2,50,")
    lower = float(lines[2].split(",")[5])
    e_sim = float(lines[2].split(",")[3])
    assert lower - e_sim == pytest.approx(0.005)


def test_build_pairs_then_analyze(tmp_path):
    cfg = write(tmp_path, "p.cfg", TINY)
    out = tmp_path / "pairs"
    assert main(["build-pairs", "--config", cfg, "--seed", "4", "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["runs"][0]["n_pairs"] == 60
    acfg = write(tmp_path, "a.cfg", f"pairs = {out / 'run_0.csv'}\nmax_nodes = 12\n")
    aout = tmp_path / "an"
    assert main(["analyze", "--config", acfg, "--out", str(aout)]) == 0
    report = json.loads((aout / "summary.json").read_text())
    assert report["n_edges"] == 60 and report["min_violation_fraction"] is None


def test_train_writes_outputs(tmp_path):
    cfg = write(tmp_path, "t.cfg", TINY + "width = 8\ntrain.epochs = 4\ndump_params = true\n")
    out = tmp_path / "t"
    assert main(["train", "--config", cfg, "--out", str(out)]) == 0
    for name in ("run_0.csv", "curves.csv", "summary.json", "params.bin", "params.json"):
        assert (out / name).exists()


@pytest.mark.parametrize("text", ["nonsense line\n", "data.n_c = 1\n", "bogus = 3\n",
                                  "noise.kind = cauchy\n", "scenario.n_pairs_target = 61\n"])
def test_config_errors_exit_2(tmp_path, text):
    cfg = write(tmp_path, "bad.cfg", text)
    assert main(["build-pairs", "--config", cfg, "--out", str(tmp_path / "o")]) == 2


def test_missing_config_file_exit_2(tmp_path):
    assert main(["bounds", "--config", str(tmp_path / "nope.cfg")]) == 2


def test_bad_subcommand_exit_2():
    assert main(["frobnicate"]) == 2


def test_runtime_failure_exit_3(tmp_path):
    acfg = write(tmp_path, "a.cfg", f"pairs = {tmp_path / 'missing.csv'}\n")
    assert main(["analyze", "--config", acfg, "--out", str(tmp_path / "o")]) == 3


def test_online_budget_is_config_error(tmp_path):
    cfg = write(tmp_path, "o.cfg", "online_pairs = 10\n")
    assert main(["online-offline", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
