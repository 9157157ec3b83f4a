import json

import pytest

from propalloc.cli import main


@pytest.fixture
def files(tmp_path):
    game = tmp_path / "g.json"
    game.write_text(json.dumps({"bidders": [
        {"valuation": {"kind": "linear", "slope": 1}, "budget": 2 / 9},
        {"valuation": {"kind": "linear", "slope": 0.5}},
    ]}))
    profile = tmp_path / "p.json"
    profile.write_text('{"bids": [0.2222222222222222, 0.1111111111111111]}')
    bayes = tmp_path / "b.json"
    bayes.write_text(json.dumps({"bidders": [
        {"types": [{"valuation": {"kind": "linear", "slope": 1}, "prob": 1}]},
        {"types": [{"valuation": {"kind": "linear", "slope": 1}, "prob": 0.5},
                   {"valuation": {"kind": "linear", "slope": 0.2}, "prob": 0.5}]},
    ]}))
    spec = tmp_path / "e.json"
    spec.write_text('{"instances": 5, "seed": 2}')
    return tmp_path


def _json(capsys):
    return json.loads(capsys.readouterr().out)


def test_solve_nash(files, capsys):
    assert main(["solve", "nash", str(files / "g.json"), "--format", "json"]) == 0
    row = _json(capsys)[0]
    assert row["bids"] == pytest.approx([2 / 9, 1 / 9], abs=1e-6)
    assert row["ratio_ew"] == pytest.approx(0.636364, abs=1e-6)


def test_solve_optimal_and_bayes(files, capsys):
    assert main(["solve", "optimal", str(files / "g.json"), "--effective", "--format", "json"]) == 0
    assert _json(capsys)[0]["ew_star"] == pytest.approx(0.611111, abs=1e-6)
    assert main(["solve", "bayes", str(files / "b.json"), "--format", "json"]) == 0
    assert _json(capsys)[0]["converged"] is True


def test_verify_and_check(files, capsys):
    assert main(["verify", "nash", str(files / "g.json"), str(files / "p.json"), "--format", "json"]) == 0
    assert _json(capsys)[0]["epsilon"] == 0.0
    assert main(["verify", "cce", str(files / "g.json"), str(files / "p.json"), "--format", "json"]) == 0
    assert _json(capsys)[0]["epsilon"] == 0.0
    assert main(["check", "lemma1", "--random", "50", "--format", "json"]) == 0
    assert len(_json(capsys)) == 50
    assert main(["check", "smoothness", str(files / "g.json"), str(files / "p.json")]) == 0


def test_check_deviation_bound_instance(tmp_path, capsys):
    inst = tmp_path / "i.json"
    inst.write_text(json.dumps({"valuation": {"kind": "linear", "slope": 1}, "z": 1, "mu": 1,
                                "gamma": [[0, 0.5], [1, 0.5]]}))
    assert main(["check", "lemma1", "--instance", str(inst), "--format", "json"]) == 0
    assert _json(capsys)[0]["lhs"] == pytest.approx(1 / 6)


def test_replicate_and_experiment(files, capsys):
    assert main(["replicate", "lemma3", "--n", "2", "10", "--format", "json"]) == 0
    assert all(r["passed"] for r in _json(capsys))
    assert main(["replicate", "budget", "--alpha", "0.5"]) == 0
    capsys.readouterr()
    out = files / "rows.csv"
    assert main(["experiment", str(files / "e.json"), "--out", str(out)]) == 0
    assert out.read_text().startswith("game_id,")


def test_bad_game_file(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"bidders": [')
    assert main(["solve", "nash", str(bad)]) == 2
    assert "line 1" in capsys.readouterr().err
