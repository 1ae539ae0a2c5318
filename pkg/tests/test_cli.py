import itertools
import json
import math

import numpy as np
import pytest

from synthquery.cli import main
from synthquery.data import read_database
from synthquery.queries import read_queries


def run_cli(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def workspace(tmp_path, capsys):
    db = tmp_path / "db.csv"
    q = tmp_path / "q.txt"
    assert run_cli(capsys, "synth-data", "--d", 8, "--n", 200, "--seed", 3, "--out", db)[0] == 0
    assert run_cli(capsys, "gen-queries", "--d", 8, "--count", 20, "--seed", 1, "--out", q)[0] == 0
    return tmp_path, db, q


def test_synth_data_shape_and_bias(tmp_path, capsys):
    out = tmp_path / "a.csv"
    assert run_cli(capsys, "synth-data", "--d", 50, "--n", 1000, "--seed", 7, "--out", out)[0] == 0
    db = read_database(out)
    assert (db.n, db.d) == (1000, 50)
    assert len(json.loads((tmp_path / "a.bias.json").read_text())["p"]) == 50


def test_synth_data_byte_identical(tmp_path, capsys):
    for name in ("a.csv", "b.csv"):
        run_cli(capsys, "synth-data", "--d", 12, "--n", 100, "--seed", 7, "--out", tmp_path / name)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "a.bias.json").read_bytes() == (tmp_path / "b.bias.json").read_bytes()


def test_synth_data_validation(tmp_path, capsys):
    with pytest.raises(SystemExit) as info:
        main(["synth-data", "--d", "0", "--n", "5", "--out", str(tmp_path / "x.csv")])
    assert info.value.code == 2
    out = tmp_path / "x.csv"
    run_cli(capsys, "synth-data", "--d", 3, "--n", 5, "--out", out)
    code, _, err = run_cli(capsys, "synth-data", "--d", 3, "--n", 5, "--out", out, "--json-errors")
    assert code == 1
    assert "exists" in json.loads(err)["message"]
    assert run_cli(capsys, "synth-data", "--d", 3, "--n", 5, "--out", out, "--force")[0] == 0


def test_ingest_fixture(tmp_path, capsys):
    # two categorical columns with 3 and 2 values -> d = 5
    (tmp_path / "raw.csv").write_text("color,size\nred,S\nblue,L\ngreen,S\n")
    (tmp_path / "schema.json").write_text(json.dumps({"columns": [
        {"name": "color", "kind": "categorical"}, {"name": "size", "kind": "categorical"}]}))
    out = tmp_path / "bin.csv"
    code, stdout, _ = run_cli(capsys, "ingest", "--csv", tmp_path / "raw.csv",
                              "--schema", tmp_path / "schema.json", "--out", out)
    assert code == 0 and json.loads(stdout)["d"] == 5
    db = read_database(out)
    assert db.feature_names == ("color=blue", "color=green", "color=red", "size=L", "size=S")
    assert db.bits.tolist() == [[0, 0, 1, 0, 1], [1, 0, 0, 1, 0], [0, 1, 0, 0, 1]]
    assert (tmp_path / "bin.features.json").exists()


def test_ingest_missing_schema(tmp_path, capsys):
    (tmp_path / "raw.csv").write_text("a\n1\n")
    code, _, err = run_cli(capsys, "ingest", "--csv", tmp_path / "raw.csv",
                           "--schema", tmp_path / "nope.json", "--out", tmp_path / "o.csv")
    assert code == 1 and "nope.json" in err


def test_gen_queries_exhaustive(tmp_path, capsys):
    out = tmp_path / "q.txt"
    assert run_cli(capsys, "gen-queries", "--d", 10, "--count", 120, "--out", out)[0] == 0
    qs = read_queries(out)
    assert sorted(q.indices for q in qs) == list(itertools.combinations(range(10), 3))
    code, _, _ = run_cli(capsys, "gen-queries", "--d", 10, "--count", 121)
    assert code == 1


def test_gen_queries_from_db_stdout(workspace, capsys):
    _, db, _ = workspace
    code, out, _ = run_cli(capsys, "gen-queries", "--db", db, "--kind", "parity", "--count", 4)
    assert code == 0
    assert [line[:3] for line in out.splitlines()] == ["P +"] * 4


def test_run_single_round(workspace, capsys):
    tmp, db, q = workspace
    code, out, _ = run_cli(capsys, "run", "--db", db, "--queries", q, "--mode", "manual", "--T", 1,
                           "--s", 5, "--eta", 1.0, "--out-synth", tmp / "s.csv", "--out-json", tmp / "r.json")
    assert code == 0 and out.startswith("T=1 ")
    assert read_database(tmp / "s.csv").n == 1
    res = json.loads((tmp / "r.json").read_text())
    assert res["epsilon"] == 0 and res["T"] == 1


def test_run_budget_prints_T_first(workspace, capsys):
    _, db, q = workspace
    code, out, _ = run_cli(capsys, "run", "--db", db, "--queries", q, "--mode", "budget",
                           "--epsilon", 0.5, "--s", 5, "--eta", 0.5)
    first, rest = out.split("\n", 1)
    res = json.loads(rest)
    assert first == f"T={res['T']} s=5 eta=0.5"
    assert res["epsilon"] <= 0.5


def test_run_theory_mode_schedule(workspace, capsys):
    _, db, q = workspace
    # 40 queries after negation, d = 8
    code, out, _ = run_cli(capsys, "run", "--db", db, "--queries", q, "--mode", "theory",
                           "--alpha", 0.9, "--beta", 0.5, "--solver", "exact")
    from synthquery.accountant import theory_params
    T, eta, s = theory_params(0.9, 0.5, 40, 8)
    assert out.splitlines()[0] == f"T={T} s={s} eta={eta}"


def test_run_mode_flag_errors(workspace, capsys):
    _, db, q = workspace
    code, _, err = run_cli(capsys, "run", "--db", db, "--queries", q, "--mode", "manual",
                           "--s", 5, "--eta", 1.0, "--json-errors")
    assert code == 1 and json.loads(err)["error"] == "ValueError"


def test_run_weights_dump(workspace, capsys):
    tmp, db, q = workspace
    run_cli(capsys, "run", "--db", db, "--queries", q, "--T", 3, "--s", 4, "--eta", 1.0,
            "--weights-dump", tmp / "w.jsonl", "--top-k", 2)
    lines = [json.loads(x) for x in (tmp / "w.jsonl").read_text().splitlines()]
    assert [x["t"] for x in lines] == [1, 2, 3]
    assert all(len(x["top"]) == 2 for x in lines)
    assert lines[0]["top"][0]["p"] == pytest.approx(1 / 40)


def test_eval_identical_is_zero(workspace, capsys):
    _, db, q = workspace
    code, out, _ = run_cli(capsys, "eval", "--db", db, "--synth", db, "--queries", q)
    rep = json.loads(out)["synthetic"]
    assert rep["avgError"] == rep["maxError"] == 0


def test_eval_uniform_parity_answers(tmp_path, capsys):
    # enumeration at d=5: every record once, so parity answers are exactly 1/2
    universe = tmp_path / "u.csv"
    rows = ["a,b,c,d,e"] + [",".join(map(str, r)) for r in itertools.product((0, 1), repeat=5)]
    universe.write_text("\n".join(rows) + "\n")
    q = tmp_path / "q.txt"
    run_cli(capsys, "gen-queries", "--d", 5, "--kind", "parity", "--count", 10, "--out", q)
    code, out, _ = run_cli(capsys, "eval", "--db", universe, "--synth", universe, "--queries", q,
                           "--baselines", "uniform")
    assert json.loads(out)["baselines"]["uniform"]["maxError"] == 0


def test_eval_sweep_csv(workspace, capsys):
    tmp, db, q = workspace
    csv_path = tmp / "sweep.csv"
    code, out, _ = run_cli(capsys, "eval", "--db", db, "--queries", q, "--sweep", "0.5,1,2",
                           "--s", 5, "--eta", 0.5, "--sweep-csv", csv_path, "--baselines", "zeros,laplace")
    assert code == 0
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "epsilon,avg_error,max_error"
    assert [float(x.split(",")[0]) for x in lines[1:]] == [0.5, 1.0, 2.0]
    assert set(json.loads(out)["baselines"]) == {"zeros", "laplace"}


def test_eval_bad_baseline(workspace):
    _, db, q = workspace
    with pytest.raises(SystemExit):
        main(["eval", "--db", str(db), "--synth", str(db), "--queries", str(q), "--baselines", "ones"])


def test_accountant_report(capsys):
    code, out, _ = run_cli(capsys, "accountant", "--T", 170, "--s", 1750, "--eta", 1.2, "--n", 494021,
                           "--delta", 0.001)
    rep = json.loads(out)
    assert set(rep) == {"pure", "approx", "hetero", "delta", "params"}
    assert rep["hetero"] == pytest.approx(1.03, abs=0.02)
    assert rep["approx"] == pytest.approx(1.86, abs=0.01)


def test_accountant_invert_brackets(capsys):
    code, out, _ = run_cli(capsys, "accountant", "--invert", "--epsilon", 1.0, "--eta", 0.4, "--s", 100,
                           "--n", 10000)
    rep = json.loads(out)
    T = rep["T"]
    assert rep["hetero"] <= 1.0
    _, out2, _ = run_cli(capsys, "accountant", "--T", T + 1, "--eta", 0.4, "--s", 100, "--n", 10000)
    assert json.loads(out2)["hetero"] > 1.0


def test_accountant_delta_validation():
    with pytest.raises(SystemExit) as info:
        main(["accountant", "--T", "2", "--s", "1", "--eta", "1", "--n", "10", "--delta", "1.5"])
    assert info.value.code == 2


def test_help_mentions_heuristics(capsys):
    with pytest.raises(SystemExit):
        main(["run", "--help"])
    text = capsys.readouterr().out
    assert "1.5 to 2.0" in text and "0.4" in text and "--free-policy random" in text
