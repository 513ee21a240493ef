import json

import numpy as np
import pytest

from conftest import realestate_standin
from hoig.errors import DataError
from hoig.models import synthetic_polynomial
from hoig.tensor import stack_from_dict
from hoig.workbench import cli
from hoig.workbench.data import Dataset, SyntheticConfig, generate_synthetic, load_csv
from hoig.workbench.experiments import (
    f1_score,
    jaccard,
    run_realestate_experiment,
    run_synthetic_experiment,
    write_report,
)


# --- synthetic data ---

def test_forced_ones_noiseless():
    X = np.ones((4, 8))
    d = generate_synthetic(SyntheticConfig(n_samples=4, noise_scale=0.0), X=X)
    assert np.array_equal(d.y, np.full(4, 7.0))


def test_same_seed_same_data():
    a, b = generate_synthetic(SyntheticConfig(seed=7)), generate_synthetic(SyntheticConfig(seed=7))
    assert np.array_equal(a.X, b.X) and np.array_equal(a.y, b.y)
    assert a.to_csv() == b.to_csv()
    c = generate_synthetic(SyntheticConfig(seed=8))
    assert not np.array_equal(a.X, c.X)


def test_noise_level():
    d = generate_synthetic(SyntheticConfig(n_samples=500, noise_scale=0.1, seed=0))
    resid = d.y - synthetic_polynomial().value_batch(d.X)
    assert 0.08 <= resid.std(ddof=1) <= 0.12
    assert d.X.min() >= 0.0 and d.X.max() <= 1.0


def test_synthetic_config_validation():
    with pytest.raises(ValueError):
        SyntheticConfig(n_samples=0)
    with pytest.raises(ValueError):
        SyntheticConfig(noise_scale=-1)
    with pytest.raises(ValueError):
        SyntheticConfig(dim=3)


def test_dataset_validation():
    with pytest.raises(DataError):
        Dataset(("a", "a"), np.ones((2, 2)), [1, 2])
    with pytest.raises(DataError):
        Dataset(("a",), [[np.nan]], [1.0])
    with pytest.raises(DataError):
        Dataset(("a",), [[1.0], [2.0]], [1.0])
    d = Dataset(("a", "b"), [[1.0, 2.0], [3.0, 2.0]], [0.0, 1.0]).with_stats()
    assert np.allclose(d.mean, [2.0, 2.0]) and np.allclose(d.std, [1.0, 1.0])


# --- CSV ---

def test_csv_three_rows(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("a,b,y\n1,2,3\n4,5,6\n7,8,9\n")
    d = load_csv(p)
    assert d.n_samples == 3 and d.feature_names == ("a", "b")
    assert np.array_equal(d.y, [3, 6, 9])
    assert d.report["rows"] == 3


def test_csv_round_trip_realestate(realestate_csv):
    d = load_csv(realestate_csv, "price")
    assert (d.n_samples, d.dim) == (416, 6)
    assert np.array_equal(d.X, realestate_standin().X)


def test_csv_corrupt_row(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("a,y\n1,2\nfoo,3\n4,5\n")
    with pytest.raises(DataError, match="line 3"):
        load_csv(p)
    d = load_csv(p, strict=False)
    assert d.n_samples == 2 and d.report["skipped_lines"] == [3]


@pytest.mark.parametrize("text, message", [
    ("", "empty"),
    ("a,b\n1,2\n", "target column"),
    ("a,y\n1,2\n3\n", "line 3"),
    ("a,y\n", "no usable rows"),
    ("a,y\n1,nan\n", "line 2"),
])
def test_csv_errors(tmp_path, text, message):
    p = tmp_path / "d.csv"
    p.write_text(text)
    with pytest.raises(DataError, match=message):
        load_csv(p)


def test_csv_drop_and_missing(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("id,a,y\n1,2,3\n2,5,6\n")
    assert load_csv(p, drop_columns=["id"]).feature_names == ("a",)
    with pytest.raises(DataError):
        load_csv(p, drop_columns=["nope"])
    with pytest.raises(DataError):
        load_csv(tmp_path / "missing.csv")


# --- scores ---

def test_scores():
    assert f1_score({(0, 1)}, {(0, 1)}) == 1.0
    assert f1_score(set(), set()) == 1.0
    assert f1_score({(0, 1), (1, 2)}, {(0, 1)}) == pytest.approx(2 / 3)
    assert jaccard({1, 2}, {2, 3}) == pytest.approx(1 / 3)
    assert jaccard(set(), set()) == 1.0


# --- experiments ---

def test_synthetic_truth_experiment(tmp_path):
    r = run_synthetic_experiment(model_kind="truth")
    assert r.metrics["edge_f1"] == 1.0
    assert r.metrics["recovered_triangles"] == [(0, 1, 2), (5, 6, 7)]
    assert r.passed
    assert r.provenance["probe"].startswith("per-feature quantile 0.75")
    files = {p.name for p in write_report(r, tmp_path)}
    assert {"report.json", "explanation.dot", "explanation.tensors.json", "summary.tsv"} <= files
    stack = stack_from_dict(json.loads((tmp_path / "explanation.tensors.json").read_text()))
    assert [t.order for t in stack] == [1, 2, 3]


def test_synthetic_truth_mixed_entries_outside_groups_vanish():
    r = run_synthetic_experiment(model_kind="truth")
    groups = [{0, 1, 2}, {3}, {4, 5}, {5, 6, 7}]
    for t in r.stacks["explanation"][1:]:
        for idx in np.ndindex(*t.dense().shape):
            if len(set(idx)) > 1 and not any(set(idx) <= g for g in groups):
                assert abs(t.dense()[idx]) <= 1e-8


def test_realestate_empty_and_deterministic(tmp_path):
    data = realestate_standin()
    empty = run_realestate_experiment(data, k_houses=0)
    assert empty.graphs == {} and empty.metrics == {"houses": []}
    a = run_realestate_experiment(data, k_houses=3, seed=5)
    b = run_realestate_experiment(data, k_houses=3, seed=5)
    assert a.metrics["houses"] == b.metrics["houses"]
    assert len(set(a.metrics["houses"])) == 3
    write_report(a, tmp_path / "a")
    write_report(b, tmp_path / "b")
    for name in ["report.json"] + [f"house_{h}.dot" for h in a.metrics["houses"]]:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert a.passed
    with pytest.raises(ValueError):
        run_realestate_experiment(data, k_houses=1000)


# --- CLI ---

def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_cli_explain_hessian_to_stdout(capsys):
    code, out, _ = run(capsys, "explain", "--model", "builtin:synthetic", "--input", "1,1,1,1,1,1,1,1",
                       "--order", "2", "--method", "hessian")
    assert code == 0
    stack = stack_from_dict(json.loads(out))
    assert [t.order for t in stack] == [1, 2]
    assert stack[1].meta.method.value == "HessianFormula"


@pytest.mark.parametrize("argv", [
    ["explain", "--model", "builtin:synthetic", "--input", "1", "--bogus"],
    ["--bogus"],
    ["verify"],
])
def test_cli_usage_errors_exit_1(capsys, argv):
    with pytest.raises(SystemExit) as info:
        cli.main(argv)
    assert info.value.code == 1
    assert "usage" in capsys.readouterr().err


def test_cli_explain_then_verify(tmp_path, capsys):
    out = tmp_path / "s.json"
    code, _, _ = run(capsys, "explain", "--model", "builtin:synthetic", "--input", "[0.9,0.8,0.7,0.6,0.5,0.4,0.3,0.2]",
                     "--order", "3", "--out", str(out))
    assert code == 0
    code, text, _ = run(capsys, "verify", str(out), "--model", "builtin:synthetic")
    assert code == 0 and text.strip().endswith("overall\tPASS")
    code, dot, _ = run(capsys, "export-graph", str(out), "--format", "dot")
    assert code == 0 and dot.startswith("graph G {") and "// triangle" in dot


def test_cli_error_codes(tmp_path, capsys):
    assert run(capsys, "explain", "--model", "builtin:synthetic", "--input", "1,2")[0] == 2
    assert run(capsys, "explain", "--model", str(tmp_path / "none.json"), "--input", "1")[0] == 2
    assert run(capsys, "explain", "--model", "builtin:synthetic", "--input", "1,1,1,1,1,1,1,1", "--order", "6")[0] == 2
    assert run(capsys, "explain", "--model", "builtin:synthetic", "--input-row", "0")[0] == 1
    bad = tmp_path / "bad.csv"
    bad.write_text("a,y\n1,2\nx,3\n")
    assert run(capsys, "train", "glm", "--data", str(bad))[0] == 2


def test_cli_numerical_exit_code(tmp_path, capsys):
    # a verify failure is reported as a numerical failure
    code, out, _ = run(capsys, "explain", "--model", "builtin:synthetic", "--input", "1,1,1,1,1,1,1,1", "--order", "2",
                       "--out", str(tmp_path / "s.json"))
    d = json.loads((tmp_path / "s.json").read_text())
    d["tensors"][1]["canonical_values"][0] += 1e3
    (tmp_path / "bad.json").write_text(json.dumps(d))
    code, text, _ = run(capsys, "verify", str(tmp_path / "bad.json"))
    assert code == 3 and "FAIL" in text


def test_cli_train_and_explain_row(tmp_path, capsys, realestate_csv):
    model = tmp_path / "glm.json"
    assert run(capsys, "train", "glm", "--data", str(realestate_csv), "--target", "price", "--out", str(model))[0] == 0
    code, out, _ = run(capsys, "explain", "--model", str(model), "--data", str(realestate_csv), "--target", "price",
                       "--input-row", "10", "--order", "2")
    assert code == 0
    stack = stack_from_dict(json.loads(out))
    data = realestate_standin()
    assert np.allclose(stack[0].meta.baseline, data.X.mean(axis=0))
    assert stack[0].diagnostics["baseline_choice"] == "mean"


def test_cli_synth_and_env_output_dir(tmp_path, capsys, monkeypatch):
    code, csv_text, _ = run(capsys, "synth", "--n", "5", "--seed", "3")
    assert code == 0 and csv_text.splitlines()[0] == "x1,x2,x3,x4,x5,x6,x7,x8,y"
    monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path / "env-out"))
    code, out, _ = run(capsys, "experiment", "synthetic", "--model-kind", "truth")
    assert code == 0
    assert (tmp_path / "env-out" / "report.json").exists()
    assert "edge_f1\t1" in out


def test_cli_realestate_experiment_deterministic(tmp_path, capsys, realestate_csv):
    outs = []
    for name in ("a", "b"):
        code, _, _ = run(capsys, "experiment", "realestate", "--data", str(realestate_csv), "--target", "price",
                         "--k", "3", "--seed", "1", "--out", str(tmp_path / name))
        assert code == 0
        outs.append(sorted((tmp_path / name).glob("*.dot")))
    assert len(outs[0]) == 3
    for a, b in zip(*outs):
        assert a.name == b.name and a.read_bytes() == b.read_bytes()


def test_synthetic_gpr_completeness_defects():
    r = run_synthetic_experiment()
    delta_f = abs(r.stacks["explanation"][0].meta.delta_f)
    d = {int(k): v for k, v in r.metrics["completeness_defects"].items()}
    assert d[1] <= 1e-2 * delta_f
    # every composition level adds another right-hand bias of the same size, so order L sits near L * d1
    assert d[2] / d[1] == pytest.approx(2.0, rel=0.05)
    assert d[3] / d[1] == pytest.approx(3.0, rel=0.05)
    assert r.properties["model"].passed
