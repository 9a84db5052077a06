import json
import math

import numpy as np
import pytest

from l1monge import fixtures as fx
from l1monge.cli import ExperimentConfig, main, run
from l1monge.exceptions import ConfigError, IOFailure
from l1monge.gaussian_model import build_covariance, grid_discretize
from l1monge.io import (config_hash, dumps, ensure_dir, load_measure, measure_from_dict, measure_to_dict,
                        plan_to_dict, read_report, save_measure)
from l1monge.transport_lp import solve_exact


def test_measure_json_round_trip(tmp_path):
    src, _, _ = fx.empirical_pair(2, 8, 5)
    path = save_measure(tmp_path / "m.json", src, build_covariance(), seed=5)
    doc = json.loads(path.read_text())
    assert doc["form"] == "atoms" and doc["dim"] == 2 and doc["seed"] == 5
    assert doc["covariance"] == {"c": list(build_covariance().c), "alpha": 3.0}
    assert load_measure(path).allclose(src, atol=0)


def test_grid_measure_round_trip():
    g = fx.gaussian_pair(1, 8)[2]
    m = grid_discretize(g, 8, 4.0)
    back = measure_from_dict(json.loads(dumps(measure_to_dict(m))))
    assert back.allclose(m, atol=0)
    with pytest.raises(ValueError):
        measure_from_dict({"form": "cloud"})


def test_plan_json_schema():
    plan, _ = solve_exact(*fx.book_shift())
    doc = plan_to_dict(plan)
    assert set(doc) == {"entries", "value", "cost_kind", "epsilon"}
    assert all(len(e) == 3 for e in doc["entries"])
    assert doc["cost_kind"] == "distance"


def test_non_finite_values_serialise():
    assert json.loads(dumps({"a": math.inf, "b": np.float64("nan"), "c": np.arange(2)})) == \
        {"a": "inf", "b": "nan", "c": [0, 1]}


def test_config_hash_ignores_output_and_workers():
    a = ExperimentConfig(output_dir="x", workers=1)
    b = ExperimentConfig(output_dir="y", workers=4)
    assert a.digest() == b.digest()
    assert a.digest() != ExperimentConfig(grid=32).digest()
    assert config_hash({"a": 1}) == config_hash({"a": 1})


@pytest.mark.parametrize("bad", [dict(suites=["nope"]), dict(seeds=[-1]), dict(seeds=[2 ** 64]),
                                 dict(dims=[9]), dict(grid=2), dict(ts=[1.0]),
                                 dict(epsilons="0.1,0.2"), dict(covariance={"alpha": 2.0})])
def test_config_validation(bad):
    with pytest.raises(ConfigError):
        ExperimentConfig(**bad)


def test_unknown_config_field():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"colour": "red"})


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(IOFailure):
        ensure_dir(blocker / "sub")
    assert main(["run", "--out", str(blocker / "sub")]) == 2


def test_empty_suites_echo_config(tmp_path):
    status, results = run(ExperimentConfig(suites=[], output_dir=str(tmp_path)))
    assert status == 0 and results == []
    doc = read_report(tmp_path / "report.json")
    assert doc["payload"]["config"]["suites"] == [] and doc["payload"]["passed"]


def test_select_book_shift_with_oracle(tmp_path):
    assert main(["select", "--oracle", "--out", str(tmp_path)]) == 0
    doc = read_report(tmp_path / "select_book-shift.json")
    cert = doc["payload"]["certificate"]
    assert max(abs(g) for g in cert["gaps"]) <= 1e-8
    assert doc["payload"]["optimal_face_dimension"] >= 1
    assert (tmp_path / "select_book-shift_plan.csv").read_text().splitlines()[0] == "i,j,mass,x0,y0"


def test_selection_suite_via_config_file(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"suites": ["selection"], "dims": [1], "samples": 16}))
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o"), "--seed", "3",
                 "--epsilons", "1e-1:1e-3:geometric"]) == 0
    doc = read_report(tmp_path / "o" / "report.json")
    assert doc["payload"]["config"]["seeds"] == [3]
    assert doc["payload"]["config"]["epsilons"] == [0.1, 0.03, 0.01, 0.003, 0.001]
    names = {c["name"] for c in doc["payload"]["cells"]}
    assert names == {"selection_book-shift", "selection_d1_s3"}


def test_fixtures_and_measure_files(tmp_path, capsys):
    assert main(["fixtures", "--out", str(tmp_path), "--dim", "1", "--grid", "8"]) == 0
    assert "book-shift" in json.loads(capsys.readouterr().out)
    src = tmp_path / "book-shift_src.json"
    tgt = tmp_path / "book-shift_tgt.json"
    assert main(["diagnose", "--src", str(src), "--tgt", str(tgt), "--out", str(tmp_path / "d")]) == 0
    doc = read_report(tmp_path / "d" / "diagnose_book-shift_src.json")
    assert doc["payload"]["checks"]["potential"]["passed"]
    assert main(["select", "--src", str(src), "--out", str(tmp_path / "e")]) == 2


def test_failures_are_aggregated(tmp_path):
    def boom():
        raise RuntimeError("broken cell")
    status, results = run(ExperimentConfig(output_dir=str(tmp_path)), [("boom", boom)])
    assert status == 1 and "broken cell" in results[0].error
    assert read_report(tmp_path / "report.json")["payload"]["failures"] == ["boom"]


def test_entropy_verb_rejects_oversized_grid(tmp_path):
    assert main(["entropy", "--out", str(tmp_path), "--dim", "2", "--grid", "128"]) == 1
    cell = read_report(tmp_path / "report.json")["payload"]["cells"][0]
    assert cell["error"].startswith("TooLarge")


def test_bad_epsilon_flag():
    assert main(["run", "--epsilons", "abc"]) == 2
