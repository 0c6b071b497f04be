import json

import numpy as np
import pytest

from feedbackpovm import io
from feedbackpovm.channel import ImperfectionParams
from feedbackpovm.cli import main
from feedbackpovm.exceptions import ConfigError
from feedbackpovm.receiver import OPTIMAL_M2_SCHEDULE, povm_elements
from feedbackpovm.tomography import ProbeSet, generate_dataset


def write_config(path, doc):
    path.write_text(json.dumps(doc))
    return path


def test_povm_json_round_trip_is_lossless(tmp_path):
    povm = povm_elements(OPTIMAL_M2_SCHEDULE, ImperfectionParams(0.7, 0.98, 0.002), 6)
    io.save_povm(povm, tmp_path / "p.json")
    back = io.load_povm(tmp_path / "p.json")
    assert back.labels == povm.labels
    assert np.array_equal(back.elements, povm.elements)


def test_dataset_and_manifest_round_trips(tmp_path):
    probes = ProbeSet.default(5)
    ds = generate_dataset(OPTIMAL_M2_SCHEDULE, probes=probes, mode="sampled", seed=3)
    io.save_dataset(ds, tmp_path / "d.csv")
    back = io.load_dataset(tmp_path / "d.csv")
    assert np.array_equal(back.counts, ds.counts) and back.labels == ds.labels
    assert (tmp_path / "d.csv").read_text().splitlines()[0] == "probe_index,outcome_label,count"
    io.save_probes(probes, tmp_path / "probes.json")
    assert np.array_equal(io.load_probes(tmp_path / "probes.json").alphas, probes.alphas)
    io.save_schedule(OPTIMAL_M2_SCHEDULE, tmp_path / "s.json")
    assert io.load_schedule(tmp_path / "s.json") == OPTIMAL_M2_SCHEDULE
    imp = ImperfectionParams(0.5, 0.9, 1e-3, 0.02)
    io.save_imperfections(imp, tmp_path / "i.json")
    assert io.load_imperfections(tmp_path / "i.json") == imp


def test_bad_json_is_a_config_error(tmp_path):
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(ConfigError):
        io.load_json(tmp_path / "bad.json")


def test_optimize_is_deterministic(tmp_path):
    cfg = write_config(tmp_path / "c.json", {"max_stages": 2, "restarts": 1,
                                             "variants": ["adaptive"]})
    outputs = []
    for run in ("a", "b"):
        out = tmp_path / run
        assert main(["optimize", "--config", str(cfg), "--out", str(out)]) == 0
        outputs.append((out / "perf_vs_M.csv").read_bytes())
        assert json.loads((out / "resolved_config.json").read_text())["max_stages"] == 2
    assert outputs[0] == outputs[1]
    rows = io.read_table(tmp_path / "a" / "perf_vs_M.csv")
    assert float(rows[1]["ideal_Pe"]) == pytest.approx(0.040, abs=5e-4)
    assert all(float(r["imperfect_Pe"]) > float(r["ideal_Pe"]) for r in rows)


@pytest.mark.parametrize("command,doc", [
    ("optimize", {"max_stages": 2, "colour": "red"}),
    ("optimize", {"version": 7}),
    ("sweep", {"grid": [0.0, 0.5]}),
    ("sweep", {"grid": [0.5, 1.0]}),
    ("delay", {"grid": [0.0, 1.2]}),
    ("tomography", {"schedule": "no-such-preset"}),
    ("regress", {"checks": [0]}),
])
def test_invalid_configs_exit_2(tmp_path, command, doc, capsys):
    cfg = write_config(tmp_path / "c.json", doc)
    assert main([command, "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert "invalid configuration" in capsys.readouterr().err


def test_mode_flag_is_tomography_only(tmp_path):
    assert main(["delay", "--mode", "exact", "--out", str(tmp_path)]) == 2


def test_numerical_failure_exit_3(tmp_path):
    cfg = write_config(tmp_path / "c.json", {"max_stages": 1, "restarts": 1,
                                             "variants": ["fixed"],
                                             "imperfections": {"visibility": 0.0}})
    assert main(["optimize", "--config", str(cfg), "--out", str(tmp_path)]) == 3


def test_sweep_and_delay_outputs(tmp_path):
    cfg = write_config(tmp_path / "s.json", {"grid": [0.2, 0.336, 0.5], "restarts": 1})
    assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    rows = io.read_table(tmp_path / "sweep_t1.csv")
    assert [float(r["t1_over_T"]) for r in rows] == [0.2, 0.336, 0.5]
    assert main(["delay", "--out", str(tmp_path)]) == 0
    rows = io.read_table(tmp_path / "delay_sweep.csv")
    assert len(rows) == 21 and sum(int(r["operating_point"]) for r in rows) == 1
    cfg = write_config(tmp_path / "r.json", {"checks": [6]})
    assert main(["regress", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    report = io.read_table(tmp_path / "regress_report.csv")
    assert len(report) == 3 and all(r["passed"] == "1" for r in report)


def test_regress_flags_bad_artifacts(tmp_path):
    io.write_table(tmp_path / "perf_vs_M.csv",
                   ["M", "variant", "ideal_Pe", "imperfect_Pe", "helstrom_Pe", "homodyne_Pe"],
                   [[1, "fixed", 0.2, 0.3, 0.0, 0.101]])
    cfg = write_config(tmp_path / "r.json", {"checks": [6]})
    assert main(["regress", "--config", str(cfg), "--out", str(tmp_path)]) == 4


def test_tomography_exact_mode(tmp_path):
    cfg = write_config(tmp_path / "t.json", {"seeds": [0], "max_iter": 3000})
    assert main(["tomography", "--config", str(cfg), "--mode", "exact",
                 "--out", str(tmp_path)]) == 0
    summary = json.loads((tmp_path / "tomo_summary.json").read_text())
    rows = io.read_table(tmp_path / "tomo_report.csv")
    assert [r["seed"] for r in rows] == ["0", "mean", "std"]
    assert float(rows[0]["Pe_from_povm"]) == pytest.approx(summary["model_Pe"], abs=1e-3)
    assert float(rows[0]["completeness_residual"]) < 1e-10
    povm = io.load_povm(tmp_path / "povm_parity_seed0.json")
    assert povm.labels == ("even", "odd") and povm.dim == 2
