import json
from pathlib import Path

import pytest
import yaml

from pwmperc import cli
from pwmperc.cli import ExperimentSpec, run


def make_spec(kind, params, tmp_path, seed=0, jobs=1, data_dir=None,
              sub="out"):
    return ExperimentSpec(kind=kind, parameters=params,
                          output_dir=tmp_path / sub, seed=seed, jobs=jobs,
                          data_dir=data_dir)


def read_rows(path):
    lines = Path(path).read_text().splitlines()
    header = lines[0].split(",")
    return header, [line.split(",") for line in lines[1:]]


class TestVacTable:
    def test_reference_rows_reproduced(self, tmp_path):
        spec = make_spec("vac-table", {}, tmp_path)
        manifest = run(spec)
        assert manifest["status"] == "ok"
        header, rows = read_rows(spec.output_dir / "vac_table.csv")
        assert header[-3:] == ["v_theory_V", "v_sim_V", "rel_diff_pct"]
        assert len(rows) == 6
        theory = [float(r[-3]) for r in rows]
        expected = [0.5, 2.0833333333333335, 1.2857142857142858,
                    0.49404761904761907, 2.154761904761905, 1.523809523809524]
        for got, want in zip(theory, expected):
            assert got == pytest.approx(want, abs=1e-9)
        for r in rows:
            assert float(r[-1]) <= 10.0  # sim within 10% of theory

    def test_unknown_key_rejected(self, tmp_path):
        spec = make_spec("vac-table", {"bogus": 1}, tmp_path)
        manifest = run(spec)
        assert manifest["status"] == "error"
        assert manifest["error"]["class"] == "ConfigError"
        assert "bogus" in manifest["error"]["message"]


class TestFixedPoints:
    def test_default_model_csv(self, tmp_path):
        spec = make_spec("fixed-points", {}, tmp_path)
        manifest = run(spec)
        assert manifest["status"] == "ok"
        _, rows = read_rows(spec.output_dir / "fixed_points.csv")
        points = {round(float(x), 3): stab for x, stab in rows}
        assert points.get(0.25) == "stable"
        assert points.get(0.841) == "unstable"

    def test_identity_model_degenerate(self, tmp_path):
        spec = make_spec("fixed-points", {"converter": "identity"}, tmp_path)
        run(spec)
        _, rows = read_rows(spec.output_dir / "fixed_points.csv")
        assert rows[0][1] == "degenerate-interval-start"
        assert rows[1][1] == "degenerate-interval-end"


class TestSweeps:
    def test_sweep_vdd_ratio_column(self, tmp_path):
        spec = make_spec("sweep-vdd", {"grid": [1.0, 2.0, 3.0]}, tmp_path)
        manifest = run(spec)
        assert manifest["status"] == "ok"
        header, rows = read_rows(spec.output_dir / "sweep_vdd.csv")
        assert "ratio_v_over_vdd" in header
        ratios = [float(r[header.index("ratio_v_over_vdd")]) for r in rows]
        assert max(ratios) - min(ratios) < 0.005

    def test_missing_grid_reported(self, tmp_path):
        spec = make_spec("sweep-vdd", {}, tmp_path)
        manifest = run(spec)
        assert manifest["status"] == "error"
        assert "grid" in manifest["error"]["message"]

    def test_jobs_do_not_change_bytes(self, tmp_path):
        params = {"grid": [1.0, 1.5, 2.5]}
        spec1 = make_spec("sweep-vdd", params, tmp_path, jobs=1, sub="a")
        spec2 = make_spec("sweep-vdd", params, tmp_path, jobs=3, sub="b")
        run(spec1)
        run(spec2)
        a = (spec1.output_dir / "sweep_vdd.csv").read_bytes()
        b = (spec2.output_dir / "sweep_vdd.csv").read_bytes()
        assert a == b

    def test_rerun_byte_identical(self, tmp_path):
        params = {"grid": [1e6, 1e7]}
        spec1 = make_spec("sweep-freq", params, tmp_path, sub="a")
        spec2 = make_spec("sweep-freq", params, tmp_path, sub="b")
        run(spec1)
        run(spec2)
        assert (spec1.output_dir / "sweep_freq.csv").read_bytes() == \
            (spec2.output_dir / "sweep_freq.csv").read_bytes()
        # manifests identical after normalizing wall time
        ma = json.loads((spec1.output_dir / cli.MANIFEST_NAME).read_text())
        mb = json.loads((spec2.output_dir / cli.MANIFEST_NAME).read_text())
        ma["wall_time_s"] = mb["wall_time_s"] = None
        assert ma == mb


class TestOtherKinds:
    def test_response_curve_artifacts(self, tmp_path):
        spec = make_spec("response-curve", {"grid_points": 5, "depths": [1, 2]},
                         tmp_path)
        manifest = run(spec)
        assert manifest["status"] == "ok"
        header, rows = read_rows(spec.output_dir / "response_curve.csv")
        assert header == ["dc_in", "dc_out", "depth"]
        assert len(rows) == 10
        _, dev = read_rows(spec.output_dir / "response_deviation.csv")
        assert float(dev[1][1]) > float(dev[0][1])

    def test_fit_exact_source(self, tmp_path):
        spec = make_spec("fit", {"source": "exact", "points": 50,
                                 "grid_hi": 1.0}, tmp_path)
        manifest = run(spec)
        assert manifest["status"] == "ok"
        header, rows = read_rows(spec.output_dir / "fit.csv")
        assert header == ["c3", "c2", "c1", "c0", "r2"]
        c3, c2, c1, c0, r2 = (float(v) for v in rows[0])
        assert c3 == pytest.approx(1.0727, abs=1e-6)
        assert r2 == pytest.approx(1.0, abs=1e-12)

    def test_dynamic_vdd_artifacts(self, tmp_path):
        spec = make_spec("dynamic-vdd", {"horizon": 20e-6}, tmp_path)
        manifest = run(spec)
        assert manifest["status"] == "ok"
        for name in manifest["artifacts"]:
            assert (spec.output_dir / name).exists()
        header, _ = read_rows(spec.output_dir / "dynamic_trace_region_a.csv")
        assert header == ["time_s", "v_cap_V", "vdd_V"]

    def test_report_collates_manifests(self, tmp_path):
        run(make_spec("fixed-points", {}, tmp_path, sub="runs/fp"))
        run(make_spec("vac-table", {"bogus": True}, tmp_path, sub="runs/bad"))
        spec = make_spec("report", {"search_dir": str(tmp_path / "runs")},
                         tmp_path, sub="runs/report")
        manifest = run(spec)
        assert manifest["status"] == "ok"
        header, rows = read_rows(spec.output_dir / "report.csv")
        kinds = {r[header.index("kind")]: r[header.index("status")] for r in rows}
        assert kinds["fixed-points"] == "ok"
        assert kinds["vac-table"] == "error"


class TestTrainKind:
    def test_missing_dataset_is_distinct_error(self, tmp_path, monkeypatch):
        monkeypatch.delenv("PWMPERC_DATA_DIR", raising=False)
        monkeypatch.setattr("pwmperc.mnist._DEFAULT_DATA_DIRS", ())
        spec = make_spec("train", {"topology": "784/10", "activation": "relu",
                                   "epochs": 1}, tmp_path,
                         data_dir=str(tmp_path / "nowhere"))
        manifest = run(spec)
        assert manifest["status"] == "error"
        assert manifest["error"]["class"] == "MissingDatasetError"

    def test_small_subsampled_run(self, tmp_path, mnist_dir):
        spec = make_spec("train", {"topology": "784/10", "activation": "cap_relu",
                                   "learning_rate": 0.008, "epochs": 1,
                                   "subsample": 2000}, tmp_path,
                         data_dir=str(mnist_dir))
        manifest = run(spec)
        assert manifest["status"] == "ok"
        header, rows = read_rows(spec.output_dir / "train.csv")
        row = dict(zip(header, rows[0]))
        assert row["topology"] == "784/10"
        assert 0.0 <= float(row["test_error"]) <= 100.0

    def test_train_sweep_parallel_deterministic(self, tmp_path, mnist_dir):
        configs = [
            {"topology": "784/10", "activation": "relu",
             "learning_rate": 0.01, "epochs": 1},
            {"topology": "784/10", "activation": "cap_relu",
             "learning_rate": 0.008, "epochs": 1},
        ]
        params = {"configs": configs, "subsample": 1000}
        spec1 = make_spec("train-sweep", params, tmp_path, jobs=1, sub="a",
                          data_dir=str(mnist_dir))
        spec2 = make_spec("train-sweep", params, tmp_path, jobs=2, sub="b",
                          data_dir=str(mnist_dir))
        assert run(spec1)["status"] == "ok"
        assert run(spec2)["status"] == "ok"
        assert (spec1.output_dir / "train_sweep.csv").read_bytes() == \
            (spec2.output_dir / "train_sweep.csv").read_bytes()


class TestMainEntry:
    def test_main_ok_and_exit_codes(self, tmp_path, capsys):
        cfg = tmp_path / "fp.yaml"
        cfg.write_text("converter: compensated\n")
        code = cli.main(["fixed-points", "--config", str(cfg),
                         "--out", str(tmp_path / "o")])
        assert code == 0
        assert (tmp_path / "o" / "fixed_points.csv").exists()

    def test_main_config_error_exit_2(self, tmp_path):
        cfg = tmp_path / "bad.yaml"
        cfg.write_text("nonsense_key: 1\n")
        code = cli.main(["vac-table", "--config", str(cfg),
                         "--out", str(tmp_path / "o")])
        assert code == 2

    def test_main_missing_config_file(self, tmp_path):
        code = cli.main(["vac-table", "--config", str(tmp_path / "none.yaml"),
                         "--out", str(tmp_path / "o")])
        assert code == 2

    def test_flag_overrides_config(self, tmp_path, mnist_dir):
        cfg = tmp_path / "train.yaml"
        cfg.write_text(yaml.safe_dump({
            "topology": "784/10", "activation": "relu", "epochs": 1,
            "subsample": 60000,
        }))
        code = cli.main(["train", "--config", str(cfg), "--subsample", "500",
                         "--out", str(tmp_path / "o"),
                         "--data-dir", str(mnist_dir)])
        assert code == 0
        manifest = json.loads((tmp_path / "o" / cli.MANIFEST_NAME).read_text())
        assert manifest["parameters"]["subsample"] == 500
