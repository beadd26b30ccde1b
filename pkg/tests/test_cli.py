import json
import subprocess

import pandas as pd
import pytest

from transit_eta.cli import main

DAYS = "2021-03-04,2021-03-11"


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def city(tmp_path_factory):
    d = tmp_path_factory.mktemp("city")
    assert run("synth", "--dir", d, "--out", d, "--seed", 7, "--lines", 2, "--days", DAYS) == 0
    assert run("preprocess", "--dir", d) == 0
    return d


class TestPipeline:
    def test_preprocess_outputs(self, city):
        trips = pd.read_csv(city / "trips.csv")
        days = pd.to_datetime(trips.arrival_s, unit="s").dt.strftime("%Y-%m-%d")
        assert set(days) == set(DAYS.split(","))
        assert (city / "progress.csv").exists()
        manifest = json.loads((city / "trips.csv.manifest.json").read_text())
        assert manifest["command"] == "preprocess" and "pings.csv" in manifest["inputs"]

    def test_train_and_evaluate(self, city):
        assert run("train", "--dir", city, "--model", "mlp", "--features", "basic", "--epochs", 5) == 0
        model = city / "models" / "mlp_basic_longdist.json"
        assert model.exists()
        assert run("evaluate", "--dir", city, "--models", model, "--baseline", "timetable", "--name", "t1") == 0
        report = pd.read_csv(city / "eval" / "t1" / "report.csv")
        assert len(report) > 0 and (report.mae_s >= 0).all()
        assert len(set(report.model)) == 2 and "timetable" in set(report.model)

    def test_manifest_contents(self, city):
        assert run("build-ha", "--dir", city) == 0
        manifests = [json.loads(p.read_text()) for p in (city / "models").glob("*.manifest.json")]
        assert manifests
        m = manifests[0]
        for key in ("command", "inputs", "config", "config_hash", "seed", "versions"):
            assert key in m
        assert all(len(h) == 64 for h in m["inputs"].values())

    def test_overlapping_dates_is_usage_error(self, city):
        assert run("train", "--dir", city, "--model", "mlp", "--train-dates", DAYS, "--test-dates", "2021-03-11") == 2

    def test_hop_model_needs_basic_features(self, city):
        assert run("train", "--dir", city, "--model", "mlp", "--method", "hop", "--features", "timetable") == 2

    def test_divergence_exit_code(self, city):
        assert run("train", "--dir", city, "--model", "mlp", "--lr", 1e6, "--epochs", 3,
                   "--out", city / "diverged.json") == 4

    def test_per_line_model_needs_matching_line(self, city):
        assert run("train", "--dir", city, "--model", "mlp", "--line", "523", "--epochs", 2) == 0
        model = city / "models" / "mlp_basic_longdist_523.json"
        assert run("evaluate", "--dir", city, "--models", model, "--name", "x") == 2
        assert run("evaluate", "--dir", city, "--models", model, "--line", "523", "--name", "l523") == 0
        report = pd.read_csv(city / "eval" / "l523" / "report.csv")
        assert set(report.model) == {"mlp_basic_longdist_523"}

    def test_missing_input_is_data_error(self, tmp_path):
        assert run("preprocess", "--dir", tmp_path) == 3

    def test_config_file(self, city, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"bogus": 1}))
        assert run("train", "--dir", city, "--config", cfg, "--model", "mlp") == 2


class TestDispatchCheck:
    def test_prints_all_cells(self, capsys, tmp_path):
        assert run("dispatch-check", "--dir", tmp_path) == 0
        lines = [l for l in capsys.readouterr().out.splitlines() if l.strip()]
        assert sum(("mlp" in l or "rbfn" in l) for l in lines) == 24

    def test_mismatch_exit(self, tmp_path):
        (tmp_path / "d.csv").write_text("group_id,band,model,feature_set\n1,1,rbfn,histavg\n")
        assert run("dispatch-check", "--dir", tmp_path, "--dispatch", tmp_path / "d.csv") == 3

    def test_module_entry_point(self, cli_env, tmp_path):
        out = subprocess.run(cli_env + ["dispatch-check", "--dir", str(tmp_path)], capture_output=True, text=True)
        assert out.returncode == 0 and "rbfn" in out.stdout


def test_unknown_subcommand_exits_2():
    with pytest.raises(SystemExit) as exc:
        run("frobnicate")
    assert exc.value.code == 2
