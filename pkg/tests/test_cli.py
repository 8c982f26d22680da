import csv
import xml.etree.ElementTree as ET

import pytest

from survfuse.cli import main

FAST_FLAGS = [
    "--c1", "8", "--c2", "8", "--segment-set", "1,2,4,8",
    "--epochs", "2", "--batch-size", "8",
]


@pytest.fixture(scope="module")
def cohort_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("cohorts") / "cohort.json"
    rc = main(["synth", "--n", "40", "--seed", "0", "--out", str(path)])
    assert rc == 0
    return path


@pytest.fixture(scope="module")
def checkpoint_file(tmp_path_factory, cohort_file):
    path = tmp_path_factory.mktemp("ckpt") / "model.json"
    rc = main(["train", "--cohort", str(cohort_file), "--out", str(path)] + FAST_FLAGS)
    assert rc == 0
    return path


class TestSynth:
    def test_deterministic_output_bytes(self, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        assert main(["synth", "--n", "20", "--seed", "3", "--out", str(a)]) == 0
        assert main(["synth", "--n", "20", "--seed", "3", "--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_zero_patients_is_usage_error(self, tmp_path):
        rc = main(["synth", "--n", "0", "--out", str(tmp_path / "x.json")])
        assert rc == 2

    def test_reports_event_rate_between_zero_and_one(self, tmp_path, capsys):
        assert main(["synth", "--n", "50", "--seed", "1",
                     "--out", str(tmp_path / "c.json")]) == 0
        out = capsys.readouterr().out
        rate = float(next(l for l in out.splitlines() if "event rate" in l).split(":")[1])
        assert 0.0 < rate < 1.0


class TestCv:
    def test_writes_k_rows_and_summary(self, tmp_path, cohort_file, capsys):
        metrics = tmp_path / "metrics.csv"
        rc = main(["cv", "--cohort", str(cohort_file), "--k", "3",
                   "--metrics-out", str(metrics), "--seed", "0"] + FAST_FLAGS)
        assert rc == 0
        rows = list(csv.DictReader(metrics.open()))
        assert len(rows) == 3
        assert set(rows[0]) == {"fold", "c_index", "chi2", "p", "variant", "seed"}
        assert "C-index" in capsys.readouterr().out

    def test_identical_seeds_identical_bytes(self, tmp_path, cohort_file):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        args = ["cv", "--cohort", str(cohort_file), "--k", "3", "--seed", "1"] + FAST_FLAGS
        assert main(args + ["--metrics-out", str(a)]) == 0
        assert main(args + ["--metrics-out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_ablate_flag_labels_summary(self, tmp_path, cohort_file, capsys):
        rc = main(["cv", "--cohort", str(cohort_file), "--k", "3", "--seed", "0",
                   "--ablate", "no-rfr"] + FAST_FLAGS)
        assert rc == 0
        assert "[no_rfr]" in capsys.readouterr().out

    def test_missing_cohort_is_exit_2(self, tmp_path):
        rc = main(["cv", "--cohort", str(tmp_path / "nope.json"), "--k", "3"])
        assert rc == 2


class TestEvalAndPlots:
    def test_eval_writes_risk_csv(self, tmp_path, cohort_file, checkpoint_file):
        out = tmp_path / "risks.csv"
        rc = main(["eval", "--checkpoint", str(checkpoint_file),
                   "--cohort", str(cohort_file), "--out", str(out)])
        assert rc == 0
        rows = list(csv.DictReader(out.open()))
        assert len(rows) == 40
        assert set(rows[0]) == {"id", "risk", "time", "event"}

    def test_plot_km_emits_valid_svg(self, tmp_path, cohort_file, checkpoint_file):
        risks = tmp_path / "risks.csv"
        assert main(["eval", "--checkpoint", str(checkpoint_file),
                     "--cohort", str(cohort_file), "--out", str(risks)]) == 0
        svg = tmp_path / "km.svg"
        curves = tmp_path / "curves.csv"
        rc = main(["plot-km", "--risks", str(risks), "--out", str(svg),
                   "--curves-out", str(curves)])
        assert rc == 0
        root = ET.parse(svg).getroot()
        assert root.tag.endswith("svg")
        assert "log-rank p" in svg.read_text()
        assert len(list(csv.DictReader(curves.open()))) > 0

    def test_plot_km_separated_groups_annotates_small_p(self, tmp_path):
        risks = tmp_path / "risks.csv"
        with risks.open("w") as f:
            f.write("risk,time,event\n")
            for i in range(10):
                f.write(f"{1.0 + i * 0.01},{1 + i * 0.1},1\n")
            for i in range(10):
                f.write(f"{-1.0 - i * 0.01},{50 + i},1\n")
        svg = tmp_path / "km.svg"
        assert main(["plot-km", "--risks", str(risks), "--out", str(svg)]) == 0
        p = float(svg.read_text().split("log-rank p = ")[1].split("<")[0])
        assert p < 0.05

    def test_plot_km_identical_groups_p_one(self, tmp_path):
        risks = tmp_path / "risks.csv"
        with risks.open("w") as f:
            f.write("risk,time,event\n")
            for i in range(6):
                f.write(f"{float(i)},{1 + (i % 3)},1\n")
        svg = tmp_path / "km.svg"
        assert main(["plot-km", "--risks", str(risks), "--out", str(svg)]) == 0

    def test_plot_km_degenerate_split_exit_2(self, tmp_path):
        risks = tmp_path / "risks.csv"
        with risks.open("w") as f:
            f.write("risk,time,event\n")
            for i in range(4):
                f.write(f"1.0,{i + 1},1\n")
        rc = main(["plot-km", "--risks", str(risks), "--out", str(tmp_path / "km.svg")])
        assert rc == 2

    def test_plot_gates_sums_to_one(self, tmp_path, cohort_file, checkpoint_file):
        svg = tmp_path / "gates.svg"
        rc = main(["plot-gates", "--checkpoint", str(checkpoint_file),
                   "--cohort", str(cohort_file), "--out", str(svg)])
        assert rc == 0
        text = svg.read_text()
        ET.fromstring(text)
        total = float(text.split("sum = ")[1].split("<")[0])
        assert abs(total - 1.0) <= 1e-6

    def test_export_embeddings_row_count(self, tmp_path, cohort_file, checkpoint_file):
        out = tmp_path / "emb.csv"
        rc = main(["export-embeddings", "--checkpoint", str(checkpoint_file),
                   "--cohort", str(cohort_file), "--out", str(out)])
        assert rc == 0
        rows = list(csv.reader(out.open()))
        header, body = rows[0], rows[1:]
        assert header[:2] == ["id", "feature"]
        assert header[2:] == [f"v{i}" for i in range(8)]
        assert len(body) == 4 * 40

    def test_export_embeddings_no_explore(self, tmp_path, cohort_file):
        ckpt = tmp_path / "ne.json"
        assert main(["train", "--cohort", str(cohort_file), "--out", str(ckpt),
                     "--ablation", "no_explore"] + FAST_FLAGS) == 0
        out = tmp_path / "emb.csv"
        assert main(["export-embeddings", "--checkpoint", str(ckpt),
                     "--cohort", str(cohort_file), "--out", str(out)]) == 0
        assert len(list(csv.reader(out.open()))) - 1 == 3 * 40


class TestConfigFile:
    def test_flags_override_file(self, tmp_path, cohort_file):
        cfgfile = tmp_path / "run.cfg"
        cfgfile.write_text("epochs = 1\nc1 = 8\nc2 = 8\nsegment_set = 1,2,4,8\nseed = 9\n")
        ckpt = tmp_path / "m.json"
        rc = main(["train", "--cohort", str(cohort_file), "--config", str(cfgfile),
                   "--out", str(ckpt), "--epochs", "2"])
        assert rc == 0
        import json

        doc = json.loads(ckpt.read_text())
        assert doc["config"]["epochs"] == 2
        assert doc["config"]["c1"] == 8
        assert doc["config"]["seed"] == 9


class TestGradcheckCommand:
    def test_runs_and_reports(self, capsys):
        rc = main(["gradcheck", "--seed", "0", "--max-entries", "3"])
        assert rc == 0
        out = capsys.readouterr().out
        assert "worst relative error" in out
