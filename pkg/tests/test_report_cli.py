import json
import re
import subprocess
import sys
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np
import pytest

from fuzzeval.bootstrap import BootMethod, BootstrapSpec
from fuzzeval.data_model import save_dataset
from fuzzeval.report import (
    ReportConfig,
    build_report,
    emit_plot_data,
    render_text,
    report_json,
    scatter_svg,
)
from fuzzeval.synth import FuzzerModel, PropertyModel, SynthSpec, generate


def small_campaign(seed=0):
    spec = SynthSpec(
        programs=3, trials_per_program=8, noise_sd=0.8, seed=seed,
        fuzzers=(
            FuzzerModel("ref", sensitivities={"init_coverage": -0.05}),
            FuzzerModel("fast", base_skill=0.5),
            FuzzerModel("big", base_skill=-0.2,
                        sensitivities={"program_text_bytes": 0.15}),
        ),
        property_models={
            "init_coverage": PropertyModel("lognormal", (5.0, 1.0)),
            "mean_exec_ns": PropertyModel("lognormal", (10.0, 1.0)),
            "mean_seed_bytes": PropertyModel("lognormal", (7.0, 1.0)),
            "program_text_bytes": PropertyModel("lognormal", (12.0, 0.8)),
        },
    )
    return generate(spec)[0]


@pytest.fixture(scope="module")
def campaign():
    return small_campaign()


@pytest.fixture(scope="module")
def campaign_report(campaign):
    config = ReportConfig(boot=BootstrapSpec(replicates=200, seed=5, method=BootMethod.WILD))
    return build_report(campaign, config, dataset_path="demo.csv")


@pytest.fixture()
def campaign_csv(tmp_path, campaign):
    path = tmp_path / "campaign.csv"
    save_dataset(campaign, str(path))
    return str(path)


class TestReport:
    def test_structure(self, campaign_report, campaign):
        doc = campaign_report.to_dict()
        assert doc["metadata"]["fuzzers"] == list(campaign.fuzzers)
        assert {e["property"] for e in doc["spearman"]} == set(campaign.property_keys)
        assert set(doc["pairwise"]["per_program"]) == set(campaign.programs)
        assert doc["mlr"]["r2"] > 0
        assert doc["mlr"]["per_benchmark_r2"] > doc["mlr"]["r2"]
        assert "durbin_watson" in doc["diagnostics"]

    def test_json_is_deterministic(self, campaign):
        config = ReportConfig(boot=BootstrapSpec(replicates=150, seed=9))
        first = report_json(build_report(campaign, config, dataset_path="x.csv"))
        second = report_json(build_report(campaign, config, dataset_path="x.csv"))
        assert first == second

    def test_every_text_number_is_in_the_json(self, campaign_report):
        text = render_text(campaign_report)
        doc = report_json(campaign_report)
        numbers = re.findall(r"[=\[(,\s]((?:-?\d+\.\d+(?:e-?\d+)?)|(?:-?\d+e-?\d+))", text)
        assert numbers, "expected the text rendering to contain numbers"
        for literal in numbers:
            assert literal in doc, f"{literal} missing from the JSON report"

    def test_significance_flags_reproducible_from_seed(self, campaign):
        config = ReportConfig(boot=BootstrapSpec(replicates=150, seed=31))
        first = build_report(campaign, config)
        second = build_report(campaign, config)
        assert [s.significant for s in first.slopes] == [s.significant for s in second.slopes]
        assert first.mlr_ci == second.mlr_ci


class TestPlotData:
    def test_emit_manifest(self, campaign_report, tmp_path):
        manifest = emit_plot_data(campaign_report, str(tmp_path))
        assert "qq.csv" in manifest
        assert "scale_location.csv" in manifest
        for name in manifest:
            assert (tmp_path / name).exists()

    def test_slope_lines_reproduce_fitted_slope(self, campaign_report, tmp_path):
        emit_plot_data(campaign_report, str(tmp_path))
        for estimate in campaign_report.slopes:
            lines = (tmp_path / f"slopes_{estimate.property}.csv").read_text().splitlines()
            row = next(r for r in lines[1:] if r.split(",")[0] == estimate.fuzzer)
            _, x0, y0, x1, y1 = row.split(",")
            slope = (float(y1) - float(y0)) / (float(x1) - float(x0))
            assert slope == pytest.approx(estimate.slope, abs=1e-9)

    def test_correlate_csv_schema(self, campaign_report, tmp_path):
        emit_plot_data(campaign_report, str(tmp_path))
        path = tmp_path / "correlate_init_coverage_within.csv"
        header = path.read_text().splitlines()[0]
        assert header == "property_rank,perf_rank,program,fuzzer"

    def test_svg_is_valid_xml_with_one_circle_per_point(self, campaign_report, tmp_path):
        manifest = emit_plot_data(campaign_report, str(tmp_path), svg=True)
        svg_names = [n for n in manifest if n.endswith(".svg")]
        assert svg_names
        root = ET.parse(tmp_path / svg_names[0]).getroot()
        circles = root.findall(".//{http://www.w3.org/2000/svg}circle")
        assert len(circles) == len(campaign_report.ranked.base)

    def test_svg_empty_points(self):
        ET.fromstring(scatter_svg([]))


def run_cli(args, stdin_text=None):
    result = subprocess.run(
        [sys.executable, "-m", "fuzzeval.cli", *args],
        input=stdin_text, capture_output=True, text=True, timeout=600,
    )
    return result


class TestCli:
    def test_validate_ok(self, campaign_csv):
        result = run_cli(["validate", campaign_csv])
        assert result.returncode == 0
        assert "ok:" in result.stdout

    def test_validate_broken_data_exit_2(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text(
            "program,fuzzer,trial,performance,seed_count\n"
            "p1,fa,0,100,5\np1,fb,0,110,6\n")
        result = run_cli(["validate", str(path)])
        assert result.returncode == 2
        assert "property-mismatch" in result.stdout

    def test_unknown_flag_exit_1(self, campaign_csv):
        result = run_cli(["validate", "--bogus", campaign_csv])
        assert result.returncode == 1

    def test_unknown_subcommand_exit_1(self):
        result = run_cli(["frobnicate"])
        assert result.returncode == 1

    def test_correlate(self, campaign_csv):
        result = run_cli(["correlate", campaign_csv, "--scope", "within"])
        assert result.returncode == 0
        assert result.stdout.startswith("property,scope,rho,n")
        assert "init_coverage,within," in result.stdout

    def test_compare(self, campaign_csv):
        result = run_cli(["compare", campaign_csv, "--program", "prog01"])
        assert result.returncode == 0
        lines = result.stdout.strip().splitlines()
        assert lines[0] == "fuzzer_a,fuzzer_b,a12,p,significant"
        assert len(lines) == 1 + 3 * 2  # ordered pairs of 3 fuzzers

    def test_compare_unknown_program_exit_2(self, campaign_csv):
        result = run_cli(["compare", campaign_csv, "--program", "nope"])
        assert result.returncode == 2

    def test_slopes(self, campaign_csv):
        result = run_cli(["slopes", campaign_csv, "--property", "init_coverage",
                          "--boot-reps", "150", "--seed", "3"])
        assert result.returncode == 0
        assert result.stdout.splitlines()[0] == \
            "fuzzer,property,slope,ci_low,ci_high,significant"

    def test_synth_regress_pipeline(self):
        synth = run_cli(["synth", "--paper-shaped"])
        assert synth.returncode == 0
        regress = run_cli(["regress", "-", "--boot-reps", "150", "--seed", "1"],
                          stdin_text=synth.stdout)
        assert regress.returncode == 0
        rows = regress.stdout.strip().splitlines()
        assert rows[0] == "term,estimate,ci_low,ci_high,significant"
        assert len(rows) - 1 >= 20

    def test_regress_deterministic_output(self, campaign_csv):
        args = ["regress", campaign_csv, "--boot-reps", "150", "--seed", "7"]
        assert run_cli(args).stdout == run_cli(args).stdout

    def test_regress_writes_fit_and_predict_reads_it(self, campaign_csv, tmp_path):
        out = tmp_path / "fit"
        result = run_cli(["regress", campaign_csv, "--boot-reps", "150",
                          "--seed", "2", "-o", str(out)])
        assert result.returncode == 0
        fit_doc = json.loads((out / "fit.json").read_text())
        intercept = fit_doc["coef"][fit_doc["labels"].index("intercept")]
        reference = fit_doc["design"]["reference_fuzzer"]
        predict = run_cli(["predict", str(out / "fit.json"), "--fuzzer", reference])
        assert predict.returncode == 0
        assert float(predict.stdout.strip()) == intercept
        assert (out / "diagnostics.json").exists()
        assert (out / "coefficients.csv").exists()

    def test_predict_crossover(self, campaign_csv, tmp_path):
        out = tmp_path / "fit"
        run_cli(["regress", campaign_csv, "--boot-reps", "150", "--seed", "2",
                 "-o", str(out)])
        result = run_cli(["predict", str(out / "fit.json"), "--fuzzer", "ref",
                          "--versus", "big", "--vary", "program_text_bytes"])
        assert result.returncode == 0
        float(result.stdout.strip())  # parses as a number

    def test_props_corpus(self, tmp_path):
        manifest = tmp_path / "corpus.csv"
        manifest.write_text(
            "#universe=50\nseed_id,size_bytes,exec_ns,covered\n"
            "a,100,10,1;2\nb,300,30,2;3\n")
        result = run_cli(["props", "corpus", str(manifest)])
        assert result.returncode == 0
        assert "seed_count,2.0" in result.stdout
        assert "mean_seed_bytes,200.0" in result.stdout

    def test_props_program(self, tmp_path):
        fixtures = Path(__file__).parent / "fixtures"
        result = run_cli(["props", "program",
                          "--headers", str(fixtures / "section_headers.txt"),
                          "--disasm", str(fixtures / "disasm_500.txt")])
        assert result.returncode == 0
        assert "program_text_bytes,240400.0" in result.stdout

    def test_sample_corpus(self, tmp_path):
        pool = tmp_path / "pool.txt"
        pool.write_text("\n".join(f"seed{i}" for i in range(50)) + "\n")
        first = run_cli(["sample-corpus", str(pool), "--seed", "5"])
        second = run_cli(["sample-corpus", str(pool), "--seed", "5"])
        assert first.returncode == 0
        assert first.stdout == second.stdout
        ids = first.stdout.split()
        assert len(set(ids)) == len(ids) >= 1

    def test_synth_spec_file(self, tmp_path):
        spec = {
            "programs": 2, "trials_per_program": 3, "noise_sd": 0.5, "seed": 1,
            "fuzzers": [{"name": "a"}, {"name": "b", "base_skill": 0.5}],
            "property_models": {"init_coverage": {"kind": "lognormal", "params": [5.0, 1.0]}},
        }
        spec_path = tmp_path / "spec.json"
        spec_path.write_text(json.dumps(spec))
        truth_path = tmp_path / "truth.json"
        result = run_cli(["synth", "--spec", str(spec_path), "--truth", str(truth_path)])
        assert result.returncode == 0
        assert result.stdout.startswith("program,fuzzer,trial,performance")
        assert len(result.stdout.strip().splitlines()) == 1 + 2 * 3 * 2
        truth = json.loads(truth_path.read_text())
        assert "fuzzer:b" in truth

    def test_synth_requires_a_source_exit_2(self):
        assert run_cli(["synth"]).returncode == 2

    def test_report_json_to_stdout(self, campaign_csv):
        result = run_cli(["report", campaign_csv, "--json",
                          "--boot-reps", "150", "--seed", "4"])
        assert result.returncode == 0
        doc = json.loads(result.stdout)
        assert doc["metadata"]["seed"] == 4

    def test_report_writes_bundle(self, campaign_csv, tmp_path):
        out = tmp_path / "bundle"
        result = run_cli(["report", campaign_csv, "--boot-reps", "150",
                          "--seed", "4", "-o", str(out)])
        assert result.returncode == 0
        assert (out / "report.json").exists()
        assert (out / "report.txt").exists()
        assert (out / "qq.csv").exists()

    def test_env_seed_respected(self, campaign_csv, tmp_path):
        import os
        env = dict(os.environ, FUZZEVAL_SEED="99")
        result = subprocess.run(
            [sys.executable, "-m", "fuzzeval.cli", "report", campaign_csv,
             "--json", "--boot-reps", "150"],
            capture_output=True, text=True, env=env, timeout=600,
        )
        assert result.returncode == 0
        assert json.loads(result.stdout)["metadata"]["seed"] == 99
