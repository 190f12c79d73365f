import json

import pytest

from fuzzeval.bootstrap import BootMethod, BootstrapSpec
from fuzzeval.data_model import validate_dataset
from fuzzeval.errors import ComputationError
from fuzzeval.ranking import RankScope, fuzzer_ranks_per_trial, rank_dataset
from fuzzeval.regression import default_design, fit_explainable_model
from fuzzeval.report import rank_both_scopes
from fuzzeval.stats import spearman_rho
from fuzzeval.synth import (
    FuzzerModel,
    PropertyModel,
    SynthSpec,
    generate,
    paper_shaped_fixture,
    paper_shaped_spec,
)


def tiny_spec(**overrides):
    base = dict(
        programs=2, trials_per_program=6, noise_sd=0.5, seed=0,
        fuzzers=(
            FuzzerModel("f0", sensitivities={"init_coverage": -0.1}),
            FuzzerModel("f1", base_skill=0.7),
            FuzzerModel("f2", base_skill=1.4, sensitivities={"init_coverage": 0.1}),
        ),
        property_models={"init_coverage": PropertyModel("lognormal", (5.0, 1.0))},
    )
    base.update(overrides)
    return SynthSpec(**base)


class TestGenerate:
    def test_zero_noise_realizes_latent_order(self):
        ds, _ = generate(tiny_spec(noise_sd=0.0))
        ranks = fuzzer_ranks_per_trial(ds)
        ranked = rank_dataset(ds, ["init_coverage"], RankScope.WITHIN_PROGRAM)
        cov_rank = {
            (t.program, t.trial): ranked.property_rank("init_coverage", RankScope.WITHIN_PROGRAM)[i]
            for i, t in enumerate(ds.trials)
        }
        for program in ds.programs:
            for trial in range(6):
                x = cov_rank[(program, trial)]
                latent = {"f0": -0.1 * x, "f1": 0.7, "f2": 1.4 + 0.1 * x}
                expected_order = sorted(latent, key=latent.get)
                got_order = sorted(ds.fuzzers,
                                   key=lambda f: ranks[(program, trial, f)])
                assert got_order == expected_order

    def test_emitted_dataset_is_valid(self):
        ds, _ = generate(tiny_spec())
        assert validate_dataset(ds) == []

    def test_deterministic_per_seed(self):
        a, truth_a = generate(tiny_spec(seed=9))
        b, truth_b = generate(tiny_spec(seed=9))
        assert a.trials == b.trials
        assert truth_a == truth_b
        c, _ = generate(tiny_spec(seed=10))
        assert c.trials != a.trials

    def test_row_count(self):
        ds, _ = generate(paper_shaped_spec())
        assert len(ds) == 24 * 11 * 4  # trials x programs x fuzzers

    def test_performance_positive(self):
        ds, _ = generate(tiny_spec(noise_sd=3.0))
        assert all(t.performance > 0 for t in ds.trials)

    def test_unknown_sensitivity_key_rejected(self):
        spec = tiny_spec(fuzzers=(
            FuzzerModel("f0", sensitivities={"nonexistent": 1.0}),
            FuzzerModel("f1"),
        ))
        with pytest.raises(ComputationError, match="unknown property"):
            generate(spec)

    def test_huge_noise_recovers_the_null(self):
        spec = tiny_spec(programs=6, trials_per_program=24, noise_sd=200.0, seed=3)
        ds, _ = generate(spec)
        ranked = rank_both_scopes(ds)
        boot = BootstrapSpec(replicates=300, seed=1, method=BootMethod.WILD)
        fit, ci = fit_explainable_model(
            ranked, default_design(ds, properties=["init_coverage"]), boot)
        flagged = [label for label in fit.labels
                   if label != "intercept" and ci[label].significant]
        assert len(flagged) <= 1  # ~5% false positives expected


class TestGroundTruth:
    def test_truth_covers_design_and_slopes(self):
        ds, truth = generate(tiny_spec())
        assert "intercept" in truth
        assert "fuzzer:f1" in truth
        assert "inter:init_coverage:f2" in truth
        assert "slope:init_coverage:f0" in truth

    def test_zero_noise_truth_matches_deterministic_ranks(self):
        # with noise 0, expected ranks equal realized ranks, so the truth
        # projection equals the fitted coefficients exactly
        spec = tiny_spec(noise_sd=0.0)
        ds, truth = generate(spec)
        ranked = rank_both_scopes(ds)
        boot = BootstrapSpec(replicates=150, seed=5, method=BootMethod.WILD)
        fit, _ = fit_explainable_model(
            ranked, default_design(ds, properties=["init_coverage"]), boot)
        for label in fit.labels:
            assert fit.coefficient(label) == pytest.approx(truth[label], abs=1e-9)

    def test_misspecified_mode_has_no_truth_map(self):
        ds, truth = generate(tiny_spec(latent_on="log_values"))
        assert truth == {}
        assert len(ds) == 2 * 6 * 3

    def test_rank_analysis_linearizes_monotone_link(self):
        # the latent depends on log(raw coverage); Spearman on ranks should
        # still see a strong monotone association for the sensitive fuzzer
        spec = SynthSpec(
            programs=1, trials_per_program=48, noise_sd=0.05, seed=11,
            latent_on="log_values",
            fuzzers=(
                FuzzerModel("flat"),
                FuzzerModel("hungry", sensitivities={"init_coverage": 2.0}),
            ),
            property_models={"init_coverage": PropertyModel("lognormal", (5.0, 2.0))},
        )
        ds, _ = generate(spec)
        rows = [t for t in ds.trials if t.fuzzer == "hungry"]
        rho = spearman_rho([t.properties["init_coverage"] for t in rows],
                           [t.performance for t in rows])
        assert rho > 0.9


class TestSpecSerialization:
    def test_round_trip(self):
        spec = paper_shaped_spec()
        clone = SynthSpec.from_dict(json.loads(json.dumps(spec.to_dict())))
        assert clone == spec

    def test_validation(self):
        with pytest.raises(ComputationError):
            tiny_spec(programs=0)
        with pytest.raises(ComputationError):
            tiny_spec(noise_sd=-1.0)
        with pytest.raises(ComputationError):
            tiny_spec(latent_on="cubic")


class TestPaperShapedFixture:
    def test_dimensions_and_validity(self, paper_dataset):
        assert len(paper_dataset) == 1056
        assert len(paper_dataset.programs) == 11
        assert paper_dataset.fuzzers == ("libfuzzer", "afl", "aflpp", "entropic")
        assert validate_dataset(paper_dataset) == []

    def test_repeatable(self, paper_dataset):
        again = paper_shaped_fixture()
        assert again.trials == paper_dataset.trials
