import io
import json
import pathlib

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fuzzeval.bench_props import (
    CorpusManifest,
    DisasmSummary,
    SeedEntry,
    corpus_properties,
    exponential_sample_sizes,
    load_corpus_manifest,
    parse_disassembly,
    parse_section_headers,
    program_properties,
    sample_corpus,
)
from fuzzeval.errors import ComputationError, DataValidationError

from oracles import union_size_bitset

FIXTURES = pathlib.Path(__file__).parent / "fixtures"


def entry(seed_id, size, exec_ns, covered):
    return SeedEntry(seed_id, size, exec_ns, frozenset(covered))


class TestCorpusProperties:
    def test_hand_arithmetic(self):
        manifest = CorpusManifest(entries=(
            entry("s1", 100, 10, {1, 2}),
            entry("s2", 300, 30, {2, 3}),
        ))
        props = corpus_properties(manifest)
        assert props["seed_count"] == 2
        assert props["mean_seed_bytes"] == 200
        assert props["mean_exec_ns"] == 20
        assert props["corpus_total_bytes"] == 400
        assert props["init_coverage"] == 3
        assert "init_coverage_fraction" not in props

    def test_seed_covering_nothing(self):
        manifest = CorpusManifest(entries=(entry("s1", 10, 1, set()),))
        assert corpus_properties(manifest)["init_coverage"] == 0

    def test_fraction_with_universe(self):
        manifest = CorpusManifest(entries=(entry("s1", 10, 1, {0, 1, 2}),), universe=12)
        props = corpus_properties(manifest)
        assert props["init_coverage_fraction"] == 0.25

    def test_union_matches_bitset_oracle(self):
        rng = np.random.default_rng(13)
        universe = 5000
        entries = tuple(
            entry(f"s{i}", 10, 1, set(rng.integers(0, universe, size=80).tolist()))
            for i in range(1000)
        )
        manifest = CorpusManifest(entries=entries, universe=universe)
        expected = union_size_bitset([e.covered for e in entries], universe)
        assert corpus_properties(manifest)["init_coverage"] == expected

    def test_permutation_invariance(self):
        entries = [entry(f"s{i}", 10 * i + 1, i + 1, {i, i + 1}) for i in range(20)]
        forward = corpus_properties(CorpusManifest(entries=tuple(entries)))
        backward = corpus_properties(CorpusManifest(entries=tuple(reversed(entries))))
        assert forward == backward

    def test_empty_manifest_rejected(self):
        with pytest.raises(ComputationError):
            corpus_properties(CorpusManifest(entries=()))

    def test_duplicate_ids_rejected(self):
        with pytest.raises(DataValidationError):
            CorpusManifest(entries=(entry("s", 1, 1, set()), entry("s", 2, 2, set())))

    def test_branch_outside_universe_rejected(self):
        with pytest.raises(DataValidationError):
            CorpusManifest(entries=(entry("s", 1, 1, {99}),), universe=10)


class TestManifestLoader:
    def test_with_pragma(self):
        text = "#universe=100\nseed_id,size_bytes,exec_ns,covered\na,10,5,1;2;3\nb,20,7,\n"
        manifest = load_corpus_manifest(io.StringIO(text))
        assert manifest.universe == 100
        assert manifest.entries[0].covered == frozenset({1, 2, 3})
        assert manifest.entries[1].covered == frozenset()

    def test_bad_header(self):
        with pytest.raises(DataValidationError, match="header"):
            load_corpus_manifest(io.StringIO("wrong,header\n"))

    def test_bad_number_names_line(self):
        text = "seed_id,size_bytes,exec_ns,covered\na,xx,5,\n"
        with pytest.raises(DataValidationError, match="line 2"):
            load_corpus_manifest(io.StringIO(text))


class TestSectionHeaders:
    def test_hex_size_line(self):
        text = "  12 .text  0001a2b0  0000000000401000  0000000000401000  00001000  2**4\n"
        assert parse_section_headers(text) == 107184

    def test_missing_text_section(self):
        with pytest.raises(DataValidationError, match=".text"):
            parse_section_headers("  0 .data  00000010  0 0 0 2**0\n")

    def test_fixture_matches_recorded_size(self):
        tally = json.loads((FIXTURES / "disasm_500.tally.json").read_text())
        text = (FIXTURES / "section_headers.txt").read_text()
        assert parse_section_headers(text) == tally["text_bytes"]


class TestDisassembly:
    def test_small_snippet(self):
        text = (
            "  401000:\t74 0a       \tje     40100c <f+0xc>\n"
            "  401002:\t75 08       \tjne    40100c <f+0xc>\n"
            "  401004:\t7c 06       \tjl     40100c <f+0xc>\n"
            "  401006:\te8 00 00 00 00 \tcall   401030 <foo@plt>\n"
            "  40100b:\te8 10 00 00 00 \tcall   401020 <bar>\n"
        )
        summary = parse_disassembly(text)
        assert summary.cond_branches_eq == 2
        assert summary.cond_branches_ineq == 1
        assert summary.calls_total == 2
        assert summary.calls_extern == 1

    def test_empty_input(self):
        assert parse_disassembly("") == DisasmSummary()

    def test_unknown_mnemonics_ignored(self):
        text = "  401000:\t0f ae f0\t mfence\n  401003:\t90\t nop\n"
        assert parse_disassembly(text) == DisasmSummary()

    def test_byte_continuation_lines_skipped(self):
        text = "  401000:\t48 8d 3d c3 0e 00 00\n"
        assert parse_disassembly(text) == DisasmSummary()

    def test_fixture_matches_hand_tally(self):
        tally = json.loads((FIXTURES / "disasm_500.tally.json").read_text())
        summary = parse_disassembly((FIXTURES / "disasm_500.txt").read_text())
        assert summary.cond_branches_eq == tally["eq"]
        assert summary.cond_branches_ineq == tally["ineq"]
        assert summary.calls_total == tally["calls_total"]
        assert summary.calls_extern == tally["calls_extern"]

    def test_concatenation_is_additive(self):
        first = (FIXTURES / "disasm_500.txt").read_text()
        second = (
            "  500000:\t74 02\tje     500010 <g+0x4>\n"
            "  500002:\te8 01 02 03 04\tcall   500100 <quux@plt>\n"
        )
        combined = parse_disassembly(first + second)
        assert combined == parse_disassembly(first) + parse_disassembly(second)


class TestProgramProperties:
    def test_even_split(self):
        summary = DisasmSummary(cond_branches_eq=2, cond_branches_ineq=2,
                                calls_total=4, calls_extern=1)
        props = program_properties(summary)
        assert props["eq_proportion"] == 0.5
        assert props["ineq_proportion"] == 0.5
        assert props["extern_call_proportion"] == 0.25

    def test_zero_denominators_omit_keys(self):
        props = program_properties(DisasmSummary())
        assert props == {}

    def test_text_bytes_passthrough(self):
        props = program_properties(DisasmSummary(text_bytes=4096))
        assert props == {"program_text_bytes": 4096.0}

    def test_fixture_ratios(self):
        tally = json.loads((FIXTURES / "disasm_500.tally.json").read_text())
        summary = parse_disassembly((FIXTURES / "disasm_500.txt").read_text())
        props = program_properties(summary)
        comparisons = tally["eq"] + tally["ineq"]
        assert props["eq_proportion"] == tally["eq"] / comparisons
        assert props["extern_call_proportion"] == tally["calls_extern"] / tally["calls_total"]

    def test_extern_never_exceeds_total(self):
        with pytest.raises(DataValidationError):
            DisasmSummary(calls_total=1, calls_extern=2)


class TestSampler:
    def test_singleton_pool(self):
        assert sample_corpus(["only"], seed=1) == ["only"]

    def test_deterministic(self):
        pool = [f"seed{i}" for i in range(100)]
        assert sample_corpus(pool, seed=42) == sample_corpus(pool, seed=42)

    def test_empty_pool_rejected(self):
        with pytest.raises(ComputationError):
            sample_corpus([])

    @given(st.integers(min_value=1, max_value=400), st.integers(min_value=0, max_value=2**32))
    def test_subset_without_duplicates(self, pool_size, seed):
        pool = [f"s{i}" for i in range(pool_size)]
        sample = sample_corpus(pool, seed=seed)
        assert 1 <= len(sample) <= pool_size
        assert len(set(sample)) == len(sample)
        assert set(sample) <= set(pool)

    def test_preclamp_mean_near_target(self):
        draws = exponential_sample_sizes(1000, 0.2, seed=7, draws=20_000)
        assert abs(draws.mean() - 200.0) < 5.0

    def test_bad_fraction_rejected(self):
        with pytest.raises(ComputationError):
            sample_corpus(["a"], mean_fraction=0.0)
