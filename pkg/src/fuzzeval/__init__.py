"""Explainable fuzzer-benchmark evaluation.

Quantifies how much of a fuzzer comparison is explained by the choice of
fuzzer versus properties of the benchmark (seed corpus and target program),
using rank statistics, effect sizes, per-fuzzer rank regressions, and a
multiple linear regression with fuzzer interaction terms, all with
bootstrap confidence intervals and model diagnostics.
"""

from .bench_props import (
    CorpusManifest,
    DisasmSummary,
    SeedEntry,
    corpus_properties,
    load_corpus_manifest,
    parse_disassembly,
    parse_section_headers,
    program_properties,
    sample_corpus,
)
from .bootstrap import (
    BootMethod,
    BootstrapSpec,
    CiEntry,
    CiTable,
    WildWeights,
    derive_replicate_seed,
    pairs_bootstrap,
    wild_bootstrap,
)
from .data_model import (
    CORPUS_PROPERTY_KEYS,
    Dataset,
    Diagnostic,
    KNOWN_PROPERTY_KEYS,
    PROGRAM_PROPERTY_KEYS,
    PROPORTION_KEYS,
    TrialRecord,
    load_dataset,
    save_dataset,
    validate_dataset,
)
from .diagnostics import (
    DiagnosticsReport,
    diagnostics_report,
    durbin_watson,
    qq_normal,
    scale_location,
    variance_inflation,
)
from .errors import ComputationError, DataValidationError, FuzzevalError
from .ranking import (
    RankScope,
    RankedDataset,
    fractional_ranks,
    fuzzer_ranks_per_trial,
    program_level_ranks,
    rank_dataset,
)
from .regression import (
    DesignSpec,
    RegressionFit,
    SlopeEstimate,
    build_design_matrix,
    default_design,
    fit_explainable_model,
    ols_fit,
    per_fuzzer_slopes,
    predict_rank,
    rank_crossover,
)
from .report import (
    EvaluationReport,
    ReportConfig,
    build_report,
    emit_plot_data,
    render_text,
    report_json,
)
from .stats import (
    EffectDirection,
    EffectMagnitude,
    EffectSize,
    PairwiseTable,
    classify_effect,
    correlation_matrix,
    mann_whitney_u,
    pairwise_table,
    spearman_rho,
    vargha_delaney_a12,
)
from .synth import (
    FuzzerModel,
    PropertyModel,
    SynthSpec,
    generate,
    paper_shaped_fixture,
    paper_shaped_spec,
)

__version__ = "0.1.0"
