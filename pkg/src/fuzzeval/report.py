"""Full-evaluation reports: correlations, pairwise tables, slopes, the
explainable regression with diagnostics, and plot-data emission.

The JSON form produced by ``report_json`` is authoritative and canonical
(sorted keys, shortest round-trip floats): two runs with the same data,
flags, and seed emit byte-identical documents.  The text rendering and the
plot CSVs are derived views of the same numbers.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .bootstrap import BootMethod, BootstrapSpec, CiTable
from .data_model import Dataset
from .diagnostics import DiagnosticsReport, diagnostics_report
from .errors import ComputationError
from .ranking import RankScope, RankedDataset, rank_dataset
from .regression import (
    DesignSpec,
    RegressionFit,
    SlopeEstimate,
    build_design_matrix,
    default_design,
    fit_explainable_model,
    ols_fit,
    per_fuzzer_slopes,
)
from .stats import PairwiseTable, pairwise_table, spearman_rho


@dataclass(frozen=True)
class ReportConfig:
    """Everything that determines a report besides the dataset itself."""

    boot: BootstrapSpec = field(default_factory=lambda: BootstrapSpec(method=BootMethod.WILD))
    alpha: float = 0.05
    reference_fuzzer: str | None = None
    model_properties: tuple[str, ...] | None = None
    workers: int = 1


@dataclass(frozen=True)
class SpearmanEntry:
    property: str
    scope: RankScope
    rho: float
    n: int


@dataclass(frozen=True)
class EvaluationReport:
    """The complete explainable-evaluation output for one dataset."""

    metadata: dict
    spearman: list[SpearmanEntry]
    pairwise_pooled: PairwiseTable
    pairwise_per_program: dict[str, PairwiseTable]
    slopes: list[SlopeEstimate]
    mlr_fit: RegressionFit
    mlr_ci: CiTable
    per_benchmark_r2: float
    diagnostics: DiagnosticsReport
    ranked: RankedDataset

    def to_dict(self) -> dict:
        return {
            "metadata": self.metadata,
            "spearman": [
                {"property": e.property, "scope": e.scope.value, "rho": e.rho, "n": e.n}
                for e in self.spearman
            ],
            "pairwise": {
                "pooled": self.pairwise_pooled.to_dict(),
                "per_program": {
                    program: table.to_dict()
                    for program, table in self.pairwise_per_program.items()
                },
            },
            "slopes": [
                {
                    "property": s.property,
                    "fuzzer": s.fuzzer,
                    "slope": s.slope,
                    "ci_low": s.ci_low,
                    "ci_high": s.ci_high,
                    "significant": s.significant,
                }
                for s in self.slopes
            ],
            "mlr": {
                "coefficients": self.mlr_ci.to_dict(),
                "r2": self.mlr_fit.r2,
                "r2_adjusted": self.mlr_fit.r2_adjusted,
                "f_p_value": self.mlr_fit.f_p_value,
                "median_abs_residual": self.mlr_fit.median_abs_residual,
                "per_benchmark_r2": self.per_benchmark_r2,
                "design": self.mlr_fit.design.to_dict() if self.mlr_fit.design else None,
            },
            "diagnostics": self.diagnostics.to_dict(),
        }


def _rankable_keys(dataset: Dataset) -> list[str]:
    """Property keys present on every trial (the only ones we can rank)."""
    keys = []
    for key in dataset.property_keys:
        if all(key in t.properties for t in dataset.trials):
            keys.append(key)
    return keys


def rank_both_scopes(dataset: Dataset, keys: list[str] | None = None) -> RankedDataset:
    if keys is None:
        keys = _rankable_keys(dataset)
    within = rank_dataset(dataset, keys, RankScope.WITHIN_PROGRAM)
    return within.merged(rank_dataset(dataset, keys, RankScope.GLOBAL))


def spearman_table(ranked: RankedDataset, keys: list[str]) -> list[SpearmanEntry]:
    """Property-rank vs performance-rank correlation, per key and scope.

    Combinations whose property ranks are all tied are skipped: a
    program-constant property has no within-program ordering to correlate.
    """
    out = []
    n = len(ranked.base)
    for key in keys:
        for scope in (RankScope.WITHIN_PROGRAM, RankScope.GLOBAL):
            prop = ranked.property_rank(key, scope)
            if np.ptp(prop) == 0.0:
                continue
            rho = spearman_rho(prop, ranked.perf_rank[scope])
            out.append(SpearmanEntry(property=key, scope=scope, rho=rho, n=n))
    return out


def pooled_rank_groups(ranked: RankedDataset) -> dict[str, list[float]]:
    """Per-fuzzer samples of per-trial fuzzer ranks, pooled over programs.

    Raw coverage is not comparable across programs, so the pooled pairwise
    comparison works on the per-trial rank each fuzzer achieved.
    """
    groups: dict[str, list[float]] = {f: [] for f in ranked.base.fuzzers}
    for i, t in enumerate(ranked.base.trials):
        groups[t.fuzzer].append(float(ranked.fuzzer_rank[i]))
    return groups


def program_performance_groups(dataset: Dataset, program: str) -> dict[str, list[float]]:
    groups: dict[str, list[float]] = {f: [] for f in dataset.fuzzers}
    for t in dataset.trials:
        if t.program == program:
            groups[t.fuzzer].append(t.performance)
    return groups


def build_report(dataset: Dataset, config: ReportConfig, dataset_path: str = "<memory>") -> EvaluationReport:
    """Run all three analyses on a dataset and assemble the report."""
    keys = _rankable_keys(dataset)
    if not keys:
        raise ComputationError("dataset has no property present on every trial")
    ranked = rank_both_scopes(dataset, keys)

    spearman = spearman_table(ranked, keys)

    pooled = pairwise_table(pooled_rank_groups(ranked), alpha=config.alpha)
    per_program = {
        program: pairwise_table(program_performance_groups(dataset, program), alpha=config.alpha)
        for program in dataset.programs
    }

    pairs_boot = BootstrapSpec(
        replicates=config.boot.replicates,
        seed=config.boot.seed,
        method=BootMethod.PAIRS,
        wild_weights=config.boot.wild_weights,
        ci_level=config.boot.ci_level,
    )
    slopes: list[SlopeEstimate] = []
    for key in keys:
        # program-constant properties have no within-program variation
        if np.ptp(ranked.property_rank(key, RankScope.WITHIN_PROGRAM)) == 0.0:
            continue
        slopes.extend(per_fuzzer_slopes(
            ranked, key, RankScope.WITHIN_PROGRAM, pairs_boot, workers=config.workers,
        ))

    design = default_design(
        dataset,
        reference_fuzzer=config.reference_fuzzer,
        properties=config.model_properties,
    )
    fit, ci = fit_explainable_model(ranked, design, config.boot, workers=config.workers)
    # the per-benchmark interaction model is reported for its fit quality
    # only, so a plain least-squares solve suffices (no CIs)
    per_benchmark_design = default_design(
        dataset,
        reference_fuzzer=config.reference_fuzzer,
        properties=config.model_properties,
        per_benchmark=True,
    )
    pb_X, pb_y, pb_labels = build_design_matrix(ranked, per_benchmark_design)
    per_benchmark_fit = ols_fit(pb_X, pb_y, labels=pb_labels)
    diagnostics = diagnostics_report(fit, ranked, list(design.properties))

    metadata = {
        "dataset": dataset_path,
        "rows": len(dataset),
        "programs": list(dataset.programs),
        "fuzzers": list(dataset.fuzzers),
        "properties": keys,
        "alpha": config.alpha,
        "seed": config.boot.seed,
        "bootstrap_replicates": config.boot.replicates,
        "bootstrap_method": config.boot.method.value,
        "wild_weights": config.boot.wild_weights.value,
        "ci_level": config.boot.ci_level,
        "reference_fuzzer": design.reference_fuzzer,
    }
    return EvaluationReport(
        metadata=metadata,
        spearman=spearman,
        pairwise_pooled=pooled,
        pairwise_per_program=per_program,
        slopes=slopes,
        mlr_fit=fit,
        mlr_ci=ci,
        per_benchmark_r2=per_benchmark_fit.r2,
        diagnostics=diagnostics,
        ranked=ranked,
    )


def report_json(report: EvaluationReport) -> str:
    """Canonical JSON rendering (sorted keys, shortest round-trip floats)."""
    return json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n"


def render_text(report: EvaluationReport) -> str:
    """Human-readable rendering; every number shown here is also present in
    the JSON form."""
    lines: list[str] = []
    meta = report.metadata
    lines.append("explainable fuzzer evaluation")
    lines.append(f"dataset: {meta['dataset']} ({meta['rows']} rows)")
    lines.append(f"programs: {', '.join(meta['programs'])}")
    lines.append(f"fuzzers: {', '.join(meta['fuzzers'])}")
    lines.append(f"seed: {meta['seed']}  bootstrap: {meta['bootstrap_method']} "
                 f"x{meta['bootstrap_replicates']}  alpha: {meta['alpha']!r}")
    lines.append("")

    lines.append("spearman correlation: property rank vs performance rank")
    for e in report.spearman:
        lines.append(f"  {e.property:<24} {e.scope.value:<7} rho={e.rho!r}  n={e.n}")
    lines.append("")

    lines.append("pooled pairwise comparison (row beats column, per-trial ranks)")
    table = report.pairwise_pooled
    lines.append("  " + "          " + "".join(f"{label:>22}" for label in table.labels))
    for i, row_label in enumerate(table.labels):
        cells = "".join(
            f"{repr(float(table.a12[i, j])):>22}" if i != j else f"{'-':>22}"
            for j in range(len(table.labels))
        )
        lines.append(f"  {row_label:<10}" + cells)
    lines.append("")

    lines.append("per-fuzzer rank slopes (within-program property ranks)")
    for s in report.slopes:
        flag = "*" if s.significant else " "
        lines.append(
            f"  {s.property:<24} {s.fuzzer:<12} slope={s.slope!r} "
            f"ci=[{s.ci_low!r}, {s.ci_high!r}] {flag}"
        )
    lines.append("")

    fit = report.mlr_fit
    lines.append("explainable model: fuzzer rank ~ fuzzer x property ranks")
    lines.append(f"  r2={fit.r2!r}  adjusted={fit.r2_adjusted!r}  "
                 f"f_p_value={fit.f_p_value!r}")
    lines.append(f"  median |residual| = {fit.median_abs_residual!r}")
    lines.append(f"  per-benchmark interaction model r2 = {report.per_benchmark_r2!r}")
    for label in fit.labels:
        e = report.mlr_ci[label]
        flag = "*" if e.significant else " "
        lines.append(
            f"  {label:<36} {e.estimate!r} ci=[{e.ci_low!r}, {e.ci_high!r}] {flag}"
        )
    lines.append("")

    d = report.diagnostics
    lines.append("diagnostics")
    lines.append(f"  durbin_watson={d.durbin_watson!r} (p={d.dw_p_value!r})")
    for key, value in d.vif.items():
        lines.append(f"  vif[{key}]={value!r}")
    lines.append("")
    return "\n".join(lines)


def _write_csv(path: str, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _format(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def scatter_rows(report: EvaluationReport, key: str, scope: RankScope) -> list[list[str]]:
    ranked = report.ranked
    prop = ranked.property_rank(key, scope)
    perf = ranked.perf_rank[scope]
    return [
        [repr(float(prop[i])), repr(float(perf[i])), t.program, t.fuzzer]
        for i, t in enumerate(ranked.base.trials)
    ]


def mean_series_rows(report: EvaluationReport, key: str, scope: RankScope) -> list[list[str]]:
    """Average performance rank at every distinct property-rank value."""
    ranked = report.ranked
    prop = ranked.property_rank(key, scope)
    perf = ranked.perf_rank[scope]
    sums: dict[float, list[float]] = {}
    for x, y in zip(prop, perf):
        sums.setdefault(float(x), []).append(float(y))
    return [
        [repr(x), repr(float(np.mean(ys)))]
        for x, ys in sorted(sums.items())
    ]


def slope_line_rows(report: EvaluationReport, key: str) -> list[list[str]]:
    """Fitted line endpoints for every fuzzer on one property."""
    ranked = report.ranked
    prop = ranked.property_rank(key, RankScope.WITHIN_PROGRAM)
    rows: list[list[str]] = []
    estimates = {s.fuzzer: s for s in report.slopes if s.property == key}
    for fuzzer in ranked.base.fuzzers:
        indices = [i for i, t in enumerate(ranked.base.trials) if t.fuzzer == fuzzer]
        x = prop[indices]
        y = ranked.fuzzer_rank[indices]
        slope = estimates[fuzzer].slope
        intercept = float(np.mean(y) - slope * np.mean(x))
        x0, x1 = float(np.min(x)), float(np.max(x))
        rows.append([fuzzer, repr(x0), repr(intercept + slope * x0),
                     repr(x1), repr(intercept + slope * x1)])
    return rows


def scatter_svg(points: list[tuple[float, float]], width: int = 480, height: int = 360) -> str:
    """Minimal self-contained SVG scatter (one circle per point)."""
    if not points:
        return (f'<svg xmlns="http://www.w3.org/2000/svg" '
                f'width="{width}" height="{height}"></svg>')
    xs = [p[0] for p in points]
    ys = [p[1] for p in points]
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(ys), max(ys)
    x_span = (x_hi - x_lo) or 1.0
    y_span = (y_hi - y_lo) or 1.0
    margin = 20
    body = []
    for x, y in points:
        cx = margin + (x - x_lo) / x_span * (width - 2 * margin)
        cy = height - margin - (y - y_lo) / y_span * (height - 2 * margin)
        body.append(f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="2" fill="#555"/>')
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">'
        + "".join(body) + "</svg>"
    )


def emit_plot_data(report: EvaluationReport, directory: str, svg: bool = False) -> list[str]:
    """Write plot-ready CSVs (and optionally SVG scatters); returns the
    manifest of files created, relative to ``directory``."""
    os.makedirs(directory, exist_ok=True)
    if not os.access(directory, os.W_OK):
        raise ComputationError(f"directory {directory!r} is not writable")
    manifest: list[str] = []

    def emit(name: str, header: list[str], rows: list[list[str]]) -> None:
        _write_csv(os.path.join(directory, name), header, rows)
        manifest.append(name)

    keys = report.metadata["properties"]
    keys_with_slopes = {s.property for s in report.slopes}
    for key in keys:
        for scope in (RankScope.WITHIN_PROGRAM, RankScope.GLOBAL):
            name = f"correlate_{key}_{scope.value}.csv"
            emit(name, ["property_rank", "perf_rank", "program", "fuzzer"],
                 scatter_rows(report, key, scope))
            emit(f"correlate_{key}_{scope.value}_means.csv",
                 ["property_rank", "mean_perf_rank"],
                 mean_series_rows(report, key, scope))
        if key in keys_with_slopes:
            emit(f"slopes_{key}.csv",
                 ["fuzzer", "x_start", "y_start", "x_end", "y_end"],
                 slope_line_rows(report, key))

    emit("qq.csv", ["theoretical_quantile", "residual_quantile"],
         [[repr(float(a)), repr(float(b))] for a, b in report.diagnostics.qq_points])
    emit("scale_location.csv", ["fitted", "sqrt_abs_standardized_residual"],
         [[repr(float(a)), repr(float(b))] for a, b in report.diagnostics.scale_location])

    if svg:
        for key in keys:
            ranked = report.ranked
            prop = ranked.property_rank(key, RankScope.WITHIN_PROGRAM)
            perf = ranked.perf_rank[RankScope.WITHIN_PROGRAM]
            points = list(zip(prop.tolist(), perf.tolist()))
            name = f"correlate_{key}_within.svg"
            with open(os.path.join(directory, name), "w", encoding="utf-8") as handle:
                handle.write(scatter_svg(points))
            manifest.append(name)
    return manifest
