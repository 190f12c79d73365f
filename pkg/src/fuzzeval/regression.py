"""Design matrices, least squares, and the explainable-evaluation models.

The central model regresses the per-trial fuzzer rank on benchmark-property
ranks with the choice of fuzzer as a categorical interaction:

    rank = intercept
         + sum_p beta_p * (X_p - ref_p)
         + sum_f gamma_f * Y_f
         + sum_{p,f} omega_{p,f} * (X_p - ref_p) * Y_f

where X_p are property ranks, ref_p the reference levels, and Y_f indicator
variables for every non-reference fuzzer.  Corpus properties enter in
within-program rank units (1..trials); program-level properties such as
text-segment size enter in program rank units (1..programs), so "a ten-rank
increase in program size" reads as moving ten positions in the
smallest-to-largest program ordering.

Least squares is solved by Householder QR, not the normal equations;
interaction columns can be near-collinear and the orthogonalized solve
keeps them well behaved.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
import scipy.linalg
import scipy.stats

from .bootstrap import BootMethod, BootstrapSpec, CiTable, pairs_bootstrap, wild_bootstrap
from .data_model import Dataset, KNOWN_PROPERTY_KEYS, PROGRAM_PROPERTY_KEYS
from .errors import ComputationError
from .ranking import (
    RankScope,
    RankedDataset,
    is_program_level,
    program_rank_rows,
)

INTERCEPT_LABEL = "intercept"

# Properties entering the default explainable model.  Corpus size
# (seed_count) is excluded because it is nearly collinear with initial
# coverage; the instruction-mix proportions are excluded for parsimony.
# Any of them can be reinstated through a custom DesignSpec.
DEFAULT_MODEL_PROPERTIES = (
    "init_coverage",
    "mean_exec_ns",
    "mean_seed_bytes",
    "program_text_bytes",
)


def uses_program_rank_units(dataset: Dataset, key: str) -> bool:
    """Program-level keys are ranked per program; everything else per trial."""
    if key in PROGRAM_PROPERTY_KEYS:
        return True
    if key in KNOWN_PROPERTY_KEYS:
        return False
    return is_program_level(dataset, key)


@dataclass(frozen=True)
class DesignSpec:
    """Configuration of the explainable-evaluation design matrix."""

    properties: tuple[str, ...]
    fuzzers: tuple[str, ...]
    reference_fuzzer: str
    reference_level: dict[str, float] = field(default_factory=dict)
    include_interactions: bool = True
    per_benchmark: bool = False

    def __post_init__(self) -> None:
        if self.reference_fuzzer not in self.fuzzers:
            raise ComputationError(
                f"reference fuzzer {self.reference_fuzzer!r} not among {self.fuzzers}"
            )
        unknown = [k for k in self.reference_level if k not in self.properties]
        if unknown:
            raise ComputationError(f"reference levels for unknown properties {unknown}")

    def to_dict(self) -> dict:
        return {
            "properties": list(self.properties),
            "fuzzers": list(self.fuzzers),
            "reference_fuzzer": self.reference_fuzzer,
            "reference_level": dict(self.reference_level),
            "include_interactions": self.include_interactions,
            "per_benchmark": self.per_benchmark,
        }

    @staticmethod
    def from_dict(data: Mapping) -> "DesignSpec":
        return DesignSpec(
            properties=tuple(data["properties"]),
            fuzzers=tuple(data["fuzzers"]),
            reference_fuzzer=data["reference_fuzzer"],
            reference_level={k: float(v) for k, v in data["reference_level"].items()},
            include_interactions=bool(data["include_interactions"]),
            per_benchmark=bool(data["per_benchmark"]),
        )


def default_design(
    dataset: Dataset,
    reference_fuzzer: str | None = None,
    properties: Sequence[str] | None = None,
    per_benchmark: bool = False,
) -> DesignSpec:
    """DesignSpec with the default property set and reference levels.

    Corpus properties are referenced at the lowest rank (1); program-level
    properties at the median program rank.  The reference fuzzer defaults
    to "libfuzzer" when present, otherwise the dataset's first fuzzer.
    """
    fuzzers = dataset.fuzzers
    if not fuzzers:
        raise ComputationError("dataset has no fuzzers")
    if reference_fuzzer is None:
        reference_fuzzer = "libfuzzer" if "libfuzzer" in fuzzers else fuzzers[0]
    if properties is None:
        present = set(dataset.property_keys)
        properties = [k for k in DEFAULT_MODEL_PROPERTIES if k in present]
    if not properties:
        raise ComputationError("no model properties present in the dataset")
    reference_level = {
        key: ((len(dataset.programs) + 1) / 2.0 if uses_program_rank_units(dataset, key) else 1.0)
        for key in properties
    }
    return DesignSpec(
        properties=tuple(properties),
        fuzzers=fuzzers,
        reference_fuzzer=reference_fuzzer,
        reference_level=reference_level,
        include_interactions=True,
        per_benchmark=per_benchmark,
    )


def resolved_reference_levels(dataset: Dataset, spec: DesignSpec) -> dict[str, float]:
    """Reference levels with defaults filled for unspecified properties."""
    out = {}
    for key in spec.properties:
        if key in spec.reference_level:
            out[key] = spec.reference_level[key]
        elif uses_program_rank_units(dataset, key):
            out[key] = (len(dataset.programs) + 1) / 2.0
        else:
            out[key] = 1.0
    return out


def property_rank_units(ranked: RankedDataset, key: str) -> np.ndarray:
    if uses_program_rank_units(ranked.base, key):
        return program_rank_rows(ranked.base, key)
    return ranked.property_rank(key, RankScope.WITHIN_PROGRAM)


def build_design_matrix(
    ranked: RankedDataset, spec: DesignSpec
) -> tuple[np.ndarray, np.ndarray, list[str]]:
    """Assemble (X, response, column labels) for the explainable model.

    One row per (program, trial, fuzzer).  Columns: intercept, centered
    property ranks, non-reference fuzzer indicators, and (optionally) their
    products.  In per-benchmark mode the whole set is replicated per
    program; property columns that are constant within a program (the
    program-level ones) are dropped inside the blocks because they are
    aliased with the block intercepts.
    """
    dataset = ranked.base
    refs = resolved_reference_levels(dataset, spec)

    centered: dict[str, np.ndarray] = {}
    for key in spec.properties:
        centered[key] = property_rank_units(ranked, key) - refs[key]

    others = [f for f in spec.fuzzers if f != spec.reference_fuzzer]
    indicators = {
        f: np.array([1.0 if t.fuzzer == f else 0.0 for t in dataset.trials])
        for f in others
    }

    columns: list[np.ndarray] = []
    labels: list[str] = []

    def add(label: str, column: np.ndarray) -> None:
        labels.append(label)
        columns.append(column)

    if not spec.per_benchmark:
        add(INTERCEPT_LABEL, np.ones(len(dataset)))
        for key in spec.properties:
            add(f"prop:{key}", centered[key])
        for f in others:
            add(f"fuzzer:{f}", indicators[f])
        if spec.include_interactions:
            for key in spec.properties:
                for f in others:
                    add(f"inter:{key}:{f}", centered[key] * indicators[f])
    else:
        block_keys = [
            k for k in spec.properties if not uses_program_rank_units(dataset, k)
        ]
        for program in dataset.programs:
            mask = np.array([1.0 if t.program == program else 0.0 for t in dataset.trials])
            prefix = f"prog:{program}|"
            add(prefix + INTERCEPT_LABEL, mask)
            for key in block_keys:
                add(prefix + f"prop:{key}", centered[key] * mask)
            for f in others:
                add(prefix + f"fuzzer:{f}", indicators[f] * mask)
            if spec.include_interactions:
                for key in block_keys:
                    for f in others:
                        add(prefix + f"inter:{key}:{f}", centered[key] * indicators[f] * mask)

    X = np.column_stack(columns)
    response = np.asarray(ranked.fuzzer_rank, dtype=float)
    return X, response, labels


@dataclass(frozen=True)
class RegressionFit:
    """An ordinary-least-squares fit with labeled coefficients.

    ``fitted + residuals`` reproduces the response; residuals are
    orthogonal to every design column up to rounding.  For explainable
    models the coefficient vector decomposes into the intercept, the
    property effects (beta), the fuzzer offsets (gamma), and the
    interaction effects (omega), addressable through the properties below.
    """

    labels: tuple[str, ...]
    coef: np.ndarray
    fitted: np.ndarray
    residuals: np.ndarray
    r2: float
    r2_adjusted: float
    f_p_value: float
    median_abs_residual: float
    design: DesignSpec | None = None

    def coefficient(self, label: str) -> float:
        try:
            return float(self.coef[self.labels.index(label)])
        except ValueError:
            raise ComputationError(f"no coefficient named {label!r}") from None

    @property
    def intercept(self) -> float:
        return self.coefficient(INTERCEPT_LABEL)

    @property
    def beta(self) -> dict[str, float]:
        return {
            label[len("prop:"):]: float(c)
            for label, c in zip(self.labels, self.coef)
            if label.startswith("prop:")
        }

    @property
    def gamma(self) -> dict[str, float]:
        return {
            label[len("fuzzer:"):]: float(c)
            for label, c in zip(self.labels, self.coef)
            if label.startswith("fuzzer:")
        }

    @property
    def omega(self) -> dict[tuple[str, str], float]:
        out = {}
        for label, c in zip(self.labels, self.coef):
            if label.startswith("inter:"):
                _, key, fuzzer = label.split(":", 2)
                out[(key, fuzzer)] = float(c)
        return out

    def to_dict(self) -> dict:
        return {
            "labels": list(self.labels),
            "coef": [float(c) for c in self.coef],
            "r2": self.r2,
            "r2_adjusted": self.r2_adjusted,
            "f_p_value": self.f_p_value,
            "median_abs_residual": self.median_abs_residual,
            "design": self.design.to_dict() if self.design else None,
        }


def ols_fit(
    X: np.ndarray,
    y: np.ndarray,
    labels: Sequence[str] | None = None,
    rank_rtol: float = 1e-10,
) -> RegressionFit:
    """Least squares via Householder QR with a tolerance-based rank check.

    Raises when rows < columns or when a design column is (numerically)
    linearly dependent on its predecessors, naming the offending column.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.size:
        raise ComputationError("X must be 2-D and y 1-D with matching rows")
    n, k = X.shape
    if n < k:
        raise ComputationError(f"underdetermined system: {n} rows < {k} columns")
    if labels is None:
        labels = tuple(f"b{i}" for i in range(k))
    else:
        labels = tuple(labels)
        if len(labels) != k:
            raise ComputationError("label count does not match column count")

    q, r = np.linalg.qr(X)
    diag = np.abs(np.diag(r))
    threshold = rank_rtol * max(float(diag.max(initial=0.0)), 1e-300)
    deficient = np.where(diag <= threshold)[0]
    if deficient.size:
        raise ComputationError(
            f"design matrix is rank deficient at column {labels[deficient[0]]!r}"
        )
    coef = scipy.linalg.solve_triangular(r, q.T @ y)
    fitted = X @ coef
    residuals = y - fitted

    ss_res = float(residuals @ residuals)
    centered = y - y.mean()
    ss_tot = float(centered @ centered)
    r2 = 0.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    df_model = k - 1
    df_resid = n - k
    if df_resid > 0:
        r2_adjusted = 1.0 - (1.0 - r2) * (n - 1) / df_resid
    else:
        r2_adjusted = r2
    if df_model <= 0 or df_resid <= 0 or ss_tot == 0.0:
        f_p_value = 1.0
    elif ss_res == 0.0:
        f_p_value = 0.0
    else:
        f_stat = (ss_tot - ss_res) / df_model / (ss_res / df_resid)
        f_p_value = float(scipy.stats.f.sf(f_stat, df_model, df_resid))

    return RegressionFit(
        labels=labels,
        coef=coef,
        fitted=fitted,
        residuals=residuals,
        r2=r2,
        r2_adjusted=r2_adjusted,
        f_p_value=f_p_value,
        median_abs_residual=float(np.median(np.abs(residuals))),
    )


@dataclass(frozen=True)
class SlopeEstimate:
    """Per-fuzzer simple-regression slope of rank on one property rank."""

    fuzzer: str
    property: str
    slope: float
    ci_low: float
    ci_high: float
    significant: bool


def _simple_slope(xy: np.ndarray) -> float:
    x = xy[:, 0]
    y = xy[:, 1]
    sx = x - x.mean()
    denom = float(sx @ sx)
    if denom == 0.0:
        raise ComputationError("slope undefined: constant predictor")
    return float(sx @ (y - y.mean()) / denom)


def per_fuzzer_slopes(
    ranked: RankedDataset,
    key: str,
    scope: RankScope = RankScope.WITHIN_PROGRAM,
    boot: BootstrapSpec | None = None,
    workers: int = 1,
) -> list[SlopeEstimate]:
    """Slope of each fuzzer's per-trial rank against one property's rank.

    Confidence intervals come from a pairs bootstrap of that fuzzer's
    (property rank, fuzzer rank) observations; an effect is significant
    when the interval excludes zero.
    """
    if boot is None:
        boot = BootstrapSpec()
    property_rows = ranked.property_rank(key, scope)
    out = []
    for fuzzer in ranked.base.fuzzers:
        rows = [i for i, t in enumerate(ranked.base.trials) if t.fuzzer == fuzzer]
        if len(rows) < 3:
            raise ComputationError(
                f"fuzzer {fuzzer!r} has only {len(rows)} observations; need >= 3"
            )
        xy = np.column_stack([property_rows[rows], ranked.fuzzer_rank[rows]])
        table = pairs_bootstrap(xy, _simple_slope, boot, labels=["slope"], workers=workers)
        entry = table["slope"]
        # a constant predictor in the original data is a caller error, but
        # _simple_slope already raised inside pairs_bootstrap's estimate call
        out.append(SlopeEstimate(
            fuzzer=fuzzer,
            property=key,
            slope=entry.estimate,
            ci_low=entry.ci_low,
            ci_high=entry.ci_high,
            significant=entry.significant,
        ))
    return out


def fit_explainable_model(
    ranked: RankedDataset,
    spec: DesignSpec,
    boot: BootstrapSpec | None = None,
    workers: int = 1,
) -> tuple[RegressionFit, CiTable]:
    """Fit the rank-response model and bootstrap a CI for every coefficient.

    The wild bootstrap (the default) resamples residual signs on the fixed
    design and is robust to the heteroscedasticity typical of rank
    responses.  Weights are drawn per (program, trial): the fuzzer ranks of
    one trial sum to a constant, so their residuals are correlated and
    per-observation weights would understate coefficient variance.
    BootMethod.PAIRS resamples whole observations instead.
    """
    if boot is None:
        boot = BootstrapSpec(method=BootMethod.WILD)
    spec = replace(spec, reference_level=resolved_reference_levels(ranked.base, spec))
    X, y, labels = build_design_matrix(ranked, spec)
    fit = replace(ols_fit(X, y, labels=labels), design=spec)

    if boot.method is BootMethod.WILD:
        trial_of_row = [(t.program, t.trial) for t in ranked.base.trials]
        table = wild_bootstrap(
            X, y, boot, labels=labels, workers=workers, clusters=trial_of_row,
        )
    else:
        def refit(sample: np.ndarray) -> np.ndarray:
            return ols_fit(sample[:, :-1], sample[:, -1], labels=labels).coef

        table = pairs_bootstrap(
            np.column_stack([X, y]), refit, boot, labels=labels, workers=workers
        )
    return fit, table


def predict_rank(
    fit: RegressionFit,
    fuzzer: str,
    property_ranks: Mapping[str, float] | None = None,
) -> float:
    """Evaluate the fitted linear form at given property ranks.

    Ranks are given in the model's own units (within-program trial ranks
    for corpus properties, program ranks for program-level ones); the
    stored reference levels are subtracted before applying the
    coefficients.  Properties not mentioned sit at their reference level.
    """
    spec = fit.design
    if spec is None:
        raise ComputationError("this fit carries no design; cannot predict")
    if spec.per_benchmark:
        raise ComputationError("prediction requires the pooled model, not per-benchmark")
    if fuzzer not in spec.fuzzers:
        raise ComputationError(f"unknown fuzzer {fuzzer!r}")
    property_ranks = dict(property_ranks or {})
    unknown = [k for k in property_ranks if k not in spec.properties]
    if unknown:
        raise ComputationError(f"unknown properties {unknown}")

    beta = fit.beta
    omega = fit.omega
    value = fit.intercept
    if fuzzer != spec.reference_fuzzer:
        value += fit.gamma[fuzzer]
    for key in spec.properties:
        if key not in property_ranks:
            continue
        delta = property_ranks[key] - spec.reference_level[key]
        value += beta[key] * delta
        if spec.include_interactions and fuzzer != spec.reference_fuzzer:
            value += omega[(key, fuzzer)] * delta
    return float(value)


def rank_crossover(
    fit: RegressionFit,
    fuzzer_a: str,
    fuzzer_b: str,
    vary_key: str,
    at: Mapping[str, float] | None = None,
) -> float:
    """Property rank at which the predictions of two fuzzers meet.

    Holding every other property at ``at`` (default: reference levels),
    the two predictions are linear in the varied property's rank; returns
    the rank where they intersect.  Raises when the two lines are parallel.
    """
    spec = fit.design
    if spec is None:
        raise ComputationError("this fit carries no design; cannot predict")
    if vary_key not in spec.properties:
        raise ComputationError(f"unknown property {vary_key!r}")
    base = dict(at or {})
    base.pop(vary_key, None)
    reference = spec.reference_level[vary_key]

    def slope(fuzzer: str) -> float:
        s = fit.beta[vary_key]
        if spec.include_interactions and fuzzer != spec.reference_fuzzer:
            s += fit.omega[(vary_key, fuzzer)]
        return s

    gap_slope = slope(fuzzer_b) - slope(fuzzer_a)
    at_reference = dict(base, **{vary_key: reference})
    gap_at_reference = predict_rank(fit, fuzzer_b, at_reference) - predict_rank(
        fit, fuzzer_a, at_reference
    )
    if gap_slope == 0.0:
        raise ComputationError(
            f"predictions for {fuzzer_a!r} and {fuzzer_b!r} are parallel in {vary_key!r}"
        )
    return float(reference - gap_at_reference / gap_slope)
