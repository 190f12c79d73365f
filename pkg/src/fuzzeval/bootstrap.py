"""Nonparametric resampling: pairs bootstrap, wild bootstrap, percentile CIs.

Every replicate derives its own RNG seed from (base seed, replicate index)
through a counter-based mixing function, so results are bit-identical no
matter how replicates are scheduled: serially, in a thread pool, or in any
interleaving.  The aggregation step indexes replicate outputs by replicate
number before computing quantiles.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .errors import ComputationError

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15

# Mammen two-point weights: mean 0, variance 1, third moment 1.
_MAMMEN_LOW = -(math.sqrt(5.0) - 1.0) / 2.0
_MAMMEN_HIGH = (math.sqrt(5.0) + 1.0) / 2.0
_MAMMEN_P_LOW = (math.sqrt(5.0) + 1.0) / (2.0 * math.sqrt(5.0))

MAX_RETRIES = 10          # per-replicate retries before the resample is skipped
MAX_SKIP_FRACTION = 0.01  # more skipped replicates than this is an error


class BootMethod(enum.Enum):
    PAIRS = "pairs"
    WILD = "wild"


class WildWeights(enum.Enum):
    RADEMACHER = "rademacher"
    MAMMEN = "mammen"


def derive_replicate_seed(seed: int, replicate_index: int) -> int:
    """Counter-based seed mixing (splitmix64 finalizer).

    Pure function of its arguments; distinct indices are guaranteed to give
    distinct seeds because the pre-mix counter map is injective modulo 2**64
    and the finalizer is a bijection.
    """
    z = (seed + (replicate_index + 1) * _GOLDEN) & _MASK64
    z ^= z >> 30
    z = (z * 0xBF58476D1CE4E5B9) & _MASK64
    z ^= z >> 27
    z = (z * 0x94D049BB133111EB) & _MASK64
    z ^= z >> 31
    return z


@dataclass(frozen=True)
class BootstrapSpec:
    """Resampling configuration.

    ``replicates`` must be at least 100 for the percentile interval to be
    meaningful; ``ci_level`` is the two-sided coverage (must exceed 0.5).
    """

    replicates: int = 2000
    seed: int = 0
    method: BootMethod = BootMethod.PAIRS
    wild_weights: WildWeights = WildWeights.RADEMACHER
    ci_level: float = 0.95

    def __post_init__(self) -> None:
        if self.replicates < 100:
            raise ComputationError("bootstrap needs at least 100 replicates for CIs")
        if not 0.5 < self.ci_level < 1.0:
            raise ComputationError(f"ci_level {self.ci_level!r} outside (0.5, 1)")
        if not 0 <= self.seed <= _MASK64:
            raise ComputationError("seed must be an unsigned 64-bit integer")


@dataclass(frozen=True)
class CiEntry:
    estimate: float
    ci_low: float
    ci_high: float
    significant: bool


@dataclass(frozen=True)
class CiTable:
    """Per-term point estimates with percentile confidence intervals.

    ``significant`` means the interval excludes zero.  Percentile intervals
    can exclude the point estimate in strongly skewed cases; ci_low <=
    ci_high always holds.
    """

    entries: dict[str, CiEntry] = field(default_factory=dict)

    def __getitem__(self, label: str) -> CiEntry:
        return self.entries[label]

    def labels(self) -> tuple[str, ...]:
        return tuple(self.entries)

    def to_dict(self) -> dict:
        return {
            label: {
                "estimate": e.estimate,
                "ci_low": e.ci_low,
                "ci_high": e.ci_high,
                "significant": e.significant,
            }
            for label, e in self.entries.items()
        }

    def to_csv_rows(self) -> list[list[str]]:
        rows = [["term", "estimate", "ci_low", "ci_high", "significant"]]
        for label, e in self.entries.items():
            rows.append([
                label,
                repr(e.estimate),
                repr(e.ci_low),
                repr(e.ci_high),
                "true" if e.significant else "false",
            ])
        return rows


def _make_table(
    labels: Sequence[str],
    estimates: np.ndarray,
    replicate_stats: np.ndarray,
    ci_level: float,
) -> CiTable:
    tail = (1.0 - ci_level) / 2.0
    lows = np.quantile(replicate_stats, tail, axis=0)
    highs = np.quantile(replicate_stats, 1.0 - tail, axis=0)
    entries = {}
    for i, label in enumerate(labels):
        low, high = float(lows[i]), float(highs[i])
        entries[label] = CiEntry(
            estimate=float(estimates[i]),
            ci_low=low,
            ci_high=high,
            significant=bool(low > 0.0 or high < 0.0),
        )
    return CiTable(entries=entries)


def _as_stat_vector(value, n_expected: int | None = None) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.ndim != 1:
        raise ComputationError("statistic must return a scalar or 1-D vector")
    if n_expected is not None and arr.size != n_expected:
        raise ComputationError(
            f"statistic returned {arr.size} values, expected {n_expected}"
        )
    return arr


def pairs_bootstrap(
    data: Sequence,
    statistic: Callable,
    spec: BootstrapSpec,
    labels: Sequence[str] | None = None,
    workers: int = 1,
) -> CiTable:
    """Percentile CIs for ``statistic`` by resampling observations.

    ``data`` is an observation table (rows are observations); each replicate
    draws len(data) rows with replacement and evaluates the statistic, which
    may return a scalar or a vector.  A replicate whose statistic raises is
    retried with a fresh derived seed up to MAX_RETRIES times and then
    skipped; more than MAX_SKIP_FRACTION skipped replicates is an error.
    """
    rows = np.asarray(data)
    n = rows.shape[0]
    if n < 3:
        raise ComputationError("pairs bootstrap needs at least 3 observations")

    estimates = _as_stat_vector(statistic(rows))
    if labels is None:
        labels = [f"stat_{i}" for i in range(estimates.size)]
    elif len(labels) != estimates.size:
        raise ComputationError("label count does not match statistic size")

    def run_replicate(index: int) -> np.ndarray | None:
        seed = derive_replicate_seed(spec.seed, index)
        for attempt in range(MAX_RETRIES + 1):
            if attempt > 0:
                seed = derive_replicate_seed(derive_replicate_seed(spec.seed, index), attempt)
            rng = np.random.default_rng(seed)
            sample = rows[rng.integers(0, n, size=n)]
            try:
                return _as_stat_vector(statistic(sample), estimates.size)
            except Exception:
                continue
        return None

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_replicate, range(spec.replicates)))
    else:
        results = [run_replicate(i) for i in range(spec.replicates)]

    kept = [r for r in results if r is not None]
    skipped = spec.replicates - len(kept)
    if skipped > MAX_SKIP_FRACTION * spec.replicates:
        raise ComputationError(
            f"{skipped}/{spec.replicates} bootstrap replicates failed"
        )
    return _make_table(labels, estimates, np.vstack(kept), spec.ci_level)


def _wild_weight_matrix(
    spec: BootstrapSpec, n_draws: int, workers: int
) -> np.ndarray:
    """One weight column per replicate, each drawn from its own derived RNG."""

    def draw(index: int) -> np.ndarray:
        rng = np.random.default_rng(derive_replicate_seed(spec.seed, index))
        if spec.wild_weights is WildWeights.RADEMACHER:
            return rng.integers(0, 2, size=n_draws).astype(float) * 2.0 - 1.0
        return np.where(rng.random(n_draws) < _MAMMEN_P_LOW, _MAMMEN_LOW, _MAMMEN_HIGH)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            columns = list(pool.map(draw, range(spec.replicates)))
    else:
        columns = [draw(i) for i in range(spec.replicates)]
    return np.column_stack(columns)


def wild_bootstrap(
    X: np.ndarray,
    y: np.ndarray,
    spec: BootstrapSpec,
    labels: Sequence[str] | None = None,
    workers: int = 1,
    clusters: Sequence | None = None,
) -> CiTable:
    """Heteroscedasticity-robust CIs for linear-model coefficients.

    Fits once, then repeatedly rescales the residuals by mean-zero
    unit-variance weights (Rademacher or Mammen), refits on the perturbed
    response, and takes percentile intervals over the replicate
    coefficients.  By default every observation gets its own i.i.d.
    weight; passing ``clusters`` (one group id per row) draws one weight
    per cluster instead, preserving within-cluster residual correlation
    (needed for grouped responses such as per-trial rank panels, whose
    within-group residuals are negatively correlated by construction).
    The design is fixed, so refits reuse one QR factorization and cannot
    fail; zero-residual data yields zero-width intervals.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.size:
        raise ComputationError("X must be 2-D and y 1-D with matching rows")
    n, k = X.shape
    if labels is None:
        labels = [f"b{i}" for i in range(k)]
    elif len(labels) != k:
        raise ComputationError("label count does not match column count")

    q, r = np.linalg.qr(X)
    diag = np.abs(np.diag(r))
    if diag.size and diag.min() <= 1e-10 * max(diag.max(), 1.0):
        raise ComputationError("design matrix is rank deficient")
    coef = scipy.linalg.solve_triangular(r, q.T @ y)
    fitted = X @ coef
    residuals = y - fitted

    if clusters is None:
        weights = _wild_weight_matrix(spec, n, workers)
    else:
        if len(clusters) != n:
            raise ComputationError("cluster ids must match the number of rows")
        ids = {c: i for i, c in enumerate(dict.fromkeys(clusters))}
        membership = np.array([ids[c] for c in clusters])
        weights = _wild_weight_matrix(spec, len(ids), workers)[membership]
    perturbed = fitted[:, None] + residuals[:, None] * weights
    replicate_coefs = scipy.linalg.solve_triangular(r, q.T @ perturbed).T
    return _make_table(labels, coef, replicate_coefs, spec.ci_level)
