"""Nonparametric comparison statistics for fuzzing campaign results.

Vargha-Delaney A12 effect sizes, Spearman rank correlation, the
Mann-Whitney U test (exact for small tie-free samples, tie-corrected
normal approximation otherwise), and pairwise comparison tables.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import ComputationError
from .ranking import RankScope, RankedDataset, fractional_ranks

# Sample-size bound below which the U test enumerates all label assignments.
# C(12, 6) = 924 keeps the worst case cheap.
EXACT_U_MAX_N = 12


class EffectMagnitude(enum.Enum):
    NEGLIGIBLE = "negligible"
    SMALL = "small"
    MEDIUM = "medium"
    LARGE = "large"


class EffectDirection(enum.Enum):
    FIRST_BETTER = "first_better"
    SECOND_BETTER = "second_better"
    NO_DIFFERENCE = "no_difference"


@dataclass(frozen=True)
class EffectSize:
    """A12 value with its conventional magnitude class and direction."""

    a12: float
    magnitude: EffectMagnitude
    direction: EffectDirection


def classify_effect(a12: float) -> EffectSize:
    """Classify an A12 value: large at 0.71/0.29, medium at 0.64/0.36,
    small at 0.56/0.44, negligible in between."""
    if not 0.0 <= a12 <= 1.0:
        raise ComputationError(f"A12 value {a12!r} outside [0, 1]")
    if a12 >= 0.71 or a12 <= 0.29:
        magnitude = EffectMagnitude.LARGE
    elif a12 >= 0.64 or a12 <= 0.36:
        magnitude = EffectMagnitude.MEDIUM
    elif a12 >= 0.56 or a12 <= 0.44:
        magnitude = EffectMagnitude.SMALL
    else:
        magnitude = EffectMagnitude.NEGLIGIBLE
    if a12 > 0.5:
        direction = EffectDirection.FIRST_BETTER
    elif a12 < 0.5:
        direction = EffectDirection.SECOND_BETTER
    else:
        direction = EffectDirection.NO_DIFFERENCE
    return EffectSize(a12=a12, magnitude=magnitude, direction=direction)


def vargha_delaney_a12(x: Sequence[float], y: Sequence[float]) -> float:
    """Probability that a random value of ``x`` exceeds a random value of
    ``y``, ties counted half.

    Computed from the rank sum of ``x`` in the pooled sample, which equals
    the pair count (#{x_i > y_j} + 0.5 #{x_i = y_j}) / (|x| |y|) exactly:
    fractional ranks are half-integers, so the numerator is exact and the
    single division matches a direct pair enumeration bit for bit.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size == 0 or y.size == 0:
        raise ComputationError("A12 requires two non-empty samples")
    m, n = x.size, y.size
    ranks = fractional_ranks(np.concatenate([x, y]))
    rank_sum_x = float(np.sum(ranks[:m]))
    return (rank_sum_x - m * (m + 1) / 2.0) / (m * n)


def spearman_rho(x: Sequence[float], y: Sequence[float]) -> float:
    """Spearman rank correlation: Pearson correlation of fractional ranks.

    Tie-correct by construction; the classical 1 - 6*sum(d^2)/(n(n^2-1))
    shortcut is equivalent only on tie-free data.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size != y.size:
        raise ComputationError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < 2:
        raise ComputationError("correlation requires at least 2 observations")
    rx = fractional_ranks(x)
    ry = fractional_ranks(y)
    sx = rx - rx.mean()
    sy = ry - ry.mean()
    vx = float(np.sum(sx * sx))
    vy = float(np.sum(sy * sy))
    if vx == 0.0 or vy == 0.0:
        raise ComputationError("correlation undefined for a constant sample")
    # single square root keeps perfectly monotone data at exactly +/- 1
    rho = float(np.dot(sx, sy) / math.sqrt(vx * vy))
    return min(1.0, max(-1.0, rho))


def _normal_sf(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def _exact_u_p_value(pooled: np.ndarray, m: int, u_observed: float) -> float:
    """Two-sided p by enumerating all C(m+n, m) assignments of the pooled
    values to the first sample.  Only called on tie-free pools."""
    total = pooled.size
    order = np.argsort(pooled)
    # position in the sorted pool = rank - 1 (no ties)
    position = np.empty(total, dtype=float)
    position[order] = np.arange(1, total + 1)
    mean_u = m * (total - m) / 2.0
    observed_deviation = abs(u_observed - mean_u)
    count = 0
    n_assignments = 0
    for subset in itertools.combinations(range(total), m):
        rank_sum = sum(position[list(subset)])
        u = rank_sum - m * (m + 1) / 2.0
        if abs(u - mean_u) >= observed_deviation - 1e-12:
            count += 1
        n_assignments += 1
    return count / n_assignments


def mann_whitney_u(
    x: Sequence[float],
    y: Sequence[float],
    alternative: str = "two-sided",
) -> tuple[float, float]:
    """Mann-Whitney U test of stochastic equality of two samples.

    Returns (U of the first sample, p-value).  Small tie-free pools
    (m + n <= 12) use exact enumeration for the two-sided test; everything
    else uses the normal approximation with tie-corrected variance and a
    0.5 continuity correction.  Two constant, equal samples give p = 1.
    """
    if alternative not in ("two-sided", "greater", "less"):
        raise ComputationError(f"unknown alternative {alternative!r}")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size == 0 or y.size == 0:
        raise ComputationError("the U test requires two non-empty samples")
    m, n = int(x.size), int(y.size)
    pooled = np.concatenate([x, y])
    ranks = fractional_ranks(pooled)
    u_x = float(np.sum(ranks[:m])) - m * (m + 1) / 2.0

    total = m + n
    _, tie_counts = np.unique(pooled, return_counts=True)
    has_ties = bool(np.any(tie_counts > 1))

    if alternative == "two-sided" and not has_ties and total <= EXACT_U_MAX_N:
        return u_x, _exact_u_p_value(pooled, m, u_x)

    tie_term = float(np.sum(tie_counts.astype(float) ** 3 - tie_counts))
    variance = m * n / 12.0 * ((total + 1) - tie_term / (total * (total - 1)))
    if variance <= 0.0:
        # every pooled value identical: no evidence of any difference
        return u_x, 1.0
    sd = math.sqrt(variance)
    mean_u = m * n / 2.0
    if alternative == "two-sided":
        z = max(0.0, abs(u_x - mean_u) - 0.5) / sd
        p = 2.0 * _normal_sf(z)
    elif alternative == "greater":
        z = (u_x - mean_u - 0.5) / sd
        p = _normal_sf(z)
    else:
        z = (u_x - mean_u + 0.5) / sd
        p = 1.0 - _normal_sf(z)
    return u_x, min(1.0, max(0.0, p))


@dataclass(frozen=True)
class PairwiseTable:
    """All-pairs A12 / U-test comparison of named groups.

    ``a12[i][j]`` estimates P(group i beats group j); the matrix satisfies
    a12[i][j] + a12[j][i] == 1 exactly and has 0.5 on the diagonal.  The
    p matrix is symmetric; ``significant`` flags p < alpha.
    """

    labels: tuple[str, ...]
    a12: np.ndarray
    p: np.ndarray
    significant: np.ndarray
    alpha: float

    def to_dict(self) -> dict:
        return {
            "labels": list(self.labels),
            "alpha": self.alpha,
            "a12": [[float(v) for v in row] for row in self.a12],
            "p": [[float(v) for v in row] for row in self.p],
            "significant": [[bool(v) for v in row] for row in self.significant],
        }


def pairwise_table(
    groups: Mapping[str, Sequence[float]],
    alpha: float = 0.05,
    alternative: str = "two-sided",
) -> PairwiseTable:
    """Build the pairwise A12 / Mann-Whitney table for >= 2 groups."""
    labels = tuple(groups)
    if len(labels) < 2:
        raise ComputationError("pairwise comparison requires at least 2 groups")
    samples = [np.asarray(groups[label], dtype=float) for label in labels]
    for label, sample in zip(labels, samples):
        if sample.size == 0:
            raise ComputationError(f"group {label!r} is empty")

    k = len(labels)
    a12 = np.full((k, k), 0.5)
    p = np.ones((k, k))
    for i in range(k):
        for j in range(i + 1, k):
            a = vargha_delaney_a12(samples[i], samples[j])
            a12[i, j] = a
            a12[j, i] = 1.0 - a
            _, p_value = mann_whitney_u(samples[i], samples[j], alternative=alternative)
            p[i, j] = p[j, i] = p_value
    significant = p < alpha
    np.fill_diagonal(significant, False)
    return PairwiseTable(labels=labels, a12=a12, p=p, significant=significant, alpha=alpha)


def correlation_matrix(
    ranked: RankedDataset,
    keys: Sequence[str],
    scope: RankScope = RankScope.WITHIN_PROGRAM,
) -> np.ndarray:
    """Spearman correlation matrix of property ranks, one observation per
    (program, trial) cell, pooled across programs."""
    if len(keys) < 2:
        raise ComputationError("a correlation matrix requires at least 2 keys")
    cells = ranked.base.cells()
    cell_index = {cell: i for i, cell in enumerate(cells)}
    # one representative row per cell (property ranks repeat across fuzzers)
    representative = {}
    for row, t in enumerate(ranked.base.trials):
        representative.setdefault(cell_index[(t.program, t.trial)], row)
    rows = [representative[i] for i in range(len(cells))]

    columns = [ranked.property_rank(key, scope)[rows] for key in keys]
    k = len(keys)
    out = np.eye(k)
    for i in range(k):
        for j in range(i + 1, k):
            rho = spearman_rho(columns[i], columns[j])
            out[i, j] = out[j, i] = rho
    return out
