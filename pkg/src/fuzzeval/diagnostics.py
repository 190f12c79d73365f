"""Assumption checks for the rank-response regression models.

Durbin-Watson for residual independence, normal QQ data, scale-location
data for homoscedasticity, and variance inflation factors for
multicolinearity screening.  These produce plot-ready data rather than
figures; the CLI writes them as CSV.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.special

from .errors import ComputationError
from .ranking import RankedDataset
from .regression import RegressionFit, property_rank_units, ols_fit

VIF_FLAG_THRESHOLD = 5.0


@dataclass(frozen=True)
class DiagnosticsReport:
    durbin_watson: float
    dw_p_value: float
    qq_points: np.ndarray          # (n, 2): theoretical quantile, residual quantile
    scale_location: np.ndarray     # (n, 2): fitted value, sqrt |standardized residual|
    vif: dict[str, float]
    r2: float
    r2_adjusted: float
    median_abs_residual: float

    def to_dict(self) -> dict:
        return {
            "durbin_watson": self.durbin_watson,
            "dw_p_value": self.dw_p_value,
            "qq_points": [[float(a), float(b)] for a, b in self.qq_points],
            "scale_location": [[float(a), float(b)] for a, b in self.scale_location],
            "vif": {k: v for k, v in self.vif.items()},
            "r2": self.r2,
            "r2_adjusted": self.r2_adjusted,
            "median_abs_residual": self.median_abs_residual,
            "vif_flag_threshold": VIF_FLAG_THRESHOLD,
        }


def durbin_watson(residuals: np.ndarray) -> tuple[float, float]:
    """First-order serial-correlation statistic of residuals, with a
    two-sided p-value from the design-free normal approximation
    DW ~ N(2, 4/n) under independence.

    The residuals must be in observation order; the statistic is 2 for
    uncorrelated residuals, near 0 under strong positive correlation, and
    near 4 under strong negative correlation.
    """
    e = np.asarray(residuals, dtype=float)
    if e.size < 3:
        raise ComputationError("Durbin-Watson needs at least 3 residuals")
    denom = float(e @ e)
    if denom == 0.0:
        raise ComputationError("Durbin-Watson undefined for all-zero residuals")
    diffs = np.diff(e)
    dw = float(diffs @ diffs) / denom
    z = (dw - 2.0) / (2.0 / math.sqrt(e.size))
    p = math.erfc(abs(z) / math.sqrt(2.0))
    return dw, p


def qq_normal(residuals: np.ndarray) -> np.ndarray:
    """Points for a normal QQ plot of standardized residuals.

    The i-th point is (ndtri((i - 0.5)/n), i-th order statistic of e/s)
    with s the sample standard deviation of the residuals.  Residuals that
    already are standard-normal quantiles map onto the identity line.
    """
    e = np.asarray(residuals, dtype=float)
    if e.size < 3:
        raise ComputationError("QQ data needs at least 3 residuals")
    s = float(e.std(ddof=1))
    if s == 0.0:
        raise ComputationError("QQ data undefined for zero-variance residuals")
    n = e.size
    theoretical = scipy.special.ndtri((np.arange(1, n + 1) - 0.5) / n)
    return np.column_stack([theoretical, np.sort(e / s)])


def scale_location(fit: RegressionFit) -> np.ndarray:
    """(fitted value, sqrt |standardized residual|) pairs, sorted by fit.

    A flat trend across fitted values indicates homoscedastic residuals.
    """
    e = np.asarray(fit.residuals, dtype=float)
    s = float(e.std(ddof=1))
    if s == 0.0:
        raise ComputationError("scale-location undefined for zero-variance residuals")
    order = np.argsort(fit.fitted, kind="stable")
    return np.column_stack([
        fit.fitted[order],
        np.sqrt(np.abs(e[order] / s)),
    ])


def variance_inflation(
    ranked: RankedDataset,
    keys: list[str],
) -> dict[str, float]:
    """VIF of each property's ranks against the other properties' ranks.

    VIF_k = 1 / (1 - R^2_k), one observation per (program, trial) cell.
    Properties use the same rank units as the explainable model: trial
    ranks within the program for corpus properties, program ranks for
    program-level ones (whose within-program ranks are all ties and would
    be degenerate).  Perfectly collinear properties get the +inf sentinel.
    Values above VIF_FLAG_THRESHOLD conventionally flag problematic
    collinearity.
    """
    if len(keys) < 2:
        raise ComputationError("VIF needs at least 2 properties")
    cells = ranked.base.cells()
    cell_index = {cell: i for i, cell in enumerate(cells)}
    representative: dict[int, int] = {}
    for row, t in enumerate(ranked.base.trials):
        representative.setdefault(cell_index[(t.program, t.trial)], row)
    rows = [representative[i] for i in range(len(cells))]
    if len(rows) < len(keys) + 2:
        raise ComputationError(
            f"VIF needs at least {len(keys) + 2} observations, have {len(rows)}"
        )

    columns = {key: property_rank_units(ranked, key)[rows] for key in keys}
    out: dict[str, float] = {}
    for key in keys:
        y = columns[key]
        others = [columns[k] for k in keys if k != key]
        X = np.column_stack([np.ones(len(rows))] + others)
        try:
            fit = ols_fit(X, y)
        except ComputationError:
            out[key] = math.inf  # the other predictors are themselves collinear
            continue
        if fit.r2 >= 1.0 - 1e-12:
            out[key] = math.inf
        else:
            out[key] = max(1.0, 1.0 / (1.0 - fit.r2))
    return out


def diagnostics_report(
    fit: RegressionFit,
    ranked: RankedDataset,
    keys: list[str],
    ordering: np.ndarray | None = None,
) -> DiagnosticsReport:
    """Assemble the full diagnostics bundle for a fitted model.

    ``ordering`` indexes residuals into the observation order assumed by
    the serial-correlation test.  The default sorts rows by
    (fuzzer, program, trial), so consecutive residuals belong to successive
    trials of the same fuzzer and the statistic measures trial-to-trial
    dependence.  Interleaving the fuzzers of one trial instead would force
    DW above 2 mechanically: a trial's ranks sum to a constant, so its
    residuals are negatively correlated by construction.
    """
    if ordering is None:
        rows = ranked.base.trials
        ordering = np.array(sorted(
            range(len(rows)),
            key=lambda i: (rows[i].fuzzer, rows[i].program, rows[i].trial),
        ))
    dw, dw_p = durbin_watson(fit.residuals[ordering])
    return DiagnosticsReport(
        durbin_watson=dw,
        dw_p_value=dw_p,
        qq_points=qq_normal(fit.residuals),
        scale_location=scale_location(fit),
        vif=variance_inflation(ranked, list(keys)) if len(keys) >= 2 else {},
        r2=fit.r2,
        r2_adjusted=fit.r2_adjusted,
        median_abs_residual=fit.median_abs_residual,
    )
