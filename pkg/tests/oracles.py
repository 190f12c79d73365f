"""Independent test oracles.

Deliberately implemented with different algorithms than the production
code: pair enumeration instead of rank sums, sort-and-scan instead of
scipy ranking, normal equations instead of QR, bisection on a series-based
CDF instead of a rational inverse, and so on.  Slow is fine here.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def a12_pair_count(x, y) -> float:
    """Vargha-Delaney effect size by explicit double-loop pair counting."""
    greater = 0.0
    for xi in x:
        for yj in y:
            if xi > yj:
                greater += 1.0
            elif xi == yj:
                greater += 0.5
    return greater / (len(x) * len(y))


def ranks_by_sort(values) -> list[float]:
    """Fractional ranks via stable sort and a tie-block scan."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        average = (i + j) / 2.0 + 1.0  # positions are 0-based
        for k in range(i, j + 1):
            ranks[order[k]] = average
        i = j + 1
    return ranks


def spearman_shortcut(x, y) -> float:
    """1 - 6 sum(d^2) / (n (n^2 - 1)); valid only without ties."""
    n = len(x)
    rx = ranks_by_sort(x)
    ry = ranks_by_sort(y)
    d2 = sum((a - b) ** 2 for a, b in zip(rx, ry))
    return 1.0 - 6.0 * d2 / (n * (n * n - 1))


def ols_normal_equations(X, y) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    return np.linalg.solve(X.T @ X, X.T @ y)


def mann_whitney_exact_p(x, y) -> float:
    """Two-sided exact p-value by enumerating label assignments and
    counting pairwise wins directly (no rank sums)."""
    pooled = list(x) + list(y)
    m = len(x)
    mean_u = m * len(y) / 2.0

    def u_of(first_indices) -> float:
        first = [pooled[i] for i in first_indices]
        rest = [pooled[i] for i in range(len(pooled)) if i not in first_indices]
        u = 0.0
        for a in first:
            for b in rest:
                if a > b:
                    u += 1.0
                elif a == b:
                    u += 0.5
        return u

    observed = abs(u_of(frozenset(range(m))) - mean_u)
    total = 0
    hits = 0
    for combo in itertools.combinations(range(len(pooled)), m):
        total += 1
        if abs(u_of(frozenset(combo)) - mean_u) >= observed - 1e-12:
            hits += 1
    return hits / total


def erf_series(x: float) -> float:
    """Maclaurin series of erf; accurate to double precision for |x| <= 3."""
    total = 0.0
    term = x
    n = 0
    while abs(term) > 1e-18 * max(1.0, abs(total)):
        total += term / (2 * n + 1)
        n += 1
        term *= -x * x / n
        if n > 200:
            break
    return 2.0 / math.sqrt(math.pi) * total


def normal_cdf_series(x: float) -> float:
    return 0.5 * (1.0 + erf_series(x / math.sqrt(2.0)))


def inverse_normal_bisect(p: float, tol: float = 1e-10) -> float:
    """Inverse standard-normal CDF by bisection on the series CDF.

    Valid for p corresponding to |z| <= 3 (the series oracle's domain).
    """
    lo, hi = -3.0, 3.0
    if not normal_cdf_series(lo) < p < normal_cdf_series(hi):
        raise ValueError(f"p={p} outside the oracle's bisection range")
    while hi - lo > tol:
        mid = (lo + hi) / 2.0
        if normal_cdf_series(mid) < p:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2.0


def union_size_bitset(covered_sets, universe: int) -> int:
    """Union cardinality via an explicit bitset."""
    bits = bytearray((universe + 7) // 8)
    for covered in covered_sets:
        for branch in covered:
            bits[branch >> 3] |= 1 << (branch & 7)
    return sum(bin(b).count("1") for b in bits)
