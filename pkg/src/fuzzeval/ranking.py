"""Rank transformation of benchmark properties and responses.

All ranking is fractional (average-of-ties) and ascending: the smallest
value gets rank 1.  For the per-trial fuzzer ranking this means rank
|fuzzers| is the best fuzzer of the trial (most coverage) and rank 1 the
worst, so a positive regression coefficient downstream reads as "ranking
improves".
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import scipy.stats

from .data_model import Dataset
from .errors import ComputationError


class RankScope(enum.Enum):
    """Grouping used when ranking trials.

    WITHIN_PROGRAM ranks the trials of each program separately (1..T per
    program); GLOBAL ranks all (program, trial) cells of the dataset in one
    group.
    """

    WITHIN_PROGRAM = "within"
    GLOBAL = "global"


def fractional_ranks(values: Sequence[float]) -> np.ndarray:
    """Ascending fractional ranks with average-rank tie handling.

    The rank of an element is (number of strictly smaller elements) +
    (1 + number of equal elements) / 2, so every group of n ranks sums to
    n(n+1)/2 regardless of ties.
    """
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise ComputationError("cannot rank an empty sequence")
    if not np.all(np.isfinite(arr)):
        raise ComputationError("cannot rank non-finite values")
    return scipy.stats.rankdata(arr, method="average")


@dataclass(frozen=True)
class RankedDataset:
    """A dataset together with rank-transformed columns.

    Arrays are aligned with ``base.trials`` (one entry per row).  Property
    ranks are computed once per (program, trial) cell and broadcast to that
    cell's fuzzer rows; performance ranks are computed within each fuzzer's
    own series so that rank scales match the property ranks; fuzzer ranks
    compare the fuzzers of one trial against each other.
    """

    base: Dataset
    property_ranks: dict[tuple[str, RankScope], np.ndarray]
    perf_rank: dict[RankScope, np.ndarray]
    fuzzer_rank: np.ndarray

    def property_rank(self, key: str, scope: RankScope) -> np.ndarray:
        try:
            return self.property_ranks[(key, scope)]
        except KeyError:
            raise ComputationError(
                f"property {key!r} not ranked at scope {scope.value!r}"
            ) from None

    def merged(self, other: "RankedDataset") -> "RankedDataset":
        """Combine rank maps of two rankings of the same base dataset."""
        if other.base is not self.base and other.base.trials != self.base.trials:
            raise ComputationError("cannot merge rankings of different datasets")
        return RankedDataset(
            base=self.base,
            property_ranks={**self.property_ranks, **other.property_ranks},
            perf_rank={**self.perf_rank, **other.perf_rank},
            fuzzer_rank=self.fuzzer_rank,
        )


def _cell_values(dataset: Dataset, key: str) -> tuple[list[tuple[str, int]], list[float]]:
    """Per-cell property values, in cell first-appearance order."""
    cells = dataset.cells()
    by_cell = dataset.rows_by_cell()
    values = []
    for cell in cells:
        rows = by_cell[cell]
        row = next((r for r in rows if key in r.properties), None)
        if row is None:
            raise ComputationError(
                f"property {key!r} missing on trial {cell[1]} of program {cell[0]!r}"
            )
        values.append(row.properties[key])
    return list(cells), values


def _rank_cells(dataset: Dataset, key: str, scope: RankScope) -> dict[tuple[str, int], float]:
    cells, values = _cell_values(dataset, key)
    ranks: dict[tuple[str, int], float] = {}
    if scope is RankScope.GLOBAL:
        for cell, rank in zip(cells, fractional_ranks(values)):
            ranks[cell] = rank
    else:
        groups: dict[str, list[int]] = {}
        for index, (program, _) in enumerate(cells):
            groups.setdefault(program, []).append(index)
        for indices in groups.values():
            group_ranks = fractional_ranks([values[i] for i in indices])
            for i, rank in zip(indices, group_ranks):
                ranks[cells[i]] = rank
    return ranks


def _perf_ranks(dataset: Dataset, scope: RankScope) -> np.ndarray:
    """Rank each row's performance within its own fuzzer's series.

    WITHIN_PROGRAM groups by (program, fuzzer); GLOBAL groups by fuzzer
    across all programs.  Grouping per fuzzer keeps the comparison fair:
    each fuzzer's trials are ranked on the same scale as the property
    ranks they are plotted against.
    """
    out = np.empty(len(dataset), dtype=float)
    groups: dict[object, list[int]] = {}
    for index, t in enumerate(dataset.trials):
        group = (t.program, t.fuzzer) if scope is RankScope.WITHIN_PROGRAM else t.fuzzer
        groups.setdefault(group, []).append(index)
    for indices in groups.values():
        values = [dataset.trials[i].performance for i in indices]
        out[indices] = fractional_ranks(values)
    return out


def _fuzzer_rank_array(dataset: Dataset) -> np.ndarray:
    out = np.empty(len(dataset), dtype=float)
    groups: dict[tuple[str, int], list[int]] = {}
    for index, t in enumerate(dataset.trials):
        groups.setdefault((t.program, t.trial), []).append(index)
    for indices in groups.values():
        values = [dataset.trials[i].performance for i in indices]
        out[indices] = fractional_ranks(values)
    return out


def rank_dataset(dataset: Dataset, keys: Iterable[str], scope: RankScope) -> RankedDataset:
    """Rank the given property keys and the performance at one scope.

    Property ranks are per (program, trial) cell, broadcast onto every
    fuzzer row of the cell.  Fuzzer ranks (per-trial ranking of the fuzzers
    against each other) are always included.
    """
    keys = list(dict.fromkeys(keys))
    cell_index = {cell: i for i, cell in enumerate(dataset.cells())}
    row_cells = [cell_index[(t.program, t.trial)] for t in dataset.trials]

    property_ranks: dict[tuple[str, RankScope], np.ndarray] = {}
    cells = dataset.cells()
    for key in keys:
        per_cell = _rank_cells(dataset, key, scope)
        cell_arr = np.array([per_cell[c] for c in cells])
        property_ranks[(key, scope)] = cell_arr[row_cells]

    return RankedDataset(
        base=dataset,
        property_ranks=property_ranks,
        perf_rank={scope: _perf_ranks(dataset, scope)},
        fuzzer_rank=_fuzzer_rank_array(dataset),
    )


def fuzzer_ranks_per_trial(dataset: Dataset) -> dict[tuple[str, int, str], float]:
    """Rank the fuzzers of every trial against each other by performance.

    Returns a map (program, trial, fuzzer) -> fractional rank in
    [1, |fuzzers|], rank |fuzzers| being the trial's best fuzzer.
    """
    ranks = _fuzzer_rank_array(dataset)
    return {
        (t.program, t.trial, t.fuzzer): float(ranks[i])
        for i, t in enumerate(dataset.trials)
    }


def program_level_ranks(dataset: Dataset, key: str) -> dict[str, float]:
    """Rank programs 1..|programs| by a program-constant property.

    Used for properties such as program size where the meaningful rank unit
    is the program's position when programs are sorted by the property, not
    the trial's position.  The property must be constant across each
    program's trials.
    """
    per_program: dict[str, float] = {}
    for t in dataset.trials:
        if key not in t.properties:
            raise ComputationError(
                f"property {key!r} missing on trial {t.trial} of program {t.program!r}"
            )
        value = t.properties[key]
        if t.program in per_program:
            if per_program[t.program] != value:
                raise ComputationError(
                    f"property {key!r} is not constant within program {t.program!r}"
                )
        else:
            per_program[t.program] = value
    programs = list(per_program)
    ranks = fractional_ranks([per_program[p] for p in programs])
    return {p: float(r) for p, r in zip(programs, ranks)}


def program_rank_rows(dataset: Dataset, key: str) -> np.ndarray:
    """Program-level ranks of ``key`` broadcast onto every row."""
    per_program = program_level_ranks(dataset, key)
    return np.array([per_program[t.program] for t in dataset.trials])


def is_program_level(dataset: Dataset, key: str) -> bool:
    """True when the property is constant within every program."""
    per_program: dict[str, float] = {}
    for t in dataset.trials:
        if key not in t.properties:
            return False
        value = t.properties[key]
        if per_program.setdefault(t.program, value) != value:
            return False
    return True
