"""Trial records, the benchmark-property vocabulary, and dataset I/O.

A dataset is "long" format: one row per (program, fuzzer, trial).  Benchmark
properties (attributes of the program or of the trial's initial seed corpus)
are duplicated on each fuzzer's row and must agree across fuzzers within a
(program, trial) cell, because all fuzzers of a trial share the same corpus
and program.
"""

from __future__ import annotations

import csv
import json
import math
import sys
from dataclasses import dataclass, field
from typing import Iterable, TextIO

from .errors import DataValidationError

# Properties of the initial seed corpus (vary per trial).
CORPUS_PROPERTY_KEYS = frozenset({
    "seed_count",
    "init_coverage",
    "mean_exec_ns",
    "mean_seed_bytes",
    "corpus_total_bytes",
})

# Properties of the target program (constant across a program's trials).
PROGRAM_PROPERTY_KEYS = frozenset({
    "program_text_bytes",
    "eq_proportion",
    "ineq_proportion",
    "extern_call_proportion",
})

KNOWN_PROPERTY_KEYS = CORPUS_PROPERTY_KEYS | PROGRAM_PROPERTY_KEYS

# Keys whose values are proportions and must lie in [0, 1].  init_coverage is
# deliberately not listed: it may be an absolute branch count or a fraction.
PROPORTION_KEYS = frozenset({
    "eq_proportion",
    "ineq_proportion",
    "extern_call_proportion",
})


@dataclass(frozen=True)
class TrialRecord:
    """One fuzzing trial: identity, benchmark properties, and performance.

    ``performance`` is the coverage achieved at the end of the campaign
    (branches covered).  ``properties`` maps property names to finite reals;
    unknown names are allowed and flow through the analysis unchanged.
    """

    program: str
    fuzzer: str
    trial: int
    performance: float
    properties: dict[str, float] = field(default_factory=dict)

    @property
    def key(self) -> tuple[str, str, int]:
        return (self.program, self.fuzzer, self.trial)


@dataclass(frozen=True)
class Dataset:
    """An immutable collection of trial records.

    ``fuzzers`` and ``programs`` preserve first-appearance order.  Records
    are stored as given; validity is checked by :func:`validate_dataset`
    (and enforced by :func:`load_dataset`), not at construction, so that
    diagnostics can be produced for broken data.
    """

    trials: tuple[TrialRecord, ...]

    def __init__(self, trials: Iterable[TrialRecord]):
        object.__setattr__(self, "trials", tuple(trials))

    @property
    def fuzzers(self) -> tuple[str, ...]:
        return tuple(dict.fromkeys(t.fuzzer for t in self.trials))

    @property
    def programs(self) -> tuple[str, ...]:
        return tuple(dict.fromkeys(t.program for t in self.trials))

    @property
    def property_keys(self) -> tuple[str, ...]:
        """All property names present, in first-appearance order."""
        keys: dict[str, None] = {}
        for t in self.trials:
            keys.update(dict.fromkeys(t.properties))
        return tuple(keys)

    def cells(self) -> tuple[tuple[str, int], ...]:
        """Distinct (program, trial) pairs in first-appearance order."""
        return tuple(dict.fromkeys((t.program, t.trial) for t in self.trials))

    def rows_by_cell(self) -> dict[tuple[str, int], list[TrialRecord]]:
        out: dict[tuple[str, int], list[TrialRecord]] = {}
        for t in self.trials:
            out.setdefault((t.program, t.trial), []).append(t)
        return out

    def __len__(self) -> int:
        return len(self.trials)


@dataclass(frozen=True)
class Diagnostic:
    """One invariant violation, located by (program, trial, key)."""

    code: str
    message: str
    program: str | None = None
    trial: int | None = None
    key: str | None = None

    def __str__(self) -> str:
        loc = ", ".join(
            f"{name}={value}"
            for name, value in (("program", self.program), ("trial", self.trial), ("key", self.key))
            if value is not None
        )
        return f"[{self.code}] {self.message}" + (f" ({loc})" if loc else "")


def validate_dataset(dataset: Dataset) -> list[Diagnostic]:
    """Check every dataset invariant; return one diagnostic per violation.

    An empty list means the dataset is valid.  Checked invariants:

    * (program, fuzzer, trial) triples are unique
    * all property values and performances are finite; performance >= 0
    * proportion-typed properties lie in [0, 1]
    * every (program, trial) cell contains the same set of fuzzers
      (balanced panel: all fuzzers of a trial start from the same corpus)
    * property values agree exactly across fuzzers within a cell
      (benchmark properties describe the corpus/program, not the fuzzer)
    """
    out: list[Diagnostic] = []

    seen: set[tuple[str, str, int]] = set()
    for t in dataset.trials:
        if t.key in seen:
            out.append(Diagnostic(
                "duplicate-row",
                f"duplicate (program, fuzzer, trial) = ({t.program}, {t.fuzzer}, {t.trial})",
                t.program, t.trial,
            ))
        seen.add(t.key)

        if not isinstance(t.trial, int) or t.trial < 0:
            out.append(Diagnostic(
                "bad-trial-index", f"trial index {t.trial!r} is not a non-negative integer",
                t.program, t.trial if isinstance(t.trial, int) else None,
            ))
        if not math.isfinite(t.performance):
            out.append(Diagnostic(
                "non-finite", f"performance {t.performance!r} is not finite",
                t.program, t.trial, "performance",
            ))
        elif t.performance < 0:
            out.append(Diagnostic(
                "negative-performance", f"performance {t.performance!r} is negative",
                t.program, t.trial, "performance",
            ))
        for key, value in t.properties.items():
            if not math.isfinite(value):
                out.append(Diagnostic(
                    "non-finite", f"property {key}={value!r} is not finite",
                    t.program, t.trial, key,
                ))
            elif key in PROPORTION_KEYS and not 0.0 <= value <= 1.0:
                out.append(Diagnostic(
                    "proportion-range", f"property {key}={value!r} outside [0, 1]",
                    t.program, t.trial, key,
                ))

    all_fuzzers = set(dataset.fuzzers)
    for (program, trial), rows in dataset.rows_by_cell().items():
        cell_fuzzers = {r.fuzzer for r in rows}
        if cell_fuzzers != all_fuzzers:
            missing = sorted(all_fuzzers - cell_fuzzers)
            out.append(Diagnostic(
                "unbalanced-panel",
                f"cell lists fuzzers {sorted(cell_fuzzers)}, missing {missing}",
                program, trial,
            ))
        keys = set()
        for r in rows:
            keys.update(r.properties)
        for key in sorted(keys):
            values = {r.properties[key] for r in rows if key in r.properties}
            present_in_all = all(key in r.properties for r in rows)
            if not present_in_all or len(values) > 1:
                out.append(Diagnostic(
                    "property-mismatch",
                    f"property {key} differs across fuzzers within the cell",
                    program, trial, key,
                ))

    return out


_BASE_COLUMNS = ("program", "fuzzer", "trial", "performance")


def _parse_row(values: dict[str, str], line: int) -> TrialRecord:
    def fail(msg: str) -> DataValidationError:
        return DataValidationError(f"line {line}: {msg}")

    try:
        trial = int(values["trial"])
    except ValueError:
        raise fail(f"trial {values['trial']!r} is not an integer") from None
    try:
        performance = float(values["performance"])
    except ValueError:
        raise fail(f"performance {values['performance']!r} is not a number") from None
    if not math.isfinite(performance):
        raise fail(f"performance {values['performance']!r} is not finite")

    properties: dict[str, float] = {}
    for key, raw in values.items():
        if key in _BASE_COLUMNS:
            continue
        if raw is None or raw == "":
            continue  # absent property for this trial
        try:
            value = float(raw)
        except ValueError:
            raise fail(f"property {key}={raw!r} is not a number") from None
        if not math.isfinite(value):
            raise fail(f"property {key}={raw!r} is not finite")
        properties[key] = value

    return TrialRecord(
        program=values["program"],
        fuzzer=values["fuzzer"],
        trial=trial,
        performance=performance,
        properties=properties,
    )


def _finish_load(records: list[TrialRecord], source: str) -> Dataset:
    dataset = Dataset(records)
    problems = validate_dataset(dataset)
    if problems:
        listing = "\n".join(f"  {d}" for d in problems)
        raise DataValidationError(f"{source}: invalid dataset:\n{listing}")
    return dataset


def load_dataset(path: str, format: str | None = None, validate: bool = True) -> Dataset:
    """Load and validate a dataset from a CSV or JSON file.

    ``format`` is inferred from the extension when omitted.  ``path`` may be
    ``"-"`` to read CSV from stdin.  Raises :class:`DataValidationError`
    naming the offending line for malformed rows, and listing every violated
    invariant for structurally broken datasets.  ``validate=False`` skips
    the invariant check (rows must still parse), so that diagnostics can be
    produced for a broken file instead of an exception.
    """
    if path == "-":
        return load_dataset_csv(sys.stdin, source="<stdin>", validate=validate)
    if format is None:
        format = "json" if path.endswith(".json") else "csv"
    if format == "csv":
        with open(path, newline="", encoding="utf-8") as handle:
            return load_dataset_csv(handle, source=path, validate=validate)
    if format == "json":
        with open(path, encoding="utf-8") as handle:
            return load_dataset_json(handle, source=path, validate=validate)
    raise ValueError(f"unknown dataset format {format!r}")


def load_dataset_csv(handle: TextIO, source: str = "<csv>", validate: bool = True) -> Dataset:
    reader = csv.reader(handle)
    try:
        header = next(reader)
    except StopIteration:
        raise DataValidationError(f"{source}: empty file") from None
    missing = [c for c in _BASE_COLUMNS if c not in header]
    if missing:
        raise DataValidationError(f"{source}: header missing columns {missing}")

    records = []
    for line, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise DataValidationError(
                f"{source}: line {line}: expected {len(header)} fields, got {len(row)}"
            )
        try:
            records.append(_parse_row(dict(zip(header, row)), line))
        except DataValidationError as err:
            raise DataValidationError(f"{source}: {err}") from None
    return _finish_load(records, source) if validate else Dataset(records)


def load_dataset_json(handle: TextIO, source: str = "<json>", validate: bool = True) -> Dataset:
    try:
        data = json.load(handle)
    except json.JSONDecodeError as err:
        raise DataValidationError(f"{source}: invalid JSON: {err}") from None
    if not isinstance(data, list):
        raise DataValidationError(f"{source}: expected an array of row objects")
    records = []
    for index, obj in enumerate(data):
        if not isinstance(obj, dict):
            raise DataValidationError(f"{source}: entry {index} is not an object")
        missing = [c for c in _BASE_COLUMNS if c not in obj]
        if missing:
            raise DataValidationError(f"{source}: entry {index} missing fields {missing}")
        values = {k: ("" if v is None else str(v)) for k, v in obj.items()}
        try:
            records.append(_parse_row(values, index))
        except DataValidationError as err:
            raise DataValidationError(f"{source}: entry {err}") from None
    return _finish_load(records, source) if validate else Dataset(records)


def _format_number(value: float) -> str:
    # repr() of a float is the shortest decimal that round-trips exactly.
    if isinstance(value, int):
        return str(value)
    return repr(float(value))


def save_dataset(dataset: Dataset, path: str, format: str | None = None) -> None:
    """Write a dataset in the canonical exchange format (CSV or JSON).

    Numeric fields are written as shortest round-tripping decimals, so a
    save/load cycle preserves every value bit for bit.
    """
    if format is None:
        format = "json" if path.endswith(".json") else "csv"
    if path == "-":
        write_dataset_csv(dataset, sys.stdout)
        return
    with open(path, "w", newline="", encoding="utf-8") as handle:
        if format == "csv":
            write_dataset_csv(dataset, handle)
        elif format == "json":
            write_dataset_json(dataset, handle)
        else:
            raise ValueError(f"unknown dataset format {format!r}")


def write_dataset_csv(dataset: Dataset, handle: TextIO) -> None:
    keys = dataset.property_keys
    writer = csv.writer(handle, lineterminator="\n")
    writer.writerow(list(_BASE_COLUMNS) + list(keys))
    for t in dataset.trials:
        row = [t.program, t.fuzzer, str(t.trial), _format_number(t.performance)]
        row += [
            _format_number(t.properties[k]) if k in t.properties else ""
            for k in keys
        ]
        writer.writerow(row)


def write_dataset_json(dataset: Dataset, handle: TextIO) -> None:
    rows = []
    for t in dataset.trials:
        obj: dict[str, object] = {
            "program": t.program,
            "fuzzer": t.fuzzer,
            "trial": t.trial,
            "performance": t.performance,
        }
        obj.update(t.properties)
        rows.append(obj)
    json.dump(rows, handle, indent=2)
    handle.write("\n")
