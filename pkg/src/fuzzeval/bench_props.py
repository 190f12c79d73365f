"""Benchmark-property extraction from corpus manifests and objdump text.

Program properties come from tool-output text (section-header and
disassembly dumps in objdump's tabular layouts) rather than from binaries,
which keeps extraction dependency-free and testable with plain-text
fixtures.  Corpus properties come from a manifest CSV describing each
seed's size, execution time, and covered branches.  The exponential corpus
sampler draws trial corpora from a saturated seed pool.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Sequence, TextIO

import numpy as np

from .errors import ComputationError, DataValidationError

# x86-64 mnemonics counted as equality / inequality comparisons.  Kept as
# flat tables so other readings of the instruction mix are a one-line edit.
EQUALITY_MNEMONICS = frozenset({
    "je", "jne", "jz", "jnz", "sete", "setne", "cmove", "cmovne",
})

_INEQ_CONDITIONS = ("l", "le", "g", "ge", "a", "ae", "b", "be", "s", "ns")
INEQUALITY_MNEMONICS = frozenset(
    prefix + cond for cond in _INEQ_CONDITIONS for prefix in ("j", "set", "cmov")
)

CALL_MNEMONICS = frozenset({"call", "callq"})
EXTERN_CALL_MARKER = "@plt"

_INSTRUCTION_LINE = re.compile(r"^\s*[0-9a-fA-F]+:\s*\t(?P<rest>.*)$")


@dataclass(frozen=True)
class SeedEntry:
    seed_id: str
    size_bytes: float
    exec_ns: float
    covered: frozenset[int]


@dataclass(frozen=True)
class CorpusManifest:
    """Per-seed metadata of one initial corpus.

    ``universe`` is the total branch count of the target, enabling coverage
    fractions; branch ids must then lie in [0, universe).
    """

    entries: tuple[SeedEntry, ...]
    universe: int | None = None

    def __post_init__(self) -> None:
        ids = [e.seed_id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise DataValidationError("duplicate seed ids in corpus manifest")
        if self.universe is not None:
            for e in self.entries:
                bad = [b for b in e.covered if not 0 <= b < self.universe]
                if bad:
                    raise DataValidationError(
                        f"seed {e.seed_id!r} covers branches {sorted(bad)[:3]} "
                        f"outside [0, {self.universe})"
                    )


def load_corpus_manifest(handle: TextIO, source: str = "<manifest>") -> CorpusManifest:
    """Parse the manifest CSV: ``seed_id,size_bytes,exec_ns,covered`` with
    covered a ';'-separated branch-id list, optionally preceded by a
    ``#universe=N`` pragma line."""
    universe: int | None = None
    lines = [line.rstrip("\n") for line in handle]
    start = 0
    if lines and lines[0].startswith("#universe="):
        try:
            universe = int(lines[0].split("=", 1)[1])
        except ValueError:
            raise DataValidationError(f"{source}: bad universe pragma {lines[0]!r}") from None
        start = 1
    if start >= len(lines):
        raise DataValidationError(f"{source}: missing header")
    header = lines[start].split(",")
    if header[:4] != ["seed_id", "size_bytes", "exec_ns", "covered"]:
        raise DataValidationError(f"{source}: unexpected header {lines[start]!r}")

    entries = []
    for number, line in enumerate(lines[start + 1:], start=start + 2):
        if not line:
            continue
        parts = line.split(",", 3)
        if len(parts) != 4:
            raise DataValidationError(f"{source}: line {number}: expected 4 fields")
        seed_id, size_s, exec_s, covered_s = parts
        try:
            size = float(size_s)
            exec_ns = float(exec_s)
        except ValueError:
            raise DataValidationError(f"{source}: line {number}: bad number") from None
        try:
            covered = frozenset(int(b) for b in covered_s.split(";") if b != "")
        except ValueError:
            raise DataValidationError(f"{source}: line {number}: bad branch id") from None
        entries.append(SeedEntry(seed_id, size, exec_ns, covered))
    return CorpusManifest(entries=tuple(entries), universe=universe)


def corpus_properties(manifest: CorpusManifest) -> dict[str, float]:
    """Corpus-level benchmark properties of one initial corpus.

    init_coverage is the size of the union of covered branch sets; when the
    manifest declares a branch universe, the fraction is emitted as well
    under init_coverage_fraction.
    """
    if not manifest.entries:
        raise ComputationError("empty corpus manifest")
    sizes = [e.size_bytes for e in manifest.entries]
    times = [e.exec_ns for e in manifest.entries]
    union: set[int] = set()
    for e in manifest.entries:
        union |= e.covered
    out = {
        "seed_count": float(len(manifest.entries)),
        "mean_seed_bytes": float(np.mean(sizes)),
        "mean_exec_ns": float(np.mean(times)),
        "corpus_total_bytes": float(np.sum(sizes)),
        "init_coverage": float(len(union)),
    }
    if manifest.universe is not None and manifest.universe > 0:
        out["init_coverage_fraction"] = len(union) / manifest.universe
    return out


def parse_section_headers(text: str) -> int:
    """Size in bytes of the .text section from a section-header dump.

    Expects the tabular layout ``Idx Name Size VMA ...`` with hexadecimal
    sizes, as printed by ``objdump -h``.
    """
    for line in text.splitlines():
        tokens = line.split()
        if len(tokens) >= 3 and tokens[1] == ".text" and tokens[0].isdigit():
            try:
                return int(tokens[2], 16)
            except ValueError:
                raise DataValidationError(
                    f"unparseable .text size field {tokens[2]!r}"
                ) from None
    raise DataValidationError("no .text section in section-header dump")


@dataclass(frozen=True)
class DisasmSummary:
    """Instruction-mix counts of one disassembly dump.

    text_bytes is populated from the section-header dump, not from the
    disassembly itself.
    """

    cond_branches_eq: int = 0
    cond_branches_ineq: int = 0
    calls_total: int = 0
    calls_extern: int = 0
    text_bytes: int | None = None

    def __post_init__(self) -> None:
        if self.calls_extern > self.calls_total:
            raise DataValidationError("extern calls exceed total calls")
        if min(self.cond_branches_eq, self.cond_branches_ineq,
               self.calls_total, self.calls_extern) < 0:
            raise DataValidationError("negative instruction counts")

    def __add__(self, other: "DisasmSummary") -> "DisasmSummary":
        return DisasmSummary(
            cond_branches_eq=self.cond_branches_eq + other.cond_branches_eq,
            cond_branches_ineq=self.cond_branches_ineq + other.cond_branches_ineq,
            calls_total=self.calls_total + other.calls_total,
            calls_extern=self.calls_extern + other.calls_extern,
            text_bytes=self.text_bytes if other.text_bytes is None else other.text_bytes,
        )


def parse_disassembly(text: str) -> DisasmSummary:
    """Count comparison branches and calls in an ``objdump -d`` style dump.

    Instruction lines look like ``addr:<TAB>bytes<TAB>mnemonic operands``.
    Conditional branches are classified as equality or inequality by the
    mnemonic tables above; calls whose target carries the @plt marker count
    as calls into shared libraries.  Unknown mnemonics and non-instruction
    lines are ignored, so the parser is total.
    """
    eq = ineq = calls = extern = 0
    for line in text.splitlines():
        match = _INSTRUCTION_LINE.match(line)
        if not match:
            continue
        fields = match.group("rest").split("\t")
        if len(fields) < 2:
            continue  # byte-column continuation of a long instruction
        disasm = fields[1].strip()
        if not disasm:
            continue
        mnemonic, _, operands = disasm.partition(" ")
        mnemonic = mnemonic.strip().lower()
        if mnemonic in EQUALITY_MNEMONICS:
            eq += 1
        elif mnemonic in INEQUALITY_MNEMONICS:
            ineq += 1
        elif mnemonic in CALL_MNEMONICS:
            calls += 1
            if EXTERN_CALL_MARKER in operands:
                extern += 1
    return DisasmSummary(
        cond_branches_eq=eq,
        cond_branches_ineq=ineq,
        calls_total=calls,
        calls_extern=extern,
    )


def program_properties(summary: DisasmSummary) -> dict[str, float]:
    """Program-level benchmark properties from an instruction-mix summary.

    Proportions with a zero denominator are omitted rather than reported
    as zero.
    """
    out: dict[str, float] = {}
    if summary.text_bytes is not None:
        out["program_text_bytes"] = float(summary.text_bytes)
    comparisons = summary.cond_branches_eq + summary.cond_branches_ineq
    if comparisons > 0:
        out["eq_proportion"] = summary.cond_branches_eq / comparisons
        out["ineq_proportion"] = summary.cond_branches_ineq / comparisons
    if summary.calls_total > 0:
        out["extern_call_proportion"] = summary.calls_extern / summary.calls_total
    return out


def exponential_sample_sizes(
    pool_size: int,
    mean_fraction: float,
    seed: int,
    draws: int = 1,
) -> np.ndarray:
    """Raw (pre-clamp) corpus sample sizes: exponential with mean
    mean_fraction * pool_size.  Exposed so the sampling distribution can be
    checked without the clamping that sample_corpus applies."""
    if pool_size < 1:
        raise ComputationError("empty seed pool")
    if not 0.0 < mean_fraction <= 1.0:
        raise ComputationError(f"mean_fraction {mean_fraction!r} outside (0, 1]")
    rng = np.random.default_rng(seed)
    return rng.exponential(mean_fraction * pool_size, size=draws)


def sample_corpus(
    pool: Sequence[str],
    mean_fraction: float = 0.2,
    seed: int = 0,
) -> list[str]:
    """Sample a trial corpus from a saturated seed pool.

    The sample size is drawn from an exponential distribution whose mean is
    mean_fraction of the pool (uniform sampling would keep the average
    sample saturated, since coverage grows only logarithmically in corpus
    size), rounded to the nearest integer and clamped to [1, pool size];
    that many distinct seeds are then drawn uniformly without replacement.
    Deterministic for a fixed seed.
    """
    if len(pool) == 0:
        raise ComputationError("empty seed pool")
    if not 0.0 < mean_fraction <= 1.0:
        raise ComputationError(f"mean_fraction {mean_fraction!r} outside (0, 1]")
    rng = np.random.default_rng(seed)
    raw = float(rng.exponential(mean_fraction * len(pool)))
    k = int(np.rint(raw))
    k = max(1, min(len(pool), k))
    indices = sorted(rng.choice(len(pool), size=k, replace=False).tolist())
    return [pool[i] for i in indices]
