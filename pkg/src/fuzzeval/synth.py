"""Synthetic fuzzing-campaign generator with known ground truth.

Each fuzzer has a latent skill that is linear in the benchmark-property
rank units (plus Gaussian noise); emitted performance values are a strictly
increasing transform of the latent skill, so the within-trial performance
ordering realizes the latent ordering exactly.  Because per-trial fuzzer
ranks are bounded, the estimand of the rank-response regression is not the
latent coefficient vector itself but its population projection: the least
squares projection of the exact conditional mean ranks onto the design.
``generate`` computes that projection in closed form and returns it as the
ground-truth coefficient map, which makes coefficient-recovery checks
exact rather than approximate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np
from scipy.special import ndtr

from .data_model import Dataset, PROGRAM_PROPERTY_KEYS, TrialRecord
from .errors import ComputationError
from .ranking import RankScope, fractional_ranks, rank_dataset
from .regression import DesignSpec, build_design_matrix, resolved_reference_levels

_PERF_SCALE = 0.05  # log-scale factor mapping latent skill to coverage counts


@dataclass(frozen=True)
class PropertyModel:
    """Distribution of one benchmark property.

    kind: "lognormal" (params mu, sigma), "uniform" (lo, hi),
    "normal" (mean, sd), or "constant" (value).  Keys named like program
    properties are drawn once per program; all others once per
    (program, trial) cell.
    """

    kind: str
    params: tuple[float, ...]

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.kind == "lognormal":
            mu, sigma = self.params
            return rng.lognormal(mu, sigma, size=size)
        if self.kind == "uniform":
            lo, hi = self.params
            return rng.uniform(lo, hi, size=size)
        if self.kind == "normal":
            mean, sd = self.params
            return rng.normal(mean, sd, size=size)
        if self.kind == "constant":
            return np.full(size, self.params[0])
        raise ComputationError(f"unknown property distribution {self.kind!r}")


@dataclass(frozen=True)
class FuzzerModel:
    """Latent skill of one fuzzer: a base offset plus per-property
    sensitivities in rank units."""

    name: str
    base_skill: float = 0.0
    sensitivities: dict[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class SynthSpec:
    """Configuration of a synthetic campaign."""

    programs: int
    fuzzers: tuple[FuzzerModel, ...]
    property_models: dict[str, PropertyModel]
    trials_per_program: int = 24
    noise_sd: float = 1.0
    seed: int = 0
    latent_on: str = "ranks"  # "ranks", or "log_values" for the misspecified mode

    def __post_init__(self) -> None:
        if self.programs < 1 or self.trials_per_program < 1 or not self.fuzzers:
            raise ComputationError("synthetic spec needs >= 1 program, trial, and fuzzer")
        if not math.isfinite(self.noise_sd) or self.noise_sd < 0:
            raise ComputationError("noise_sd must be finite and non-negative")
        if self.latent_on not in ("ranks", "log_values"):
            raise ComputationError(f"unknown latent mode {self.latent_on!r}")

    def to_dict(self) -> dict:
        return {
            "programs": self.programs,
            "trials_per_program": self.trials_per_program,
            "noise_sd": self.noise_sd,
            "seed": self.seed,
            "latent_on": self.latent_on,
            "fuzzers": [
                {
                    "name": f.name,
                    "base_skill": f.base_skill,
                    "sensitivities": dict(f.sensitivities),
                }
                for f in self.fuzzers
            ],
            "property_models": {
                key: {"kind": m.kind, "params": list(m.params)}
                for key, m in self.property_models.items()
            },
        }

    @staticmethod
    def from_dict(data: Mapping) -> "SynthSpec":
        return SynthSpec(
            programs=int(data["programs"]),
            trials_per_program=int(data.get("trials_per_program", 24)),
            noise_sd=float(data.get("noise_sd", 1.0)),
            seed=int(data.get("seed", 0)),
            latent_on=data.get("latent_on", "ranks"),
            fuzzers=tuple(
                FuzzerModel(
                    name=f["name"],
                    base_skill=float(f.get("base_skill", 0.0)),
                    sensitivities={k: float(v) for k, v in f.get("sensitivities", {}).items()},
                )
                for f in data["fuzzers"]
            ),
            property_models={
                key: PropertyModel(kind=m["kind"], params=tuple(float(p) for p in m["params"]))
                for key, m in data["property_models"].items()
            },
        )


def _program_names(count: int) -> list[str]:
    return [f"prog{i + 1:02d}" for i in range(count)]


def _rank_units(
    spec: SynthSpec, values: dict[str, np.ndarray]
) -> dict[str, np.ndarray]:
    """Latent predictor per (program, trial) cell for every property.

    Rank mode uses within-program fractional ranks for per-trial properties
    and program ranks (1..P, broadcast) for program-level ones; the
    misspecified mode feeds log raw values instead, which the downstream
    rank transformation is meant to linearize.
    """
    programs, trials = spec.programs, spec.trials_per_program
    units: dict[str, np.ndarray] = {}
    for key, cells in values.items():
        if spec.latent_on == "log_values":
            units[key] = np.log(np.maximum(cells, 1e-300))
            continue
        if key in PROGRAM_PROPERTY_KEYS:
            per_program = fractional_ranks(cells[:, 0])
            units[key] = np.repeat(per_program[:, None], trials, axis=1)
        else:
            units[key] = np.vstack([
                fractional_ranks(cells[g]) for g in range(programs)
            ])
    return units


def generate(spec: SynthSpec) -> tuple[Dataset, dict[str, float]]:
    """Produce a synthetic dataset and its ground-truth coefficient map.

    The map contains the population targets of the analyses run on this
    dataset: one entry per explainable-model design column (projection of
    the exact conditional mean ranks onto the design built over all
    generated properties, first fuzzer as reference), plus
    ``slope:<key>:<fuzzer>`` entries for the per-fuzzer rank slopes.  In
    the misspecified (log_values) mode the map is empty.
    """
    rng = np.random.default_rng(spec.seed)
    programs = _program_names(spec.programs)
    trials = spec.trials_per_program
    fuzzers = [f.name for f in spec.fuzzers]

    # property values per (program, trial) cell; program-level keys repeat
    values: dict[str, np.ndarray] = {}
    for key, model in spec.property_models.items():
        if key in PROGRAM_PROPERTY_KEYS:
            per_program = model.draw(rng, spec.programs)
            values[key] = np.repeat(per_program[:, None], trials, axis=1)
        else:
            values[key] = model.draw(rng, spec.programs * trials).reshape(
                spec.programs, trials
            )

    units = _rank_units(spec, values)

    # latent skill per (program, trial, fuzzer)
    latent = np.zeros((spec.programs, trials, len(fuzzers)))
    for fi, fuzzer in enumerate(spec.fuzzers):
        latent[:, :, fi] = fuzzer.base_skill
        for key, sensitivity in fuzzer.sensitivities.items():
            if key not in units:
                raise ComputationError(
                    f"fuzzer {fuzzer.name!r} is sensitive to unknown property {key!r}"
                )
            latent[:, :, fi] += sensitivity * units[key]

    noise = rng.normal(0.0, spec.noise_sd, size=latent.shape) if spec.noise_sd > 0 \
        else np.zeros_like(latent)
    skill = latent + noise

    records = []
    for g, program in enumerate(programs):
        base = 1000.0 * (g + 1)
        for t in range(trials):
            cell_properties = {key: float(values[key][g, t]) for key in values}
            for fi, fuzzer in enumerate(fuzzers):
                records.append(TrialRecord(
                    program=program,
                    fuzzer=fuzzer,
                    trial=t,
                    performance=float(base * math.exp(_PERF_SCALE * skill[g, t, fi])),
                    properties=cell_properties,
                ))
    dataset = Dataset(records)

    if spec.latent_on != "ranks":
        return dataset, {}
    return dataset, _ground_truth(spec, dataset, latent)


def _expected_ranks(latent: np.ndarray, noise_sd: float) -> np.ndarray:
    """Exact E[per-trial fuzzer rank] given latent means and noise level.

    rank_f = 1 + sum_{f'} P(latent_f + e_f > latent_f' + e_f'), i.i.d.
    Gaussian noise, ties contributing 1/2 (matching average ranks).
    """
    gaps = latent[..., :, None] - latent[..., None, :]
    if noise_sd > 0:
        win = ndtr(gaps / (noise_sd * math.sqrt(2.0)))
    else:
        win = np.where(gaps > 0, 1.0, np.where(gaps < 0, 0.0, 0.5))
    k = latent.shape[-1]
    identity = np.eye(k, dtype=bool)
    win = np.where(identity, 0.0, win)
    return 1.0 + win.sum(axis=-1)


def _ground_truth(
    spec: SynthSpec, dataset: Dataset, latent: np.ndarray
) -> dict[str, float]:
    expected = _expected_ranks(latent, spec.noise_sd)
    # rows were emitted program-major, then trial, then fuzzer
    expected_rows = expected.reshape(-1)

    keys = list(spec.property_models)
    ranked = rank_dataset(dataset, keys, RankScope.WITHIN_PROGRAM)
    design = DesignSpec(
        properties=tuple(keys),
        fuzzers=tuple(f.name for f in spec.fuzzers),
        reference_fuzzer=spec.fuzzers[0].name,
        reference_level={},
        include_interactions=True,
    )
    design = replace(design, reference_level=resolved_reference_levels(dataset, design))
    X, _, labels = build_design_matrix(ranked, design)
    target, *_ = np.linalg.lstsq(X, expected_rows, rcond=None)
    truth = {label: float(c) for label, c in zip(labels, target)}

    for key in keys:
        column = ranked.property_rank(key, RankScope.WITHIN_PROGRAM)
        for fuzzer in dataset.fuzzers:
            rows = [i for i, t in enumerate(dataset.trials) if t.fuzzer == fuzzer]
            x = column[rows]
            if np.ptp(x) == 0.0:
                continue  # program-level key at trial scope: constant, no slope
            design_1d = np.column_stack([np.ones(len(rows)), x])
            coefs, *_ = np.linalg.lstsq(design_1d, expected_rows[rows], rcond=None)
            truth[f"slope:{key}:{fuzzer}"] = float(coefs[1])
    return truth


# Fixture mimicking a realistic four-fuzzer, eleven-program campaign:
# the reference fuzzer is penalized as initial coverage, seed execution
# time, and program size grow; one competitor benefits strongly from
# larger programs; one is nearly property-neutral.
_PAPER_SHAPED_SPEC = dict(
    programs=11,
    trials_per_program=24,
    noise_sd=0.75,
    seed=0x5EED5,
    fuzzers=(
        FuzzerModel(
            "libfuzzer",
            base_skill=1.2,
            sensitivities={
                "init_coverage": -0.055,
                "mean_exec_ns": -0.040,
                "mean_seed_bytes": -0.004,
                "program_text_bytes": -0.145,
            },
        ),
        FuzzerModel(
            "afl",
            base_skill=-0.1,
            sensitivities={
                "init_coverage": 0.018,
                "mean_exec_ns": -0.006,
                "mean_seed_bytes": 0.004,
                "program_text_bytes": -0.010,
            },
        ),
        FuzzerModel(
            "aflpp",
            base_skill=0.35,
            sensitivities={
                "init_coverage": 0.012,
                "mean_exec_ns": 0.016,
                "mean_seed_bytes": 0.012,
                "program_text_bytes": 0.105,
            },
        ),
        FuzzerModel(
            "entropic",
            base_skill=0.95,
            sensitivities={
                "init_coverage": 0.004,
                "mean_exec_ns": 0.002,
                "mean_seed_bytes": 0.002,
                "program_text_bytes": 0.020,
            },
        ),
    ),
    property_models={
        "init_coverage": PropertyModel("lognormal", (6.0, 0.8)),
        "mean_exec_ns": PropertyModel("lognormal", (11.0, 1.1)),
        "mean_seed_bytes": PropertyModel("lognormal", (7.5, 1.3)),
        "program_text_bytes": PropertyModel("lognormal", (12.5, 1.0)),
    },
)

# Signs of the strongly injected effects, for model sanity checks.
PAPER_SHAPED_SIGNS = {
    "prop:init_coverage": -1,
    "prop:mean_exec_ns": -1,
    "prop:program_text_bytes": -1,
    "fuzzer:afl": -1,
    "fuzzer:aflpp": 1,
    "fuzzer:entropic": 1,
    "inter:program_text_bytes:aflpp": 1,
}


def paper_shaped_spec() -> SynthSpec:
    """The built-in demo campaign: 4 fuzzers x 11 programs x 24 trials."""
    return SynthSpec(**_PAPER_SHAPED_SPEC)


def paper_shaped_fixture() -> Dataset:
    """Deterministic built-in dataset used by demos and acceptance tests."""
    dataset, _ = generate(paper_shaped_spec())
    return dataset
