"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data validation failure,
3 computational failure.  The FUZZEVAL_SEED environment variable supplies
the default bootstrap seed; the --seed flag overrides it.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import bench_props
from .bootstrap import BootMethod, BootstrapSpec, WildWeights
from .data_model import load_dataset, save_dataset, validate_dataset, write_dataset_csv
from .errors import ComputationError, DataValidationError
from .ranking import RankScope
from .regression import (
    DesignSpec,
    RegressionFit,
    default_design,
    fit_explainable_model,
    per_fuzzer_slopes,
    predict_rank,
    rank_crossover,
)
from .ranking import rank_dataset
from .report import (
    ReportConfig,
    build_report,
    emit_plot_data,
    rank_both_scopes,
    render_text,
    report_json,
    spearman_table,
)
from .stats import pairwise_table
from .synth import SynthSpec, generate, paper_shaped_spec


EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_COMPUTE = 3

_SCOPES = {"within": RankScope.WITHIN_PROGRAM, "global": RankScope.GLOBAL}


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # usage problems exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _default_seed() -> int:
    raw = os.environ.get("FUZZEVAL_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise DataValidationError(f"FUZZEVAL_SEED={raw!r} is not an integer") from None


def _csv_out(rows: list[list[str]], header: list[str] | None = None) -> None:
    writer = csv.writer(sys.stdout, lineterminator="\n")
    if header:
        writer.writerow(header)
    writer.writerows(rows)


def _boot_spec(args) -> BootstrapSpec:
    return BootstrapSpec(
        replicates=args.boot_reps,
        seed=args.seed if args.seed is not None else _default_seed(),
        method=BootMethod(getattr(args, "boot", "pairs")),
        wild_weights=WildWeights(getattr(args, "wild_weights", "rademacher")),
    )


def _add_boot_flags(parser, default_method: str | None = None) -> None:
    parser.add_argument("--boot-reps", type=int, default=2000, metavar="N")
    parser.add_argument("--seed", type=int, default=None, metavar="S")
    if default_method is not None:
        parser.add_argument("--boot", choices=["wild", "pairs"], default=default_method)
        parser.add_argument(
            "--wild-weights", dest="wild_weights",
            choices=["rademacher", "mammen"], default="rademacher",
        )
    parser.add_argument("--workers", type=int, default=1, metavar="W")


def cmd_validate(args) -> int:
    dataset = load_dataset(args.data, validate=False)
    problems = validate_dataset(dataset)
    for diagnostic in problems:
        print(diagnostic)
    if problems:
        return EXIT_DATA
    print(f"ok: {len(dataset)} rows, {len(dataset.programs)} programs, "
          f"{len(dataset.fuzzers)} fuzzers")
    return EXIT_OK


def cmd_correlate(args) -> int:
    dataset = load_dataset(args.data)
    ranked = rank_both_scopes(dataset)
    keys = list(dict.fromkeys(key for key, _ in ranked.property_ranks))
    entries = spearman_table(ranked, keys)
    if args.scope:
        entries = [e for e in entries if e.scope is _SCOPES[args.scope]]
    _csv_out(
        [[e.property, e.scope.value, repr(e.rho), str(e.n)] for e in entries],
        header=["property", "scope", "rho", "n"],
    )
    if args.out:
        config = ReportConfig(boot=BootstrapSpec(seed=_default_seed()))
        report = build_report(dataset, config, dataset_path=args.data)
        manifest = emit_plot_data(report, args.out)
        print(f"wrote {len(manifest)} plot files to {args.out}", file=sys.stderr)
    return EXIT_OK


def cmd_compare(args) -> int:
    dataset = load_dataset(args.data)
    if args.program not in dataset.programs:
        raise DataValidationError(f"unknown program {args.program!r}")
    groups = {
        fuzzer: [t.performance for t in dataset.trials
                 if t.program == args.program and t.fuzzer == fuzzer]
        for fuzzer in dataset.fuzzers
    }
    table = pairwise_table(groups, alpha=args.alpha)
    rows = []
    for i, a in enumerate(table.labels):
        for j, b in enumerate(table.labels):
            if i == j:
                continue
            rows.append([
                a, b,
                repr(float(table.a12[i, j])),
                repr(float(table.p[i, j])),
                "true" if table.significant[i, j] else "false",
            ])
    _csv_out(rows, header=["fuzzer_a", "fuzzer_b", "a12", "p", "significant"])
    return EXIT_OK


def cmd_slopes(args) -> int:
    dataset = load_dataset(args.data)
    scope = _SCOPES[args.scope]
    ranked = rank_dataset(dataset, [args.property], scope)
    estimates = per_fuzzer_slopes(ranked, args.property, scope, _boot_spec(args),
                                  workers=args.workers)
    _csv_out(
        [[s.fuzzer, s.property, repr(s.slope), repr(s.ci_low), repr(s.ci_high),
          "true" if s.significant else "false"] for s in estimates],
        header=["fuzzer", "property", "slope", "ci_low", "ci_high", "significant"],
    )
    return EXIT_OK


def cmd_regress(args) -> int:
    dataset = load_dataset(args.data)
    boot = _boot_spec(args)
    properties = args.properties.split(",") if args.properties else None
    design = default_design(
        dataset,
        reference_fuzzer=args.reference,
        properties=properties,
        per_benchmark=args.per_benchmark,
    )
    ranked = rank_both_scopes(dataset)
    fit, ci = fit_explainable_model(ranked, design, boot, workers=args.workers)
    _csv_out(ci.to_csv_rows()[1:], header=ci.to_csv_rows()[0])
    print(f"r2={fit.r2!r} adjusted={fit.r2_adjusted!r} "
          f"median_abs_residual={fit.median_abs_residual!r}", file=sys.stderr)

    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "fit.json"), "w", encoding="utf-8") as handle:
            doc = fit.to_dict()
            doc["ci"] = ci.to_dict()
            json.dump(doc, handle, sort_keys=True, indent=2)
            handle.write("\n")
        with open(os.path.join(args.out, "coefficients.csv"), "w", newline="",
                  encoding="utf-8") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerows(ci.to_csv_rows())
        from .diagnostics import diagnostics_report
        diag = diagnostics_report(fit, ranked, list(design.properties))
        with open(os.path.join(args.out, "diagnostics.json"), "w", encoding="utf-8") as handle:
            json.dump(diag.to_dict(), handle, sort_keys=True, indent=2)
            handle.write("\n")
    return EXIT_OK


def cmd_predict(args) -> int:
    with open(args.fit, encoding="utf-8") as handle:
        doc = json.load(handle)
    if doc.get("design") is None:
        raise DataValidationError(f"{args.fit}: fit carries no design")
    fit = RegressionFit(
        labels=tuple(doc["labels"]),
        coef=np.asarray(doc["coef"], dtype=float),
        fitted=np.zeros(0),
        residuals=np.zeros(0),
        r2=doc["r2"],
        r2_adjusted=doc["r2_adjusted"],
        f_p_value=doc["f_p_value"],
        median_abs_residual=doc["median_abs_residual"],
        design=DesignSpec.from_dict(doc["design"]),
    )
    settings: dict[str, float] = {}
    for item in args.set or []:
        key, _, value = item.partition("=")
        if not _:
            raise DataValidationError(f"--set expects key=rank, got {item!r}")
        settings[key] = float(value)
    if args.versus:
        if not args.vary:
            raise DataValidationError("--versus requires --vary <property>")
        crossover = rank_crossover(fit, args.fuzzer, args.versus, args.vary, at=settings)
        print(repr(crossover))
    else:
        print(repr(predict_rank(fit, args.fuzzer, settings)))
    return EXIT_OK


def cmd_props_corpus(args) -> int:
    with open(args.manifest, encoding="utf-8") as handle:
        manifest = bench_props.load_corpus_manifest(handle, source=args.manifest)
    properties = bench_props.corpus_properties(manifest)
    _csv_out([[k, repr(v)] for k, v in properties.items()], header=["key", "value"])
    return EXIT_OK


def cmd_props_program(args) -> int:
    summary = bench_props.DisasmSummary()
    if args.disasm:
        with open(args.disasm, encoding="utf-8") as handle:
            summary = bench_props.parse_disassembly(handle.read())
    if args.headers:
        with open(args.headers, encoding="utf-8") as handle:
            text_bytes = bench_props.parse_section_headers(handle.read())
        summary = summary + bench_props.DisasmSummary(text_bytes=text_bytes)
    properties = bench_props.program_properties(summary)
    _csv_out([[k, repr(v)] for k, v in properties.items()], header=["key", "value"])
    return EXIT_OK


def cmd_sample_corpus(args) -> int:
    with open(args.pool, encoding="utf-8") as handle:
        pool = [line.strip() for line in handle if line.strip()]
    seed = args.seed if args.seed is not None else _default_seed()
    for seed_id in bench_props.sample_corpus(pool, args.mean_fraction, seed):
        print(seed_id)
    return EXIT_OK


def cmd_synth(args) -> int:
    if args.paper_shaped:
        spec = paper_shaped_spec()
    elif args.spec:
        with open(args.spec, encoding="utf-8") as handle:
            spec = SynthSpec.from_dict(json.load(handle))
    else:
        raise DataValidationError("synth requires --paper-shaped or --spec <file>")
    dataset, truth = generate(spec)
    if args.out:
        save_dataset(dataset, args.out)
    else:
        write_dataset_csv(dataset, sys.stdout)
    if args.truth:
        with open(args.truth, "w", encoding="utf-8") as handle:
            json.dump(truth, handle, sort_keys=True, indent=2)
            handle.write("\n")
    return EXIT_OK


def cmd_report(args) -> int:
    dataset = load_dataset(args.data)
    config = ReportConfig(
        boot=_boot_spec(args),
        alpha=args.alpha,
        reference_fuzzer=args.reference,
        workers=args.workers,
    )
    report = build_report(dataset, config, dataset_path=args.data)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "report.json"), "w", encoding="utf-8") as handle:
            handle.write(report_json(report))
        with open(os.path.join(args.out, "report.txt"), "w", encoding="utf-8") as handle:
            handle.write(render_text(report))
        manifest = emit_plot_data(report, args.out, svg=args.svg)
        print(f"wrote report.json, report.txt and {len(manifest)} plot files to {args.out}",
              file=sys.stderr)
    elif args.json:
        sys.stdout.write(report_json(report))
    else:
        sys.stdout.write(render_text(report))
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="fuzzeval", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("validate", help="check a dataset's invariants")
    p.add_argument("data")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("correlate", help="property-rank vs performance-rank correlation")
    p.add_argument("data")
    p.add_argument("--scope", choices=["within", "global"], default=None)
    p.add_argument("-o", "--out", default=None, metavar="DIR")
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("compare", help="pairwise effect sizes for one program")
    p.add_argument("data")
    p.add_argument("--program", required=True)
    p.add_argument("--alpha", type=float, default=0.05)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("slopes", help="per-fuzzer rank slope for one property")
    p.add_argument("data")
    p.add_argument("--property", required=True)
    p.add_argument("--scope", choices=["within", "global"], default="within")
    _add_boot_flags(p)
    p.set_defaults(func=cmd_slopes)

    p = sub.add_parser("regress", help="fit the explainable rank model")
    p.add_argument("data")
    p.add_argument("--reference", default=None, metavar="FUZZER")
    p.add_argument("--per-benchmark", action="store_true")
    p.add_argument("--properties", default=None, metavar="K1,K2,...")
    p.add_argument("-o", "--out", default=None, metavar="DIR")
    _add_boot_flags(p, default_method="wild")
    p.set_defaults(func=cmd_regress)

    p = sub.add_parser("predict", help="evaluate a stored fit")
    p.add_argument("fit")
    p.add_argument("--fuzzer", required=True)
    p.add_argument("--set", action="append", metavar="KEY=RANK")
    p.add_argument("--versus", default=None, metavar="FUZZER")
    p.add_argument("--vary", default=None, metavar="KEY")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("props", help="compute benchmark properties")
    props_sub = p.add_subparsers(dest="props_command", required=True, parser_class=_Parser)
    pc = props_sub.add_parser("corpus", help="corpus properties from a manifest")
    pc.add_argument("manifest")
    pc.set_defaults(func=cmd_props_corpus)
    pp = props_sub.add_parser("program", help="program properties from objdump text")
    pp.add_argument("--headers", default=None, metavar="FILE")
    pp.add_argument("--disasm", default=None, metavar="FILE")
    pp.set_defaults(func=cmd_props_program)

    p = sub.add_parser("sample-corpus", help="draw a trial corpus from a seed pool")
    p.add_argument("pool")
    p.add_argument("--mean-fraction", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_sample_corpus)

    p = sub.add_parser("synth", help="generate a synthetic campaign dataset")
    p.add_argument("--paper-shaped", action="store_true")
    p.add_argument("--spec", default=None, metavar="FILE")
    p.add_argument("-o", "--out", default=None, metavar="CSV")
    p.add_argument("--truth", default=None, metavar="JSON")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("report", help="full evaluation report")
    p.add_argument("data")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--reference", default=None, metavar="FUZZER")
    p.add_argument("-o", "--out", default=None, metavar="DIR")
    p.add_argument("--json", action="store_true")
    p.add_argument("--svg", action="store_true")
    _add_boot_flags(p, default_method="wild")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DataValidationError as err:
        print(f"fuzzeval: {err}", file=sys.stderr)
        return EXIT_DATA
    except (ComputationError, np.linalg.LinAlgError) as err:
        print(f"fuzzeval: {err}", file=sys.stderr)
        return EXIT_COMPUTE
    except FileNotFoundError as err:
        print(f"fuzzeval: {err}", file=sys.stderr)
        return EXIT_DATA
    except BrokenPipeError:
        return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
