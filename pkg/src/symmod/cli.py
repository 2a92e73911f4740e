"""Command line interface.

Verbs: analyze, classify, invariance, simulate, string-vs-parallel.
Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 divergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, pipeline, report
from .config import load_config
from .errors import ConfigInvalid, DivergenceDetected, SymmodError, UnknownParameter
from .pipeline import AnalysisOptions, scenario_from_dict
from .simkit import export_trace_csv

logger = logging.getLogger("symmod")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_DIVERGENCE = 4


def _common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="system config JSON")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--cluster-tol", type=float, default=None,
                        help="absolute mode clustering tolerance")
    parser.add_argument("--tol-quasi", type=float, default=None,
                        help="relative deviation threshold for quasi grouping")
    parser.add_argument("--tau-ext", type=float, default=None,
                        help="external participation threshold for classification")
    parser.add_argument("--log-level", default=None,
                        help="logging level (also via SYMMOD_LOG)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="symmod",
        description="Symmetry-based modal analysis of grouped power systems")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="modal analysis report with figures")
    _common_flags(p)

    p = sub.add_parser("classify", help="symmetry grouping report only")
    _common_flags(p)

    p = sub.add_parser("invariance", help="relative mode change under a variation")
    _common_flags(p)
    p.add_argument("--vary", action="append", required=True,
                   metavar="ELEM.PARAM=VAL",
                   help="parameter variation, e.g. grid.Lg=-50%% (repeatable)")
    p.add_argument("--rc-threshold", type=float, default=None,
                   help="relative-change invariance threshold in percent")

    p = sub.add_parser("simulate", help="time-domain run with modal cross-check")
    _common_flags(p)
    p.add_argument("--scenario", required=True, help="scenario JSON")

    p = sub.add_parser("string-vs-parallel",
                       help="collector-impedance sweep comparing topologies")
    _common_flags(p)
    p.add_argument("--sweep-min", type=float, default=1e-4)
    p.add_argument("--sweep-max", type=float, default=1e-2)
    p.add_argument("--sweep-points", type=int, default=5)
    p.add_argument("--include-zero", action="store_true",
                   help="prepend the exact zero-impedance point")
    return parser


def _options(args, config) -> AnalysisOptions:
    return AnalysisOptions.from_config(
        config,
        cluster_tol=args.cluster_tol,
        tol_quasi=args.tol_quasi,
        tau_ext=args.tau_ext,
        rc_threshold=getattr(args, "rc_threshold", None))


def _print_summary(rep) -> None:
    print(f"system class: {rep.system_class}")
    for g in rep.partition.groups:
        print(f"  group {g.group_id}: M={g.M} {g.symmetry_class} "
              f"deviation={g.deviation:.3e} members={','.join(g.member_ids)}")
    inner = rep.clusters_by_class("inner-group")
    gg = rep.clusters_by_class("group-grid")
    print(f"  {len(rep.clusters)} clusters: {len(inner)} inner-group, "
          f"{len(gg)} group-grid")
    for w in rep.warnings:
        print(f"  warning: {w}")


def cmd_analyze(args) -> int:
    config = load_config(args.config)
    rep = pipeline.analyze(config, _options(args, config))
    written = report.write_analysis_outputs(rep, args.out)
    _print_summary(rep)
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


def cmd_classify(args) -> int:
    config = load_config(args.config)
    rep = pipeline.analyze(config, _options(args, config))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    doc = report.clusters_to_dict(rep)
    path = out / "groups.json"
    path.write_text(json.dumps({k: doc[k] for k in
                                ("system_class", "tol_quasi", "groups", "warnings")},
                               indent=2) + "\n")
    _print_summary(rep)
    print(f"wrote {path}")
    return EXIT_OK


def cmd_invariance(args) -> int:
    config = load_config(args.config)
    run = pipeline.run_invariance(config, args.vary, _options(args, config))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report.write_rc_csv(run, out / "rc.csv")
    report.write_rc_chart_svg(run, out / "rc_chart.svg")
    inner = run.rc_by_class("inner-group")
    gg = run.rc_by_class("group-grid")
    if inner:
        print(f"inner-group RC: max {max(inner):.4g}%")
    if gg:
        print(f"group-grid RC: max {max(gg):.4g}%")
    print(f"wrote {out / 'rc.csv'}")
    print(f"wrote {out / 'rc_chart.svg'}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    config = load_config(args.config)
    try:
        raw = json.loads(Path(args.scenario).read_text())
    except FileNotFoundError:
        raise ConfigInvalid(f"scenario file not found: {args.scenario}")
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"scenario is not valid JSON: {exc}")
    scenario = scenario_from_dict(raw)
    run = pipeline.run_simulation(config, scenario, _options(args, config))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    export_trace_csv(run.trace, out / "trace.csv")
    report.write_crosscheck_csv(run, out / "modal_crosscheck.csv")
    if run.trace.diverged:
        print(f"trace diverged at t={run.trace.truncated_at:.4g} s")
    for row in run.crosscheck:
        print(f"{row.probe}: peak {row.peak_hz:.4g} Hz vs predicted "
              f"{row.predicted_hz:.4g} Hz ({'ok' if row.within_one_bin else 'off'})")
    print(f"wrote {out / 'trace.csv'}")
    print(f"wrote {out / 'modal_crosscheck.csv'}")
    return EXIT_DIVERGENCE if run.trace.diverged else EXIT_OK


def cmd_string_vs_parallel(args) -> int:
    config = load_config(args.config)
    sweep = list(np.geomspace(args.sweep_min, args.sweep_max, args.sweep_points))
    if args.include_zero:
        sweep = [0.0] + sweep
    points = pipeline.run_string_vs_parallel(config, sweep, _options(args, config))
    written = report.write_svp_outputs(points, args.out)
    for p in points:
        print(f"z={p.impedance_pu:.3e} pu: max pole distance "
              f"{p.max_pole_distance:.3e}")
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


_COMMANDS = {
    "analyze": cmd_analyze,
    "classify": cmd_classify,
    "invariance": cmd_invariance,
    "simulate": cmd_simulate,
    "string-vs-parallel": cmd_string_vs_parallel,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = args.log_level or os.environ.get("SYMMOD_LOG", "WARNING")
    logging.basicConfig(level=getattr(logging, str(level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", force=True)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigInvalid, UnknownParameter) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceDetected as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (SymmodError, np.linalg.LinAlgError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
