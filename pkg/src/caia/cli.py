"""Command-line surface: file-driven attack workflows with stable exit codes.

Exit codes: 0 success, 2 configuration/usage error, 3 empty attack set,
4 oracle or protocol failure. Malformed input files never produce a
traceback. Progress and skip diagnostics go to stderr; results go to the
output files (and stdout where asked).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .attribution import read_float_grid, read_mask, relative_attribution
from .core import LogitRecord, run_attack
from .errors import (
    CaiaError,
    ConfigurationError,
    EmptyAttackSetError,
    MissingRecordError,
    ProtocolError,
    TransportError,
)
from .evaluation import (
    ablate,
    aggregate_runs,
    evaluate,
    read_ground_truth,
    write_ground_truth,
)
from .filtering import build_attack_set
from .manifests import (
    _dump_json,
    _load_json,
    read_attack_manifest,
    read_candidates,
    read_predictions,
    read_report,
    read_samples_list,
    render_report_table,
    write_attack_manifest,
    write_curve,
    write_decisions,
    write_predictions,
    write_report,
)
from .oracle import OracleDescriptor, open_oracle, write_logit_file
from .simulator import (
    generate_scenario,
    load_scenario_config,
    serve,
    simulate_logits,
)

logger = logging.getLogger("caia")


def _read_descriptor(path: str) -> OracleDescriptor:
    doc = _load_json(path)
    known = {"kind", "locator", "num_classes", "batch_size", "payload"}
    unknown = set(doc) - known
    if unknown:
        raise ConfigurationError(f"{path}: unknown oracle fields {sorted(unknown)}")
    try:
        return OracleDescriptor(**doc)
    except TypeError as exc:
        raise ConfigurationError(f"{path}: malformed oracle descriptor: {exc}") from exc


def _parse_sizes(text: str) -> list[int]:
    try:
        sizes = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise ConfigurationError(f"cannot parse sizes '{text}'") from None
    if not sizes:
        raise ConfigurationError("no sizes given")
    return sizes


# -- subcommands ----------------------------------------------------------------


def cmd_filter(args) -> int:
    space, candidates = read_candidates(args.candidates)
    result = build_attack_set(
        candidates, args.tau, args.count, space, bypass_filter=args.no_filter
    )
    config = {
        "command": "filter",
        "candidates": args.candidates,
        "tau": args.tau,
        "count": args.count,
        "no_filter": args.no_filter,
    }
    write_attack_manifest(args.out, space, result.attack_set, config)
    if args.decisions:
        write_decisions(args.decisions, result, config)
    if result.under_target:
        logger.warning(
            "only %d of %d requested tuples accepted",
            len(result.attack_set), args.count,
        )
    print(
        f"accepted {len(result.attack_set)} tuples "
        f"({len(result.decisions)} candidates examined)"
    )
    return 0


def cmd_attack(args) -> int:
    space, tuples = read_attack_manifest(args.attack_set)
    descriptor = _read_descriptor(args.oracle)
    provider = open_oracle(descriptor)
    result = run_attack(tuples, provider, space, sample_limit=args.sample_limit)
    for tuple_id, reason in result.skipped:
        logger.warning("skipped tuple %s: %s", tuple_id, reason)
    config = {
        "command": "attack",
        "attack_set": args.attack_set,
        "oracle": args.oracle,
        "sample_limit": args.sample_limit,
        "seed": args.seed,
    }
    write_predictions(args.out, space, result.predictions, config)
    print(
        f"predicted {len(result.predictions)} classes from "
        f"{result.table.tuples_seen} tuples ({len(result.skipped)} skipped)"
    )
    return 0


def cmd_eval(args) -> int:
    if args.aggregate:
        reports = [read_report(path) for path in args.aggregate]
        report = aggregate_runs(reports)
        config = {"command": "eval", "aggregate": list(args.aggregate)}
    else:
        if not args.predictions or not args.truth:
            raise ConfigurationError(
                "eval needs --predictions and --truth (or --aggregate)"
            )
        space, predictions = read_predictions(args.predictions)
        truth = read_ground_truth(args.truth)
        report = evaluate(predictions, truth, space)
        config = {
            "command": "eval",
            "predictions": args.predictions,
            "truth": args.truth,
        }
    write_report(args.out, report, config)
    if args.table:
        print(render_report_table(report))
    else:
        print(f"accuracy {report.accuracy:.4f}")
    return 0


def cmd_ablate(args) -> int:
    space, tuples = read_attack_manifest(args.attack_set)
    descriptor = _read_descriptor(args.oracle)
    provider = open_oracle(descriptor)
    truth = read_ground_truth(args.truth)
    sizes = _parse_sizes(args.sizes)
    points = ablate(
        tuples, provider, space, truth, sizes, args.repeats, seed=args.seed
    )
    config = {
        "command": "ablate",
        "attack_set": args.attack_set,
        "oracle": args.oracle,
        "truth": args.truth,
        "sizes": sizes,
        "repeats": args.repeats,
        "seed": args.seed,
    }
    write_curve(args.out, points, config)
    for p in points:
        print(f"size {p.size:5d}: accuracy {p.mean_accuracy:.4f} +/- {p.std:.4f}")
    return 0


def cmd_simulate(args) -> int:
    config_obj = load_scenario_config(args.scenario)
    scenario = generate_scenario(config_obj)
    if args.out_truth:
        write_ground_truth(args.out_truth, scenario.ground_truth())
    if args.out_manifest:
        write_attack_manifest(
            args.out_manifest,
            scenario.attribute,
            scenario.attack_tuples(),
            {"command": "simulate", "scenario": args.scenario},
        )
    if args.export_logits:
        records = (
            LogitRecord(tid, value, simulate_logits(scenario, tid, value))
            for tid in scenario.tuple_ids()
            for value in scenario.attribute.values
        )
        n = write_logit_file(
            args.export_logits,
            records,
            scenario.num_classes,
            name="caia-sim/1",
        )
        logger.info("exported %d logit records", n)
    if args.serve:
        server = serve(scenario, args.serve)
        print(f"serving at {server.address}", file=sys.stderr, flush=True)
        try:
            server.join()
        except KeyboardInterrupt:
            server.shutdown()
    elif not (args.out_truth or args.out_manifest or args.export_logits):
        logger.warning("nothing to do: no output flag given")
    return 0


def cmd_attribution(args) -> int:
    samples = []
    for map_path, mask_paths in read_samples_list(args.samples):
        grid = read_float_grid(map_path)
        masks = {region: read_mask(p) for region, p in mask_paths.items()}
        samples.append((grid, masks))
    report = relative_attribution(samples)
    doc = {
        "format": "caia-attribution/1",
        "regions": {
            region: {"share": report.shares[region], "count": report.counts[region]}
            for region in report.shares
        },
        "config": {"command": "attribution", "samples": args.samples},
    }
    _dump_json(args.out, doc)
    for region, share in report.shares.items():
        print(f"{region}: {share:.6f}")
    return 0


# -- parser -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="caia",
        description="Class attribute inference toolkit",
    )
    parser.add_argument(
        "-v", "--verbose", action="count", default=0,
        help="-v for progress, -vv for debug",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("filter", help="filter candidate tuples into an attack set")
    p.add_argument("--candidates", required=True)
    p.add_argument("--tau", type=float, default=0.6)
    p.add_argument("--count", type=int, default=300)
    p.add_argument("--out", required=True)
    p.add_argument("--decisions", help="also write the decision trail")
    p.add_argument(
        "--no-filter", action="store_true",
        help="accept the first N candidates unconditionally",
    )
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("attack", help="run the attack against an oracle")
    p.add_argument("--attack-set", required=True)
    p.add_argument("--oracle", required=True, help="oracle descriptor JSON")
    p.add_argument("--out", required=True)
    p.add_argument("--sample-limit", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("eval", help="score predictions against ground truth")
    p.add_argument("--predictions")
    p.add_argument("--truth")
    p.add_argument(
        "--aggregate", nargs="+", metavar="REPORT",
        help="aggregate existing report files instead",
    )
    p.add_argument("--out", required=True)
    p.add_argument("--table", action="store_true", help="print an aligned table")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="accuracy vs number of attack tuples")
    p.add_argument("--attack-set", required=True)
    p.add_argument("--oracle", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--sizes", required=True, help="comma-separated, e.g. 1,5,10,25")
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("simulate", help="generate/serve a synthetic scenario")
    p.add_argument("--scenario", required=True, help="scenario config JSON")
    p.add_argument("--out-truth")
    p.add_argument("--out-manifest")
    p.add_argument("--export-logits")
    p.add_argument("--serve", metavar="HOST:PORT")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("attribution", help="relative attribution over maps/masks")
    p.add_argument("--samples", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_attribution)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    level = (
        logging.WARNING
        if args.verbose == 0
        else logging.INFO if args.verbose == 1 else logging.DEBUG
    )
    logging.basicConfig(stream=sys.stderr, level=level, format="%(message)s")
    try:
        return args.func(args)
    except EmptyAttackSetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (TransportError, ProtocolError, MissingRecordError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except CaiaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except json.JSONDecodeError as exc:
        print(f"error: invalid JSON: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
