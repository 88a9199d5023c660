"""Command line interface.

Data goes to files, progress and errors to stderr. Exit code 0 means the
requested artifact was written completely.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from . import billing, csvio
from .allocation import MECHANISMS, run_mechanism
from .core import validate_community
from .fairness import community_contributions, compute_report
from .harness import run_sweep
from .scenario import IngestError, ScenarioConfig, generate_community, ingest_meter_csv


def _load_config(path: str | None, seed: int | None) -> ScenarioConfig:
    config = ScenarioConfig() if path is None else ScenarioConfig.from_json(path)
    if seed is not None:
        config = dataclasses.replace(config, seed=seed)
    return config


def _cmd_gen_community(args) -> int:
    config = _load_config(args.config, args.seed)
    community = generate_community(config, args.index, args.uptake)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    csvio.write_meter_csv(out / "meters.csv", community)
    csvio.write_tariff_json(out / "tariffs.json", community)
    print(f"wrote {out / 'meters.csv'} and {out / 'tariffs.json'}", file=sys.stderr)
    return 0


def _ingest(args) -> "Community | None":
    try:
        return ingest_meter_csv(args.meters, args.tariffs, force=args.force)
    except (csvio.FormatError, IngestError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return None


def _cmd_allocate(args) -> int:
    community = _ingest(args)
    if community is None:
        return 1
    context = billing.BillingContext.for_community(community)
    outcomes = run_mechanism(community, args.mechanism, context)
    csvio.write_allocation_csv(args.out, community.axis, outcomes)
    traded = sum(sum(o.consumer_alloc.values()) for o in outcomes)
    print(f"allocated {traded:.3f} kWh over {community.axis.count} intervals -> {args.out}", file=sys.stderr)
    return 0


def _cmd_bill(args) -> int:
    community = _ingest(args)
    if community is None:
        return 1
    context = billing.BillingContext.for_community(community, pmo_fee=args.pmo_fee)
    outcomes = csvio.read_allocation_csv(args.allocations, community.axis)
    rows = []
    for member in community.members:
        baseline = billing.bill_without_csc(member, community.tariffs)
        with_csc = billing.bill_with_csc(member, outcomes, context)
        rows.append(csvio.bill_row(member.id, "without_csc", args.mechanism, baseline, None))
        rows.append(csvio.bill_row(member.id, "with_csc", args.mechanism, with_csc, baseline.total - with_csc.total))
    csvio.write_bills_csv(args.out, rows)
    print(f"billed {len(community.members)} members -> {args.out}", file=sys.stderr)
    return 0


def _cmd_fairness(args) -> int:
    try:
        utilities_by_mechanism = csvio.read_bill_utilities(args.bills)
        community = csvio.read_community(args.meters, args.tariffs)
    except csvio.FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    contributions = community_contributions(community)
    rows = []
    for mechanism in sorted(utilities_by_mechanism):
        report = compute_report(utilities_by_mechanism[mechanism], contributions)
        rows.append(
            csvio.fairness_row(
                args.community_id,
                args.uptake,
                mechanism,
                report.jain,
                report.min_max,
                report.meritocratic_index,
                report.social_welfare,
                report.weighted_utility,
            )
        )
    csvio.write_fairness_csv(args.out, rows)
    print(f"scored {len(rows)} mechanism(s) -> {args.out}", file=sys.stderr)
    return 0


def _cmd_simulate(args) -> int:
    config = _load_config(args.config, args.seed)
    result = run_sweep(config, args.out, jobs=args.jobs, resume=args.resume, log=sys.stderr)
    expected = config.communities * len(config.uptake_levels)
    if len(result.runs) != expected:
        print(f"error: sweep incomplete ({len(result.runs)}/{expected} runs)", file=sys.stderr)
        return 1
    print(
        f"sweep {result.config_hash} finished in {result.runtime_seconds:.1f}s -> "
        f"{Path(args.out) / result.config_hash}",
        file=sys.stderr,
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cscsim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-community", help="generate one community's meter and tariff files")
    gen.add_argument("--config", help="scenario config JSON (defaults apply when omitted)")
    gen.add_argument("--index", type=int, required=True, help="community index")
    gen.add_argument("--uptake", type=float, required=True, help="PV uptake fraction in [0,1]")
    gen.add_argument("--out", required=True, help="output directory")
    gen.add_argument("--seed", type=int, help="override the config seed")
    gen.set_defaults(func=_cmd_gen_community)

    allocate = sub.add_parser("allocate", help="run one mechanism over a community")
    allocate.add_argument("--meters", required=True)
    allocate.add_argument("--tariffs", required=True)
    allocate.add_argument("--mechanism", choices=MECHANISMS, required=True)
    allocate.add_argument("--out", required=True, help="allocation CSV to write")
    allocate.add_argument("--force", action="store_true", help="proceed despite validation findings")
    allocate.set_defaults(func=_cmd_allocate)

    bill = sub.add_parser("bill", help="bill members with and without participation")
    bill.add_argument("--meters", required=True)
    bill.add_argument("--tariffs", required=True)
    bill.add_argument("--allocations", required=True, help="allocation CSV from 'allocate'")
    bill.add_argument("--out", required=True, help="bills CSV to write")
    bill.add_argument("--mechanism", default="", help="mechanism label for the CSV")
    bill.add_argument("--pmo-fee", type=float, default=0.0, help="coordinator fee as a fraction of local sales")
    bill.add_argument("--force", action="store_true", help="proceed despite validation findings")
    bill.set_defaults(func=_cmd_bill)

    fair = sub.add_parser("fairness", help="fairness indicators from bills and meter data")
    fair.add_argument("--bills", required=True)
    fair.add_argument("--meters", required=True)
    fair.add_argument("--tariffs", help="tariff JSON (optional; only membership is used)")
    fair.add_argument("--out", required=True)
    fair.add_argument("--community-id", default="", help="community id column value")
    fair.add_argument("--uptake", default="", help="uptake column value")
    fair.set_defaults(func=_cmd_fairness)

    simulate = sub.add_parser("simulate", help="run the full sweep: communities x uptakes x mechanisms")
    simulate.add_argument("--config", help="scenario config JSON (defaults apply when omitted)")
    simulate.add_argument("--out", required=True, help="output root; results in <out>/<config-hash>/")
    simulate.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    simulate.add_argument("--resume", action="store_true", help="skip communities with finished partial files")
    simulate.add_argument("--seed", type=int, help="override the config seed")
    simulate.set_defaults(func=_cmd_simulate)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
