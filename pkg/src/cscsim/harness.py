"""Sweep orchestration: mechanisms x uptake levels x communities.

Each community is generated, allocated, billed and scored per mechanism;
per-community results are flushed to a partial file as soon as they are
ready so interrupted sweeps can resume by community index. Output CSVs
are merge-ordered by (community, uptake, mechanism), which keeps the
bytes independent of worker scheduling.
"""

from __future__ import annotations

import csv
import hashlib
import json
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import __version__
from .allocation import FLAG_PRICE_INVERSION, MECHANISMS, run_mechanism
from .billing import BillBreakdown, BillingContext, community_bills
from .core import Community
from .csvio import FAIRNESS_HEADER, bill_row, fairness_row, fmt
from .fairness import FairnessReport, compute_report, community_contributions, normalize_reports
from .scenario import ScenarioConfig, generate_community

SWEEP_BILLS_HEADER = ["community_id", "uptake", "mechanism"] + [
    "member_id",
    "scenario",
    "energy_cost",
    "excise_cost",
    "network_cost",
    "csc_cost",
    "producer_revenue",
    "total",
    "utility",
]
ALLOCATIONS_HEADER = ["community_id", "uptake", "mechanism", "member_id", "role", "allocated_kwh"]
SUMMARY_HEADER = ["uptake", "mechanism", "mean_pct_saving", "jain", "min_max", "merit_index", "social_welfare"]
PROFILE_HEADER = ["uptake", "mechanism", "rank", "mean_annual_kwh", "mean_pct_saving"]

INDICATORS = ("jain", "min_max", "merit_index", "social_welfare")


@dataclass
class MechanismResult:
    mechanism: str
    utilities: dict[str, float]
    bills: dict[str, BillBreakdown]
    fairness: FairnessReport
    alloc_totals: dict[str, tuple[float, float]]  # member -> (bought kWh, sold kWh)
    price_inversions: int
    seconds: float


@dataclass
class CommunityRun:
    community_id: str
    community_index: int
    uptake: float
    consumption: dict[str, float]  # annual import kWh per member
    baseline: dict[str, BillBreakdown]
    mechanisms: list[MechanismResult]
    gen_seconds: float


@dataclass
class SweepResult:
    config: ScenarioConfig
    config_hash: str
    runs: list[CommunityRun] = field(default_factory=list)
    runtime_seconds: float = 0.0

    def run(self, community_index: int, uptake: float) -> CommunityRun:
        for candidate in self.runs:
            if candidate.community_index == community_index and candidate.uptake == uptake:
                return candidate
        raise KeyError(f"no run for community {community_index} at uptake {uptake}")


def config_hash(config: ScenarioConfig) -> str:
    canonical = json.dumps(asdict(config), sort_keys=True)
    return hashlib.sha256(canonical.encode()).hexdigest()[:12]


def percentage_saving(baseline_total: float, utility_value: float) -> float | None:
    """Saving as % of the baseline bill; None for members without a positive bill."""
    if baseline_total <= 0.0:
        return None
    return 100.0 * utility_value / baseline_total


def run_community_uptake(config: ScenarioConfig, index: int, uptake: float) -> CommunityRun:
    """Generate one community and score all four mechanisms on it."""
    started = time.perf_counter()
    community = generate_community(config, index, uptake)
    contributions = community_contributions(community)
    context = BillingContext.for_community(community, config.pmo_fee)
    consumption = {m.id: m.imports.total() for m in community.members}
    gen_seconds = time.perf_counter() - started

    baseline: dict[str, BillBreakdown] = {}
    results = []
    for mechanism in MECHANISMS:
        mech_started = time.perf_counter()
        outcomes = run_mechanism(community, mechanism, context)
        bills = community_bills(community, outcomes, context)
        baseline = {member_id: pair[0] for member_id, pair in bills.items()}
        with_csc = {member_id: pair[1] for member_id, pair in bills.items()}
        utilities = {member_id: baseline[member_id].total - with_csc[member_id].total for member_id in bills}
        totals = {m.id: [0.0, 0.0] for m in community.members}
        inversions = 0
        for outcome in outcomes:
            for member_id, value in outcome.consumer_alloc.items():
                totals[member_id][0] += value
            for member_id, value in outcome.producer_alloc.items():
                totals[member_id][1] += value
            if FLAG_PRICE_INVERSION in outcome.flags:
                inversions += 1
        results.append(
            MechanismResult(
                mechanism=mechanism,
                utilities=utilities,
                bills=with_csc,
                fairness=compute_report(utilities, contributions),
                alloc_totals={m: (v[0], v[1]) for m, v in totals.items()},
                price_inversions=inversions,
                seconds=time.perf_counter() - mech_started,
            )
        )
    return CommunityRun(
        community_id=community.id,
        community_index=index,
        uptake=uptake,
        consumption=consumption,
        baseline=baseline,
        mechanisms=results,
        gen_seconds=gen_seconds,
    )


def _run_whole_community(config: ScenarioConfig, index: int) -> list[CommunityRun]:
    return [run_community_uptake(config, index, uptake) for uptake in config.uptake_levels]


# -- partial-result serialization ---------------------------------------------


def _bill_to_list(bill: BillBreakdown) -> list[float]:
    return [bill.energy_cost, bill.excise_cost, bill.network_cost, bill.csc_cost, bill.producer_revenue]


def _bill_from_list(values: list[float]) -> BillBreakdown:
    return BillBreakdown(*values)


def _run_to_dict(run: CommunityRun) -> dict:
    return {
        "community_id": run.community_id,
        "community_index": run.community_index,
        "uptake": run.uptake,
        "consumption": run.consumption,
        "gen_seconds": run.gen_seconds,
        "baseline": {m: _bill_to_list(b) for m, b in run.baseline.items()},
        "mechanisms": [
            {
                "mechanism": r.mechanism,
                "utilities": r.utilities,
                "bills": {m: _bill_to_list(b) for m, b in r.bills.items()},
                "fairness": {
                    "jain": r.fairness.jain,
                    "min_max": r.fairness.min_max,
                    "meritocratic_index": r.fairness.meritocratic_index,
                    "social_welfare": r.fairness.social_welfare,
                    "weighted_utility": r.fairness.weighted_utility,
                    "per_member_contribution": dict(r.fairness.per_member_contribution),
                },
                "alloc_totals": {m: list(v) for m, v in r.alloc_totals.items()},
                "price_inversions": r.price_inversions,
                "seconds": r.seconds,
            }
            for r in run.mechanisms
        ],
    }


def _run_from_dict(data: dict) -> CommunityRun:
    return CommunityRun(
        community_id=data["community_id"],
        community_index=data["community_index"],
        uptake=data["uptake"],
        consumption=data["consumption"],
        baseline={m: _bill_from_list(b) for m, b in data["baseline"].items()},
        mechanisms=[
            MechanismResult(
                mechanism=r["mechanism"],
                utilities=r["utilities"],
                bills={m: _bill_from_list(b) for m, b in r["bills"].items()},
                fairness=FairnessReport(**r["fairness"]),
                alloc_totals={m: (v[0], v[1]) for m, v in r["alloc_totals"].items()},
                price_inversions=r["price_inversions"],
                seconds=r["seconds"],
            )
            for r in data["mechanisms"]
        ],
        gen_seconds=data["gen_seconds"],
    )


# -- the sweep -----------------------------------------------------------------


def run_sweep(
    config: ScenarioConfig,
    out_dir: str | Path | None = None,
    *,
    jobs: int = 1,
    resume: bool = False,
    log=None,
) -> SweepResult:
    """Run every (community, uptake, mechanism) combination of the config.

    When ``out_dir`` is given, results land in ``out_dir/<config-hash>/``:
    per-community partial JSON files (flushed as soon as each community
    finishes, enabling ``resume``), the aggregated CSV artifacts and a
    manifest. Outputs are a pure function of the config, regardless of
    ``jobs`` or resumption.
    """
    started = time.perf_counter()
    digest = config_hash(config)
    run_dir = partial_dir = None
    if out_dir is not None:
        run_dir = Path(out_dir) / digest
        partial_dir = run_dir / "partial"
        partial_dir.mkdir(parents=True, exist_ok=True)

    def say(message: str) -> None:
        if log is not None:
            print(message, file=log, flush=True)

    completed: dict[int, list[CommunityRun]] = {}
    pending = list(range(config.communities))
    if resume and partial_dir is not None:
        for index in list(pending):
            path = partial_dir / f"community_{index:04d}.json"
            if path.exists():
                runs = [_run_from_dict(d) for d in json.loads(path.read_text())]
                if [r.uptake for r in runs] == list(config.uptake_levels):
                    completed[index] = runs
                    pending.remove(index)
                    say(f"resume: community {index} already done")

    def flush(index: int, runs: list[CommunityRun]) -> None:
        completed[index] = runs
        if partial_dir is not None:
            path = partial_dir / f"community_{index:04d}.json"
            path.write_text(json.dumps([_run_to_dict(r) for r in runs]))
        say(f"community {index} done ({len(completed)}/{config.communities})")

    if jobs > 1 and len(pending) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = {pool.submit(_run_whole_community, config, index): index for index in pending}
            for future in as_completed(futures):
                flush(futures[future], future.result())
    else:
        for index in pending:
            flush(index, _run_whole_community(config, index))

    runs = [run for index in sorted(completed) for run in completed[index]]
    result = SweepResult(config, digest, runs, time.perf_counter() - started)
    if run_dir is not None:
        write_outputs(run_dir, result)
    return result


# -- aggregation ----------------------------------------------------------------


def savings_profile(sweep: SweepResult, mechanism: str, uptake: float) -> list[tuple[int, float | None, float]]:
    """(rank, mean % saving, mean annual kWh) with rank 1 = largest consumer.

    Members are ranked by annual consumption within each community and
    aligned by rank across communities; members without a positive
    baseline bill are left out of the percentage mean.
    """
    per_rank: dict[int, list[float]] = {}
    per_rank_kwh: dict[int, list[float]] = {}
    found = False
    for run in sweep.runs:
        if run.uptake != uptake:
            continue
        for result in run.mechanisms:
            if result.mechanism != mechanism:
                continue
            found = True
            ordered = sorted(run.consumption, key=lambda m: (-run.consumption[m], m))
            for rank, member in enumerate(ordered, start=1):
                pct = percentage_saving(run.baseline[member].total, result.utilities[member])
                per_rank_kwh.setdefault(rank, []).append(run.consumption[member])
                if pct is not None:
                    per_rank.setdefault(rank, []).append(pct)
    if not found:
        raise KeyError(f"sweep has no ({mechanism!r}, uptake={uptake}) slice")
    profile = []
    for rank in sorted(per_rank_kwh):
        pcts = per_rank.get(rank, [])
        mean_pct = sum(pcts) / len(pcts) if pcts else None
        mean_kwh = sum(per_rank_kwh[rank]) / len(per_rank_kwh[rank])
        profile.append((rank, mean_pct, mean_kwh))
    return profile


def mean_percentage_saving(sweep: SweepResult, mechanism: str, uptake: float) -> float | None:
    """Mean % saving over every member of every community in the slice."""
    values = []
    for run in sweep.runs:
        if run.uptake != uptake:
            continue
        for result in run.mechanisms:
            if result.mechanism != mechanism:
                continue
            for member, utility_value in result.utilities.items():
                pct = percentage_saving(run.baseline[member].total, utility_value)
                if pct is not None:
                    values.append(pct)
    return sum(values) / len(values) if values else None


def fairness_matrix(sweep: SweepResult) -> dict[tuple[float, str], dict[str, float | None]]:
    """Normalized indicators per (uptake, mechanism), averaged over communities.

    Normalization happens within each community across mechanisms (one
    community sweep is one observation), then the normalized values are
    averaged; degenerate cells stay empty.
    """
    cells: dict[tuple[float, str], dict[str, list[float]]] = {}
    for run in sweep.runs:
        reports = {result.mechanism: result.fairness for result in run.mechanisms}
        normalized = normalize_reports(reports)
        for mechanism, indicators in normalized.items():
            cell = cells.setdefault((run.uptake, mechanism), {name: [] for name in INDICATORS})
            for name in INDICATORS:
                if indicators[name] is not None:
                    cell[name].append(indicators[name])
    matrix = {}
    for key in sorted(cells):
        matrix[key] = {
            name: (sum(values) / len(values) if values else None) for name, values in cells[key].items()
        }
    return matrix


# -- output files ----------------------------------------------------------------


def write_outputs(run_dir: Path, sweep: SweepResult) -> None:
    run_dir.mkdir(parents=True, exist_ok=True)
    _write_allocations(run_dir / "allocations.csv", sweep)
    _write_bills(run_dir / "bills.csv", sweep)
    _write_fairness(run_dir / "fairness.csv", sweep)
    _write_summary(run_dir / "summary.csv", sweep)
    _write_profiles(run_dir / "savings_profile.csv", sweep)
    manifest = {
        "config": asdict(sweep.config),
        "config_hash": sweep.config_hash,
        "seed": sweep.config.seed,
        "cscsim_version": __version__,
        "runtime_seconds": sweep.runtime_seconds,
        "communities": sweep.config.communities,
        "runs": len(sweep.runs),
    }
    (run_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _write_allocations(path: Path, sweep: SweepResult) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(ALLOCATIONS_HEADER)
        for run in sweep.runs:
            for result in run.mechanisms:
                for member in sorted(result.alloc_totals):
                    bought, sold = result.alloc_totals[member]
                    for role, kwh in (("consumer", bought), ("producer", sold)):
                        if kwh > 0.0:
                            writer.writerow(
                                [run.community_id, fmt(run.uptake), result.mechanism, member, role, fmt(kwh)]
                            )


def _write_bills(path: Path, sweep: SweepResult) -> None:
    def row(run, mechanism, member, scenario, bill, utility):
        cells = bill_row(member, scenario, mechanism, bill, utility)
        return [run.community_id, fmt(run.uptake), mechanism] + cells[:2] + cells[3:]

    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(SWEEP_BILLS_HEADER)
        for run in sweep.runs:
            for member in sorted(run.baseline):
                writer.writerow(row(run, "none", member, "without_csc", run.baseline[member], None))
            for result in run.mechanisms:
                for member in sorted(result.bills):
                    writer.writerow(
                        row(run, result.mechanism, member, "with_csc", result.bills[member], result.utilities[member])
                    )


def _write_fairness(path: Path, sweep: SweepResult) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(FAIRNESS_HEADER)
        for run in sweep.runs:
            for result in run.mechanisms:
                report = result.fairness
                writer.writerow(
                    fairness_row(
                        run.community_id,
                        fmt(run.uptake),
                        result.mechanism,
                        report.jain,
                        report.min_max,
                        report.meritocratic_index,
                        report.social_welfare,
                        report.weighted_utility,
                    )
                )


def _write_summary(path: Path, sweep: SweepResult) -> None:
    matrix = fairness_matrix(sweep)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(SUMMARY_HEADER)
        for uptake in sweep.config.uptake_levels:
            for mechanism in MECHANISMS:
                cell = matrix.get((uptake, mechanism))
                if cell is None:
                    continue
                mean_pct = mean_percentage_saving(sweep, mechanism, uptake)
                writer.writerow(
                    [fmt(uptake), mechanism, fmt(mean_pct)] + [fmt(cell[name]) for name in INDICATORS]
                )


def _write_profiles(path: Path, sweep: SweepResult) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(PROFILE_HEADER)
        for uptake in sweep.config.uptake_levels:
            for mechanism in MECHANISMS:
                try:
                    profile = savings_profile(sweep, mechanism, uptake)
                except KeyError:
                    continue
                for rank, mean_pct, mean_kwh in profile:
                    writer.writerow([fmt(uptake), mechanism, rank, fmt(mean_kwh), fmt(mean_pct)])
