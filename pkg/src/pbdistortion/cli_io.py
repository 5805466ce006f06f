"""Command-line driver and file formats.

ProfileJSON::

    {"projects": [{"name": "p1", "cost": "120000"}, ...],
     "interaction_groups": [{"kind": "complement", "projects": [0, 1]}, ...],
     "votes": [["0.25", "0.75"], {"0": "1"}, ...]}

Numbers are decimal strings written with ``repr`` so a reload is bit
identical.  A vote row is either a dense list or a sparse object mapping
project index to value; the writer picks sparse rows for mostly-zero
profiles.

KnapsackCSV: optional ``#`` comment lines, an optional ``total_budget,<B>``
line, a header of project names, then one row of spend amounts per voter.
Unspent money becomes an extra ``unspent`` project and rows are divided by
the total.

Exit codes: 0 success, 1 verification failure, 2 bad input.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import distortion_engine as de
from . import pd_verifier as pv
from .budget_core import BudgetError, VoteProfile
from .interactions import InteractionError, InteractionSpec
from .mechanisms import MECHANISMS, deliberation_paths, get_mechanism

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2
OVERSPEND_TOL = 1e-6
SPARSE_DENSITY = 0.25
HIST_BINS = 20
TRIADIC = ("median", "nash", "nash-rand")


class InputError(ValueError):
    """Unreadable or malformed input file."""


# ---------------------------------------------------------------------------
# ProfileJSON


def _num(x: float) -> str:
    return repr(float(x))


def _parse_num(s, where: str) -> float:
    try:
        return float(s)
    except (TypeError, ValueError):
        raise InputError(f"{where}: {s!r} is not a number") from None


def profile_to_dict(P: VoteProfile, spec: InteractionSpec | None = None, costs=None) -> dict:
    votes = P.votes
    names = P.names or tuple(f"p{j}" for j in range(P.m))
    projects = []
    for j, name in enumerate(names):
        entry = {"name": name}
        if costs is not None:
            entry["cost"] = _num(costs[j])
        projects.append(entry)
    sparse = np.count_nonzero(votes) < SPARSE_DENSITY * votes.size
    if sparse:
        rows = [{str(j): _num(row[j]) for j in np.flatnonzero(row)} for row in votes]
    else:
        rows = [[_num(x) for x in row] for row in votes]
    out: dict = {"projects": projects}
    if spec is not None and (spec.complements or spec.substitutes):
        out["interaction_groups"] = (
            [{"kind": "complement", "projects": list(g)} for g in spec.complements]
            + [{"kind": "substitute", "projects": list(g)} for g in spec.substitutes])
    out["votes"] = rows
    return out


def profile_from_dict(data: dict) -> tuple[VoteProfile, InteractionSpec]:
    if not isinstance(data, dict) or "votes" not in data:
        raise InputError("profile JSON needs a 'votes' list")
    projects = data.get("projects")
    rows = data["votes"]
    if not isinstance(rows, list) or not rows:
        raise InputError("'votes' must be a nonempty list")
    m = len(projects) if projects else None
    if m is None:
        dense = [r for r in rows if isinstance(r, list)]
        if not dense:
            raise InputError("sparse votes need a 'projects' list")
        m = len(dense[0])
    votes = np.zeros((len(rows), m))
    for i, row in enumerate(rows):
        where = f"vote {i}"
        if isinstance(row, list):
            if len(row) != m:
                raise InputError(f"{where}: {len(row)} entries, expected {m}")
            votes[i] = [_parse_num(x, where) for x in row]
        elif isinstance(row, dict):
            for key, val in row.items():
                try:
                    j = int(key)
                except ValueError:
                    raise InputError(f"{where}: bad project index {key!r}") from None
                if not 0 <= j < m:
                    raise InputError(f"{where}: project index {j} out of range")
                votes[i, j] = _parse_num(val, where)
        else:
            raise InputError(f"{where}: must be a list or an object")
    names = tuple(str(p.get("name", f"p{j}")) for j, p in enumerate(projects)) if projects else None
    comps, subs = [], []
    for g in data.get("interaction_groups", []) or []:
        kind = g.get("kind")
        if kind not in ("complement", "substitute"):
            raise InputError(f"interaction group kind {kind!r} must be complement or substitute")
        (comps if kind == "complement" else subs).append(tuple(int(j) for j in g.get("projects", [])))
    try:
        spec = InteractionSpec(m, tuple(comps), tuple(subs))
        P = VoteProfile(votes, names=names)
    except (BudgetError, InteractionError) as exc:
        raise InputError(str(exc)) from None
    return P, spec


def write_profile(path, P: VoteProfile, spec: InteractionSpec | None = None, costs=None) -> None:
    text = json.dumps(profile_to_dict(P, spec, costs), separators=(",", ":"))
    if str(path) == "-":
        sys.stdout.write(text + "\n")
    else:
        Path(path).write_text(text + "\n")


def read_profile(path) -> tuple[VoteProfile, InteractionSpec]:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc.msg}, line {exc.lineno})") from None
    return profile_from_dict(data)


# ---------------------------------------------------------------------------
# KnapsackCSV


def ingest(path, fmt: str = "csv", total_budget: float | None = None) -> VoteProfile:
    """Read ballots into a normalized profile (``fmt`` is ``csv`` or ``json``)."""
    if fmt == "json":
        return read_profile(path)[0]
    if fmt != "csv":
        raise InputError(f"unknown ballot format {fmt!r}")
    try:
        with open(path, newline="") as fh:
            lines = list(csv.reader(fh))
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    header = None
    total = None
    spends = []
    for lineno, cells in enumerate(lines, start=1):
        cells = [c.strip() for c in cells]
        if not cells or not any(cells) or cells[0].startswith("#"):
            continue
        if cells[0].lower() == "total_budget":
            if len(cells) < 2:
                raise InputError(f"line {lineno}: total_budget needs a value")
            total = _parse_num(cells[1], f"line {lineno}")
            continue
        if header is None:
            header = cells
            continue
        if len(cells) != len(header):
            raise InputError(f"line {lineno}: {len(cells)} cells, header has {len(header)}")
        spends.append((lineno, [_parse_num(c, f"line {lineno}") for c in cells]))
    if total_budget is not None:
        total = float(total_budget)
    if header is None or not spends:
        raise InputError(f"{path}: no header or no ballots")
    if total is None or total <= 0:
        raise InputError("total budget missing or not positive")
    rows = []
    for lineno, row in spends:
        row = np.array(row)
        if np.any(row < 0):
            raise InputError(f"line {lineno}: negative spend")
        spent = float(row.sum())
        if spent > total * (1 + OVERSPEND_TOL):
            raise InputError(f"line {lineno}: spends {spent:g}, more than the total {total:g}")
        rows.append(np.append(row, max(total - spent, 0.0)) / total)
    votes = np.array(rows)
    votes = votes / votes.sum(axis=1, keepdims=True)
    return VoteProfile(votes, names=tuple(header) + ("unspent",))


# ---------------------------------------------------------------------------
# subcommands


def _write(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text + "\n")
    else:
        Path(path).write_text(text + "\n")


def cmd_simulate(args) -> int:
    P, _ = read_profile(args.profile)
    votes = P.votes
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary = {"scheme": args.scheme, "rounds": args.rounds, "reps": args.reps, "seed": args.seed}
    if de._unanimous(votes):
        summary["unanimous"] = True
        summary["note"] = "degenerate profile: every outcome is the unanimous budget"
        (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
        return EXIT_OK
    opt = de.optimal_budget(votes)
    if args.scheme in TRIADIC:
        paths = deliberation_paths(votes, args.rounds, args.reps, args.scheme, args.seed)
    else:
        # one-shot schemes: round 0 is a random vote, round 1 the scheme's outcome
        rng = np.random.default_rng(args.seed)
        start = votes[rng.integers(votes.shape[0], size=args.reps)]
        mech = get_mechanism(args.scheme)
        paths = np.array([start, [mech.sample(votes, rng) for _ in range(args.reps)]])
    dist = np.array([de.social_costs(votes, outs) / opt.cost for outs in paths])
    ddof = 1 if args.reps > 1 else 0
    with open(out / "distortion_by_round.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["round", "mean_distortion", "sd_distortion"])
        for t, d in enumerate(dist):
            w.writerow([t, _num(d.mean()), _num(d.std(ddof=ddof))])
    names = P.names or tuple(f"p{j}" for j in range(P.m))
    with open(out / "allocation_sd.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["round"] + [f"sd_{name}" for name in names])
        for t, outs in enumerate(paths):
            w.writerow([t] + [_num(x) for x in outs.std(axis=0, ddof=ddof)])
    counts, edges = np.histogram(dist[1], bins=HIST_BINS)
    with open(out / "round1_histogram.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bin_left", "bin_right", "count"])
        for k in range(HIST_BINS):
            w.writerow([_num(edges[k]), _num(edges[k + 1]), int(counts[k])])
    summary.update(optimal_cost=opt.cost, final_mean_distortion=float(dist[-1].mean()),
                   unanimous=False)
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return EXIT_OK


def cmd_distortion(args) -> int:
    P, _ = read_profile(args.profile)
    if args.closed_form:
        shape = de.recognize_instance(P.votes)
        if shape is None:
            raise InputError("no closed form: profile is not a known lower-bound instance")
        if shape[0] == "nash":
            if args.scheme != "nash":
                raise InputError("the closed form on this instance covers the nash scheme only")
            value = de.nash_lb_closed_form(shape[1], shape[2])
            optimal = 2.0 * shape[1]
        else:
            if args.scheme not in ("dictator", "diarchy", "referee"):
                raise InputError("the closed form on this instance covers dictator, diarchy, referee")
            n = shape[1]
            value = de.expected_referee_cost(n) / 2.0 if n > 1 else 1.0
            optimal = 2.0
        report = de.DistortionReport(args.scheme, "closed-form", optimal, value * optimal, value,
                                     unanimous=shape == ("dist2", 1), meta={"instance": list(shape)})
    elif args.exact:
        try:
            report = de.exact_distortion(P, args.scheme)
        except de.DistortionError as exc:
            raise InputError(str(exc)) from None
    else:
        report = de.mc_distortion(P, args.scheme, args.mc, args.seed)
    _write(args.out, report.to_json())
    return EXIT_OK


def cmd_gen_instance(args) -> int:
    kind = args.kind
    if kind in ("dictator", "diarchy", "referee"):
        P = de.gen_lower_bound_instance(kind, n=args.n)
    elif kind == "nash-lb":
        P = de.gen_lower_bound_instance("nash", n_A=args.nA, n_B=args.nB)
    elif kind == "clustered":
        P = de.clustered_profile(args.n, args.m, args.clusters, seed=args.seed)
    else:
        P = VoteProfile(de.random_profile(args.n, args.m, np.random.default_rng(args.seed)))
    write_profile(args.out, P)
    return EXIT_OK


def cmd_verify_pd(args) -> int:
    cases = args.cases
    if cases.isdigit():
        cases = int(cases)
    elif cases != "all":
        cases = [c for c in cases.replace(",", " ").split() if c]
    if args.mode == "median":
        bound = pv.MEDIAN_BOUND if args.bound is None else args.bound
        report = pv.verify_median_bound(bound, args.tol, cases, args.jobs, args.seed)
    else:
        bound = pv.RAND_BOUND if args.bound is None else args.bound
        report = pv.verify_rand_bound(bound, args.tol, args.restarts, cases, args.jobs, args.seed)
    text = report.to_json(args.out, include_cases=True) if args.out else report.to_json()
    sys.stderr.write(json.dumps(report.summary()) + "\n")
    if not args.out:
        sys.stdout.write(text + "\n")
    return EXIT_OK if report.all_passed else EXIT_FAIL


def cmd_ingest(args) -> int:
    P = ingest(args.input, "csv", args.total_budget)
    write_profile(args.out, P)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pbdistortion",
                                     description="Participatory-budgeting bargaining and distortion tools.")
    sub = parser.add_subparsers(dest="command", required=True)
    schemes = sorted(MECHANISMS)

    p = sub.add_parser("simulate", help="sequential deliberation or one-shot sampling, per-round CSVs")
    p.add_argument("--profile", required=True)
    p.add_argument("--scheme", choices=schemes, default="nash")
    p.add_argument("--rounds", type=int, default=10)
    p.add_argument("--reps", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("distortion", help="distortion report as JSON")
    p.add_argument("--profile", required=True)
    p.add_argument("--scheme", choices=schemes, default="nash")
    how = p.add_mutually_exclusive_group(required=True)
    how.add_argument("--exact", action="store_true", help="enumerate all sampled tuples")
    how.add_argument("--mc", type=int, metavar="R", help="Monte-Carlo with R replicates")
    how.add_argument("--closed-form", action="store_true", help="formula for a lower-bound instance")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_distortion)

    p = sub.add_parser("gen-instance", help="write a profile JSON")
    p.add_argument("--kind", required=True,
                   choices=["dictator", "diarchy", "referee", "nash-lb", "clustered", "random"])
    p.add_argument("--n", type=int, default=4, help="voters")
    p.add_argument("--m", type=int, default=5, help="projects (clustered, random)")
    p.add_argument("--nA", type=int, default=2)
    p.add_argument("--nB", type=int, default=3)
    p.add_argument("--clusters", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_gen_instance)

    p = sub.add_parser("verify-pd", help="certify a pessimistic-distortion bound case by case")
    p.add_argument("--mode", choices=["median", "rand"], default="median")
    p.add_argument("--bound", type=float, default=None)
    p.add_argument("--tol", type=float, default=pv.DEFAULT_TOL)
    p.add_argument("--cases", default="all", help="'all', a count N, or hex case strings")
    p.add_argument("--restarts", type=int, default=16, help="multistart restarts (rand mode)")
    p.add_argument("--jobs", type=int, default=None, help="worker processes (default: PB_JOBS or 1)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_verify_pd)

    p = sub.add_parser("ingest", help="knapsack ballots CSV to profile JSON")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--total-budget", type=float, default=None)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_ingest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    if getattr(args, "jobs", None) is None and "PB_JOBS" in os.environ and hasattr(args, "jobs"):
        args.jobs = pv.default_jobs()
    try:
        return args.func(args)
    except (InputError, BudgetError, InteractionError, de.DistortionError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
