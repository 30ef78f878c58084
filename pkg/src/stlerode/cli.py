"""Command-line entry point: ``stlerode {bound,verify,simulate,plot}``.

Exit codes: 0 Verified (or success), 1 Falsified, 2 invalid input,
3 Unknown.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np
import yaml

from .erosion import ErodedSpec, bound_report, erosion_pipeline
from .geometry import EmptyRegion, Region, outline
from .scenario import Scenario, ScenarioError, eroded_scenario_dict, load_scenario
from .stl import parse_formula, print_formula
from .verify import Counterexample, Verdict, monte_carlo_estimate, verify_deterministic
from . import plot

log = logging.getLogger("stlerode")

EXIT_INVALID = 2
KEEP_TRAJECTORIES = 50


class UsageError(Exception):
    pass


def _out_dir(args, sc: Scenario | None) -> Path:
    if args.out:
        out = Path(args.out)
    elif sc is not None and sc.out_dir is not None:
        out = sc.out_dir
    else:
        out = Path("runs") / (sc.name if sc else "run")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _scenario(args) -> Scenario:
    sc = load_scenario(args.scenario)
    if getattr(args, "seed", None) is not None:
        sc = sc.with_(seed=args.seed)
    return sc


# ---------------------------------------------------------------------------
# Writers
# ---------------------------------------------------------------------------

def write_bound_csv(path: Path, spec: ErodedSpec) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "r_tight", "r_worst"])
        for t, (a, b) in enumerate(zip(spec.r_tight, spec.r_worst)):
            w.writerow([t, f"{a:.10g}", f"{b:.10g}"])


def _region_rows(name: str, layer: str, R: Region):
    inside = "outside" if "Complement" in type(R).__name__ else "inside"
    if isinstance(R, EmptyRegion):
        yield [name, layer, "empty", -1, "", ""]
        return
    for i, (x, y) in enumerate(outline(R)):
        yield [name, layer, inside, i, f"{x:.6f}", f"{y:.6f}"]


def write_regions_csv(path: Path, sc: Scenario, spec: ErodedSpec) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["region", "layer", "fill", "vertex", "x", "y"])
        for name in sorted(sc.table):
            w.writerows(_region_rows(name, "original", sc.table[name]))
        for name in sorted(spec.table):
            w.writerows(_region_rows(name, "eroded", spec.table[name]))


def write_trajectories_csv(path: Path, traj: np.ndarray, coords=(0, 1)) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["traj", "t", "x", "y"])
        for i, tr in enumerate(traj):
            for t, row in enumerate(tr):
                w.writerow([i, t, f"{row[coords[0]]:.6f}", f"{row[coords[1]]:.6f}"])


def write_counterexample_csv(path: Path, cex: Counterexample) -> None:
    n, m = cex.trajectory.shape[1], cex.d_seq.shape[1]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", *[f"x{i}" for i in range(n)], *[f"d{j}" for j in range(m)]])
        for t, x in enumerate(cex.trajectory):
            d = cex.d_seq[t] if t < len(cex.d_seq) else [""] * m
            w.writerow([t, *[f"{v:.17g}" for v in x], *[v if v == "" else f"{v:.17g}" for v in d]])


def load_counterexample(path: Path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(x0, d_seq, trajectory)`` from a counterexample CSV."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    head, body = rows[0], rows[1:]
    xs = [i for i, h in enumerate(head) if h.startswith("x")]
    ds = [i for i, h in enumerate(head) if h.startswith("d")]
    traj = np.array([[float(r[i]) for i in xs] for r in body])
    d = np.array([[float(r[i]) for i in ds] for r in body[:-1]])
    return traj[0], d, traj


def verdict_report(sc: Scenario, spec: ErodedSpec, v: Verdict) -> str:
    lines = [
        f"scenario             {sc.name}",
        f"formula              {print_formula(spec.original)}",
        f"eroded formula       {print_formula(spec.formula)}",
        f"verdict              {v.outcome}",
        f"tube margin          {v.margin:.6g}",
        f"cover size           {v.cover_size}",
        f"tubes checked        {v.tubes_checked}",
        f"divergent tubes      {v.divergent}",
    ]
    if spec.empty:
        lines.append(f"empty predicates     {', '.join(sorted(spec.empty))}")
    if v.outcome == "Verified":
        lines.append(f"guarantee            the stochastic system satisfies the formula with probability "
                     f">= 1 - {spec.delta:.6g} = {spec.guarantee:.10g}")
    elif v.counterexample is not None:
        c = v.counterexample
        lines.append(f"counterexample       sample {c.index}, violation at t = {c.violation_time}")
        lines.append(f"falsification tries  {v.samples_tried}")
    else:
        lines.append(f"falsification tries  {v.samples_tried} (no violation found)")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_bound(args) -> int:
    sc = _scenario(args)
    spec = erosion_pipeline(sc)
    out = _out_dir(args, sc)
    write_bound_csv(out / "bound.csv", spec)
    text = bound_report(spec)
    (out / "bound_report.txt").write_text(text)
    rt, rw = float(spec.r_tight.max()), float(spec.r_worst.max())
    print(f"max r_tight {rt:.6f}  max r_worst {rw:.6f}  ratio {rw / rt if rt > 0 else float('nan'):.4f}")
    return 0


def cmd_verify(args) -> int:
    sc = _scenario(args)
    if args.budget is not None and args.budget < 1:
        raise UsageError("--budget must be at least 1")
    spec = erosion_pipeline(sc)
    out = _out_dir(args, sc)
    write_bound_csv(out / "bound.csv", spec)
    (out / "bound_report.txt").write_text(bound_report(spec))
    write_regions_csv(out / "regions.csv", sc, spec)
    eroded = eroded_scenario_dict(sc, print_formula(spec.formula), spec.table)
    (out / "eroded_scenario.yaml").write_text(yaml.safe_dump(eroded, sort_keys=False))
    v = verify_deterministic(sc, spec, budget=args.budget)
    if v.counterexample is not None:
        write_counterexample_csv(out / "counterexample.csv", v.counterexample)
    text = verdict_report(sc, spec, v)
    (out / "report.txt").write_text(text)
    sys.stdout.write(text)
    return v.exit_code


def cmd_simulate(args) -> int:
    sc = _scenario(args)
    N = sc.trials if args.trials is None else args.trials
    if N < 1:
        raise UsageError("--trials must be at least 1")
    spec = erosion_pipeline(sc)
    out = _out_dir(args, sc)
    original = parse_formula(sc.formula)
    stoch, kept_s = monte_carlo_estimate(sc, original, sc.table, N, keep=KEEP_TRAJECTORIES)
    det, kept_d = monte_carlo_estimate(sc, spec.formula, spec.table, N, stochastic=False,
                                       keep=KEEP_TRAJECTORIES)
    write_regions_csv(out / "regions.csv", sc, spec)
    write_trajectories_csv(out / "trajectories_stochastic.csv", kept_s)
    write_trajectories_csv(out / "trajectories_deterministic.csv", kept_d)
    lines = [f"scenario             {sc.name}", f"seed                 {sc.seed}", f"trials               {N}"]
    for label, e in (("stochastic vs formula", stoch), ("deterministic vs eroded", det)):
        lines.append(f"{label:<24s} successes {e.successes}  violations {e.violations}  "
                     f"rate {e.rate:.6f}  99% lower bound {e.lower:.6f}")
    text = "\n".join(lines) + "\n"
    (out / "simulate_report.txt").write_text(text)
    sys.stdout.write(text)
    return 0


def cmd_plot(args) -> int:
    run = Path(args.out) if args.out else None
    if run is None and args.scenario:
        run = _out_dir(argparse.Namespace(out=None), load_scenario(args.scenario))
    if run is None:
        raise UsageError("plot needs --out <run directory> or --scenario")
    try:
        path = plot.render_run(run)
    except FileNotFoundError as exc:
        raise UsageError(f"missing run artifact: {exc.filename}") from None
    print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stlerode", description="Erosion-based STL verification of stochastic systems.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, scenario_required=True):
        sp.add_argument("--scenario", required=scenario_required, help="scenario YAML file")
        sp.add_argument("--out", help="output directory")
        return sp

    b = common(sub.add_parser("bound", help="tight and worst-case deviation radii"))
    b.add_argument("--seed", type=int)
    b.set_defaults(func=cmd_bound)
    v = common(sub.add_parser("verify", help="erode the formula and verify deterministically"))
    v.add_argument("--seed", type=int)
    v.add_argument("--budget", type=int, help="falsification samples")
    v.set_defaults(func=cmd_verify)
    s = common(sub.add_parser("simulate", help="Monte Carlo check of both formulas"))
    s.add_argument("--seed", type=int)
    s.add_argument("--trials", type=int)
    s.set_defaults(func=cmd_simulate)
    pl = common(sub.add_parser("plot", help="render a run directory to SVG"), scenario_required=False)
    pl.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (ScenarioError, UsageError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
