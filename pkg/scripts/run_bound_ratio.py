"""Tight versus worst-case radii for every shipped scenario.

    python3 scripts/run_bound_ratio.py
"""
from pathlib import Path

from stlerode.erosion import erosion_pipeline
from stlerode.scenario import load_scenario

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def main() -> None:
    print(f"{'scenario':<20s} {'L range':>19s} {'max r_tight':>12s} {'max r_worst':>12s} {'ratio':>7s}")
    for path in sorted(SCENARIOS.glob("*.yaml")):
        sc = load_scenario(path)
        spec = erosion_pipeline(sc)
        rt, rw = spec.r_tight.max(), spec.r_worst.max()
        L = f"[{spec.lipschitz.min():.4f}, {spec.lipschitz.max():.4f}]"
        print(f"{sc.name:<20s} {L:>19s} {rt:12.4f} {rw:12.4f} {rw / rt:7.2f}")


if __name__ == "__main__":
    main()
