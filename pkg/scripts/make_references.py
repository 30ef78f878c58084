"""Regenerate the reference CSVs shipped in scenarios/.

    python3 scripts/make_references.py
"""
from pathlib import Path

from stlerode.systems import double_integrator_reference, save_reference, unicycle_reference

HERE = Path(__file__).resolve().parent.parent / "scenarios"

# rest-to-rest, below and right of the obstacle, settling in the goal by step 85
DI_WAYPOINTS = [(0.4, 0.4), (2.6, -0.1), (4.6, 1.0), (4.9, 3.2)]

# through goal 1 on a straight stretch, then over the top of the hexagon into goal 2
UNICYCLE_WAYPOINTS = [(0.0, 0.2), (0.0, 0.9), (-2.3, 2.0), (-2.3, 3.1), (-1.4, 4.4),
                      (1.4, 4.4), (2.45, 3.3), (2.45, 2.65)]


def main() -> None:
    save_reference(HERE / "double_integrator_reference.csv",
                   double_integrator_reference(DI_WAYPOINTS, T=100, arrive=85))
    save_reference(HERE / "unicycle_reference.csv",
                   unicycle_reference(UNICYCLE_WAYPOINTS, T=120, arrive=116))


if __name__ == "__main__":
    main()
