"""Static SVG rendering of a run directory. Reads CSVs only."""
from __future__ import annotations

import csv
from collections import defaultdict
from pathlib import Path

SIZE = 640
PAD = 24

STYLE = {
    ("original", "inside"): 'fill="#9ecf8f" fill-opacity="0.5" stroke="#3c7a32" stroke-width="1.5"',
    ("original", "outside"): 'fill="#9a9a9a" fill-opacity="0.6" stroke="#444" stroke-width="1.5"',
    ("eroded", "inside"): 'fill="#f2d750" fill-opacity="0.8" stroke="#b39400" stroke-width="1"',
    ("eroded", "outside"): 'fill="none" stroke="#b39400" stroke-width="1.5" stroke-dasharray="6 4"',
}
TRAJ_STYLE = {
    "trajectories_stochastic.csv": 'stroke="#2a6fdb" stroke-opacity="0.35" stroke-width="0.8"',
    "trajectories_deterministic.csv": 'stroke="#111" stroke-opacity="0.35" stroke-width="0.8"',
}


def _read_regions(path: Path):
    shapes = defaultdict(list)
    meta = {}
    with path.open(newline="") as fh:
        for row in csv.DictReader(fh):
            key = (row["region"], row["layer"])
            meta[key] = row["fill"]
            if row["x"] != "":
                shapes[key].append((float(row["x"]), float(row["y"])))
    return shapes, meta


def _read_traj(path: Path):
    lines = defaultdict(list)
    with path.open(newline="") as fh:
        for row in csv.DictReader(fh):
            lines[int(row["traj"])].append((float(row["x"]), float(row["y"])))
    return [lines[k] for k in sorted(lines)]


def render(regions: dict, meta: dict, trajectories: dict[str, list]) -> str:
    pts = [p for v in regions.values() for p in v] + [p for ts in trajectories.values() for t in ts for p in t]
    if not pts:
        pts = [(0.0, 0.0), (1.0, 1.0)]
    xs, ys = [p[0] for p in pts], [p[1] for p in pts]
    x0, x1, y0, y1 = min(xs), max(xs), min(ys), max(ys)
    span = max(x1 - x0, y1 - y0, 1e-9)
    k = (SIZE - 2 * PAD) / span

    def tr(p):
        return f"{PAD + (p[0] - x0) * k:.2f},{SIZE - PAD - (p[1] - y0) * k:.2f}"

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">',
           f'<rect width="{SIZE}" height="{SIZE}" fill="white"/>']
    # originals below eroded, obstacles first
    order = sorted(regions, key=lambda key: (key[1] != "original", meta[key] != "outside", key[0]))
    for key in order:
        poly = regions[key]
        if len(poly) < 2:
            continue
        style = STYLE[(key[1], meta[key])]
        out.append(f'<polygon points="{" ".join(tr(p) for p in poly)}" {style}><title>{key[0]} ({key[1]})</title></polygon>')
    for name in sorted(trajectories):
        style = TRAJ_STYLE.get(name, 'stroke="#555" stroke-width="0.8"')
        for t in trajectories[name]:
            out.append(f'<polyline points="{" ".join(tr(p) for p in t)}" fill="none" {style}/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_run(run: Path | str) -> Path:
    run = Path(run)
    regions_path = run / "regions.csv"
    if not regions_path.exists():
        raise FileNotFoundError(2, "missing", str(regions_path))
    shapes, meta = _read_regions(regions_path)
    traj = {}
    for name in sorted(TRAJ_STYLE):
        p = run / name
        if p.exists():
            traj[name] = _read_traj(p)
    svg = render(shapes, meta, traj)
    path = run / "figure.svg"
    path.write_text(svg)
    return path
