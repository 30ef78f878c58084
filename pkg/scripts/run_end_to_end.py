"""Bound, verify, simulate and plot for one scenario through the CLI.

    python3 scripts/run_end_to_end.py scenarios/double_integrator.yaml [--trials N] [--quiet-noise]

``--quiet-noise`` divides the noise covariance by 100, the setting in which
the double integrator goal survives erosion.
"""
import argparse
import tempfile
from pathlib import Path

import yaml

from stlerode.cli import main as cli


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("scenario")
    ap.add_argument("--trials", type=int, default=10_000)
    ap.add_argument("--out")
    ap.add_argument("--quiet-noise", action="store_true")
    args = ap.parse_args()
    path = Path(args.scenario).resolve()
    out = args.out or f"runs/{path.stem}{'_quiet' if args.quiet_noise else ''}"
    if args.quiet_noise:
        raw = yaml.safe_load(path.read_text())
        raw["system"]["noise_cov"] = float(raw["system"].get("noise_cov", 4e-4)) / 100
        raw["system"]["reference"] = str(path.parent / raw["system"]["reference"])
        raw.pop("output", None)
        tmp = Path(tempfile.mkdtemp()) / path.name
        tmp.write_text(yaml.safe_dump(raw))
        path = tmp
    cli(["bound", "--scenario", str(path), "--out", out])
    code = cli(["verify", "--scenario", str(path), "--out", out])
    cli(["simulate", "--scenario", str(path), "--out", out, "--trials", str(args.trials)])
    cli(["plot", "--out", out])
    print(f"verify exit code {code}; artifacts in {out}")


if __name__ == "__main__":
    main()
