import csv
from pathlib import Path

import numpy as np
import yaml

from stlerode.cli import load_counterexample, main
from stlerode.scenario import load_scenario
from stlerode.systems import simulate_batch

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def variant(tmp_path, name, edit=None, fname="scenario.yaml"):
    raw = yaml.safe_load((SCENARIOS / f"{name}.yaml").read_text())
    raw["system"]["reference"] = str(SCENARIOS / raw["system"]["reference"])
    raw.pop("output", None)
    if edit:
        edit(raw)
    path = tmp_path / fname
    path.write_text(yaml.safe_dump(raw))
    return path


def read_bound(path):
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    return np.array([[float(r["r_tight"]), float(r["r_worst"])] for r in rows])


def test_bound_unicycle(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["bound", "--scenario", str(variant(tmp_path, "unicycle")), "--out", str(out)]) == 0
    ratio = float(capsys.readouterr().out.split("ratio")[1])
    assert ratio >= 5
    b = read_bound(out / "bound.csv")
    assert b.shape == (121, 2) and b[0].tolist() == [0.0, 0.0]


def test_bound_zero_noise_and_scaling(tmp_path):
    def noise(v):
        def edit(raw):
            raw["system"]["noise_cov"] = v
        return edit
    runs = {}
    for key, v in (("zero", 0.0), ("base", 4e-4), ("double", 16e-4)):
        path = variant(tmp_path, "double_integrator", noise(v), f"{key}.yaml")
        assert main(["bound", "--scenario", str(path), "--out", str(tmp_path / key)]) == 0
        runs[key] = read_bound(tmp_path / key / "bound.csv")
    assert not runs["zero"].any()
    assert np.allclose(runs["double"], 2 * runs["base"], rtol=1e-7)


def test_invalid_inputs_exit_2(tmp_path, capsys):
    def bad_formula(raw):
        raw["spec"]["formula"] = "G[0,100] obs & (F[0,90] goal"
    path = variant(tmp_path, "double_integrator", bad_formula)
    assert main(["verify", "--scenario", str(path), "--out", str(tmp_path / "r")]) == 2
    assert "position 28" in capsys.readouterr().err

    def undefined(raw):
        raw["spec"]["formula"] = "G[0,100] wall"
    path = variant(tmp_path, "double_integrator", undefined)
    assert main(["verify", "--scenario", str(path), "--out", str(tmp_path / "r")]) == 2
    assert main(["bound", "--scenario", str(tmp_path / "nope.yaml")]) == 2

    def delta_one(raw):
        raw["spec"]["delta"] = 1.0
    path = variant(tmp_path, "double_integrator", delta_one)
    assert main(["bound", "--scenario", str(path), "--out", str(tmp_path / "r")]) == 2
    path = variant(tmp_path, "double_integrator")
    assert main(["simulate", "--scenario", str(path), "--trials", "0", "--out", str(tmp_path / "r")]) == 2


def quiet(raw):
    raw["system"]["noise_cov"] = 4e-6


def test_verify_verified_run(tmp_path, capsys):
    path = variant(tmp_path, "double_integrator", quiet)
    out = tmp_path / "run"
    assert main(["verify", "--scenario", str(path), "--out", str(out)]) == 0
    report = (out / "report.txt").read_text()
    assert "Verified" in report and "1 - 0.0001" in report
    for f in ("bound.csv", "regions.csv", "eroded_scenario.yaml"):
        assert (out / f).exists()
    # the eroded scenario loads and carries the shrunk goal
    er = load_scenario(out / "eroded_scenario.yaml")
    assert er.table["goal"].radius < 0.55


def test_verify_falsified_writes_replayable_counterexample(tmp_path):
    path = variant(tmp_path, "double_integrator")
    out = tmp_path / "run"
    assert main(["verify", "--scenario", str(path), "--out", str(out), "--budget", "10"]) == 1
    x0, d, traj = load_counterexample(out / "counterexample.csv")
    sc = load_scenario(path)
    again = simulate_batch(sc.model, x0[None], d[None], sc.T)[0]
    assert np.allclose(again, traj, atol=1e-12)
    assert "goal" in (out / "report.txt").read_text()


def test_simulate_reproducible_and_plot(tmp_path):
    path = variant(tmp_path, "double_integrator", quiet)
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["simulate", "--scenario", str(path), "--out", str(out), "--trials", "300", "--seed", "5"]) == 0
    for f in ("simulate_report.txt", "trajectories_stochastic.csv", "trajectories_deterministic.csv"):
        assert (a / f).read_bytes() == (b / f).read_bytes()
    assert "violations 0" in (a / "simulate_report.txt").read_text()
    assert main(["plot", "--out", str(a)]) == 0
    first = (a / "figure.svg").read_bytes()
    assert main(["plot", "--out", str(a)]) == 0
    assert (a / "figure.svg").read_bytes() == first
    assert first.count(b"<polyline") == 100
    assert first.count(b"<polygon") == 4


def test_plot_regions_only_and_missing(tmp_path):
    path = variant(tmp_path, "double_integrator", quiet)
    out = tmp_path / "run"
    assert main(["verify", "--scenario", str(path), "--out", str(out)]) == 0
    assert main(["plot", "--out", str(out)]) == 0
    svg = (out / "figure.svg").read_text()
    assert "<polyline" not in svg and svg.count("<polygon") == 4
    assert main(["plot", "--out", str(tmp_path / "empty")]) == 2
