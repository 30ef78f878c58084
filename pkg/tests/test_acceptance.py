"""Acceptance criteria. Each test prints one PASS/FAIL line with its tolerance.

Run alone with ``pytest tests/test_acceptance.py -v -s`` to see the lines
without pytest's capture.
"""
import math
import time
from pathlib import Path

import numpy as np
import pytest

from oracles import naive_sat, random_formula, random_walk, table_2d
from stlerode.cli import main
from stlerode.deviation import epsilon_coeffs, prs_radius, psi_schedules, worst_case_radius
from stlerode.erosion import erode_formula, erosion_pipeline
from stlerode.geometry import Ball, Disk, DiskComplement, Halfspace, erode_region
from stlerode.scenario import load_scenario
from stlerode.stl import eval_bool, horizon
from stlerode.systems import draw_inputs, simulate_batch
from stlerode.verify import build_tube, tube_satisfies

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


@pytest.fixture
def report(capsys):
    def emit(num, title, ok, detail):
        with capsys.disabled():
            print(f"\n[criterion {num}] {'PASS' if ok else 'FAIL'}  {title}: {detail}")
        return ok
    return emit


def test_c1_bound_ratio(report):
    t0 = time.perf_counter()
    spec = erosion_pipeline(load_scenario(SCENARIOS / "unicycle.yaml"))
    dt = time.perf_counter() - t0
    rt, rw = float(spec.r_tight.max()), float(spec.r_worst.max())
    ok = rw / rt >= 5 and 0.2 <= rt <= 1.5 and dt < 10
    assert report(1, "unicycle worst/tight ratio", ok,
                  f"ratio {rw / rt:.3f} (need >= 5), tight {rt:.4f} (need [0.2, 1.5]), {dt:.2f} s (need < 10 s)")


def test_c2_dominance(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    violations = 0
    for _ in range(100):
        T = int(rng.integers(1, 201))
        L = rng.uniform(0.5, 2.0, T)
        s2 = rng.uniform(0.0, 1.0, T) ** 2
        delta = float(10 ** rng.uniform(-6, -1))
        n = int(rng.integers(1, 6))
        tight = prs_radius(L, s2, n, delta / T)
        worst = worst_case_radius(L, s2, n, delta, T)
        violations += int(np.sum(~(worst >= tight)))
    dt = time.perf_counter() - t0
    assert report(2, "worst-case radius dominates tight radius", violations == 0 and dt < 5,
                  f"{violations} violations over 100 schedules (need 0, exact), {dt:.2f} s (need < 5 s)")


def _coverage(name, pairs=10_000, theta=1e-2, seed=7):
    sc = load_scenario(SCENARIOS / f"{name}.yaml")
    spec = erosion_pipeline(sc)
    r = prs_radius(spec.lipschitz, spec.sigma2, sc.model.n, theta)
    dr = draw_inputs(sc.model, sc.x0_lo, sc.x0_hi, sc.T, seed, 0, pairs)
    X = simulate_batch(sc.model, dr.x0, dr.d_seq, sc.T, dr.noise)
    x = simulate_batch(sc.model, dr.x0, dr.d_seq, sc.T)
    e = X - x
    dist = np.sqrt(np.einsum("ati,ij,atj->at", e, spec.weight, e))
    frac = np.mean(dist <= r[None], axis=0)
    return float(frac[1:].min()), float(np.median(dist[:, -1]) / r[-1])


def test_c3_prs_coverage(report):
    t0 = time.perf_counter()
    res = {name: _coverage(name) for name in ("double_integrator", "unicycle")}
    dt = time.perf_counter() - t0
    ok = all(v[0] >= 0.985 for v in res.values()) and dt < 120
    detail = ", ".join(f"{k} min coverage {v[0]:.4f}" for k, v in res.items())
    assert report(3, "PRS coverage at theta = 1e-2 over 1e4 pairs", ok,
                  f"{detail} (need >= 0.985 at every t), {dt:.1f} s (need < 120 s)")


def test_c4_end_to_end(tmp_path, report):
    t0 = time.perf_counter()
    scen = str(SCENARIOS / "double_integrator.yaml")
    code = main(["verify", "--scenario", scen, "--out", str(tmp_path)])
    assert main(["simulate", "--scenario", scen, "--out", str(tmp_path), "--trials", "100000"]) == 0
    dt = time.perf_counter() - t0
    lines = (tmp_path / "simulate_report.txt").read_text().splitlines()
    viol = [int(ln.split("violations")[1].split()[0]) for ln in lines if "violations" in ln]
    verdict = (tmp_path / "report.txt").read_text().split("verdict")[1].split()[0]
    ok = code == 0 and viol == [0, 0] and dt < 600
    assert report(4, "double integrator end to end", ok,
                  f"verify {verdict} (exit {code}, need Verified), stochastic violations of the formula {viol[0]}, "
                  f"deterministic violations of the eroded formula {viol[1]} (need 0 and 0, N = 1e5), "
                  f"{dt:.1f} s (need < 600 s)")


def test_c5_erosion_soundness(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    table = table_2d()
    held = bad = 0
    for _ in range(1000):
        f = random_formula(rng, 4, max_hi=5)
        rho = float(rng.uniform(0.0, 0.3))
        spec = erode_formula(f, table, Ball(rho, 2))
        traj = random_walk(rng, horizon(f) + 1)
        if not eval_bool(spec.formula, spec.table, traj):
            continue
        held += 1
        e = rng.normal(size=traj.shape)
        e *= (rho * rng.uniform(0, 1, (len(traj), 1)) ** 0.5) / np.linalg.norm(e, axis=1, keepdims=True)
        bad += int(not eval_bool(f, table, traj + e))
    dt = time.perf_counter() - t0
    assert report(5, "erosion soundness on 1e3 random triples", bad == 0 and held > 0 and dt < 60,
                  f"{bad} counterexamples among {held} triples where the eroded formula held (need 0), "
                  f"{dt:.1f} s (need < 60 s)")


def test_c6_monitor_oracle(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(6)
    table = table_2d()
    mismatches = 0
    for _ in range(1000):
        f = random_formula(rng, 4, max_hi=5, negation=True)
        while horizon(f) > 20:
            f = random_formula(rng, 4, max_hi=5, negation=True)
        traj = random_walk(rng, horizon(f) + 1 + int(rng.integers(0, 3)))
        mismatches += int(eval_bool(f, table, traj) != naive_sat(f, table, traj, 0))
    dt = time.perf_counter() - t0
    assert report(6, "monitor agrees with naive evaluator", mismatches == 0 and dt < 30,
                  f"{mismatches} mismatches over 1e3 formulas (need 0), {dt:.1f} s (need < 30 s)")


def test_c7_hand_numerics(report):
    _, Psi = psi_schedules([2.0, 2.0], [1.0, 1.0])
    c1, c2 = epsilon_coeffs(0.5)
    a = np.array([3.0, -4.0])
    eroded = erode_region(Halfspace(tuple(a), 1.0), 0.2)
    checks = [
        math.isclose(Psi[2], 5.0, rel_tol=1e-10),
        math.isclose(c1, 8 * math.log(5), rel_tol=1e-10),
        math.isclose(c2, 8.0, rel_tol=1e-10),
        math.isclose(eroded.offset, 1.0 + 0.2 * 5.0, rel_tol=1e-10),
    ]
    assert report(7, "hand-checkable numerics at 1e-10 relative", all(checks),
                  f"Psi_2 = {Psi[2]!r}, coefficients ({c1!r}, {c2!r}) vs ({8 * math.log(5)!r}, 8), "
                  f"halfspace offset {eroded.offset!r} vs 2.0")


def _in_tube_runs(model, center, rho0, P, T, rng, n):
    Lc = np.linalg.cholesky(np.linalg.inv(P))
    u = rng.normal(size=(n, model.n))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    u *= rng.uniform(0, 1, (n, 1)) ** (1 / model.n)
    x0 = center + rho0 * u @ Lc.T
    d = rng.uniform(model.dist_lo, model.dist_hi, (n, T, model.m))
    d[: n // 2] = np.where(rng.random((n // 2, T, model.m)) < 0.5, model.dist_lo, model.dist_hi)
    return simulate_batch(model, x0, d, T)


def _random_table(rng, nominal):
    """Regions placed near the nominal path so tube checks are not trivially false."""
    def near():
        return nominal[int(rng.integers(0, len(nominal))), :2] + rng.normal(0, 0.1, 2)
    ang = rng.uniform(0, 2 * np.pi)
    a = np.array([math.cos(ang), math.sin(ang)])
    return {
        "a": Disk(tuple(near()), float(rng.uniform(0.2, 0.8))),
        "b": Halfspace(tuple(a), float(a @ near() - rng.uniform(0, 0.5))),
        "c": DiskComplement(tuple(near() + rng.normal(0, 0.5, 2)), float(rng.uniform(0.05, 0.3))),
    }


def test_c8_tube_soundness(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(8)
    systems = []
    for name in ("double_integrator", "unicycle"):
        sc = load_scenario(SCENARIOS / f"{name}.yaml")
        systems.append((sc, erosion_pipeline(sc)))
    accepted = tried = bad = 0
    while accepted < 100 and tried < 20_000:
        tried += 1
        sc, spec = systems[tried % 2]
        f = random_formula(rng, 3, max_hi=20)
        h = horizon(f)
        if h > sc.T:
            continue
        center = rng.uniform(sc.x0_lo, sc.x0_hi)
        rho0 = float(rng.uniform(0.005, 0.05))
        tube = build_tube(sc.model, center, rho0, h, spec.lipschitz, spec.weight)
        table = _random_table(rng, tube.centers)
        if not tube_satisfies(f, table, tube):
            continue
        accepted += 1
        runs = _in_tube_runs(sc.model, center, rho0, spec.weight, h, rng, 1000)
        bad += int(np.sum(~np.asarray(eval_bool(f, table, runs))))
    dt = time.perf_counter() - t0
    ok = accepted == 100 and bad == 0 and dt < 120
    assert report(8, "tube soundness", ok,
                  f"{bad} violations over {accepted} satisfied tubes x 1e3 runs (need 100 tubes, 0 violations), "
                  f"{dt:.1f} s (need < 120 s)")
