"""Deterministic verification by reach tubes, falsification, Monte Carlo."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Mapping

import numpy as np
from scipy.stats import beta

from .erosion import ErodedSpec, disturbance_radius
from .geometry import Region
from .stl import (
    Formula,
    HorizonError,
    Pred,
    boolean_signal,
    eval_bool,
    horizon,
    predicates,
    quantitative_signal,
    robustness_signal,
)
from .systems import SystemModel, draw_inputs, simulate_batch

if TYPE_CHECKING:
    from .scenario import Scenario

VERIFIED, FALSIFIED, UNKNOWN = "Verified", "Falsified", "Unknown"
EXIT_CODES = {VERIFIED: 0, FALSIFIED: 1, UNKNOWN: 3}


class CoverError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Initial-set cover
# ---------------------------------------------------------------------------

def cover_initial_set(lo, hi, rho0: float, P=None, cap: int = 100_000) -> np.ndarray:
    """Grid centers such that every point of the box is within ``rho0`` (P-norm) of one."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if rho0 <= 0:
        raise ValueError("cover radius must be positive")
    if lo.shape != hi.shape or np.any(hi < lo):
        raise ValueError("invalid initial box")
    n = len(lo)
    P = np.eye(n) if P is None else np.asarray(P, dtype=float)
    width = hi - lo
    live = np.flatnonzero(width > 0)
    if len(live) == 0:
        return lo[None].copy()
    # ||e||_P <= sqrt(lam_max(P_live)) ||e||_2 and ||e||_2 <= sqrt(k) max|e_i|
    lam = np.linalg.eigvalsh(P[np.ix_(live, live)])[-1]
    half = rho0 / math.sqrt(lam * len(live))
    counts = np.ones(n, dtype=int)
    counts[live] = np.ceil(width[live] / (2 * half) - 1e-12).astype(int)
    total = int(np.prod(counts.astype(float)))
    if total > cap:
        raise CoverError(f"cover needs {total} centers (cap {cap}); raise rho0")
    axes = [lo[i] + (np.arange(counts[i]) + 0.5) * width[i] / counts[i] for i in range(n)]
    grid = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.reshape(-1) for g in grid], axis=1)


# ---------------------------------------------------------------------------
# Reach tubes
# ---------------------------------------------------------------------------

@dataclass
class ReachTube:
    centers: np.ndarray      # (..., T+1, n)
    radii: np.ndarray        # (T+1,), P-norm
    weight: np.ndarray = field(repr=False)
    x0: np.ndarray | None = None
    d_nominal: np.ndarray | None = None
    divergent: bool = False

    @property
    def T(self) -> int:
        return len(self.radii) - 1


def tube_radii(L, rho0: float, dist_rad: float, cap: float = math.inf) -> tuple[np.ndarray, bool]:
    """``rho_{t+1} = L_t rho_t + dist_rad``; flags divergence past ``cap``."""
    L = np.asarray(L, dtype=float)
    rho = np.empty(len(L) + 1)
    rho[0] = rho0
    for t, l in enumerate(L):
        rho[t + 1] = l * rho[t] + dist_rad
    return rho, bool(np.any(rho > cap) or not np.all(np.isfinite(rho)))


def build_tube(model: SystemModel, center, rho0: float, T: int, L, P, cap: float = 1e3) -> ReachTube:
    """Tube(s) around the nominal runs from ``center`` (one state or a batch) with d at the box center."""
    P = np.asarray(P, dtype=float)
    L = np.asarray(L, dtype=float)
    if len(L) < T:
        raise ValueError("Lipschitz schedule shorter than the horizon")
    c = np.atleast_2d(np.asarray(center, dtype=float))
    d0 = model.dist_center
    nominal = simulate_batch(model, c, np.broadcast_to(d0, (len(c), T, model.m)).copy(), T)
    radii, div = tube_radii(L[:T], rho0, disturbance_radius(model, P), cap)
    centers = nominal[0] if np.ndim(center) == 1 else nominal
    return ReachTube(centers, radii, P, c[0] if np.ndim(center) == 1 else c, d0, div)


def _planar_scale(P: np.ndarray, coords) -> float:
    S = np.linalg.inv(P)[np.ix_(list(coords), list(coords))]
    return math.sqrt(np.linalg.eigvalsh(0.5 * (S + S.T))[-1])


def _tube_scores(f: Formula, table: Mapping[str, Region], tube: ReachTube):
    """Per-predicate margins ``sd(center_t) - planar radius of the P-ball rho_t``."""
    cache: dict[Pred, np.ndarray] = {}

    def score(p):
        if p is None:
            return np.zeros(tube.centers.shape[:-1])
        if p not in cache:
            region = table[p.name].complement() if p.negated else table[p.name]
            pts = tube.centers[..., list(region.coords)]
            q = tube.radii * _planar_scale(tube.weight, region.coords)
            cache[p] = np.asarray(region.signed_distance(pts), dtype=float) - q
        return cache[p]

    return score


def _check(f: Formula, tube: ReachTube, t: int) -> None:
    if t < 0 or t + horizon(f) > tube.T:
        raise HorizonError(f"tube of length {tube.T} cannot decide a horizon-{horizon(f)} formula at t={t}")


def tube_satisfies(f: Formula, table: Mapping[str, Region], tube: ReachTube, t: int = 0):
    """True only if every trajectory inside the tube satisfies ``f`` at ``t``."""
    _check(f, tube, t)
    score = _tube_scores(f, table, tube)
    out = boolean_signal(f, lambda p: score(p) >= 0)[..., t]
    return bool(out) if out.ndim == 0 else out


def tube_margin(f: Formula, table: Mapping[str, Region], tube: ReachTube, t: int = 0):
    """Robustness of ``f`` with every predicate tightened by the tube radius."""
    _check(f, tube, t)
    out = quantitative_signal(f, _tube_scores(f, table, tube))[..., t]
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# Verdicts
# ---------------------------------------------------------------------------

@dataclass
class Counterexample:
    x0: np.ndarray
    d_seq: np.ndarray
    trajectory: np.ndarray
    violation_time: int
    index: int


@dataclass
class Verdict:
    outcome: str
    margin: float
    cover_size: int
    tubes_checked: int
    divergent: int = 0
    counterexample: Counterexample | None = None
    samples_tried: int = 0

    @property
    def exit_code(self) -> int:
        return EXIT_CODES[self.outcome]


def critical_time(f: Formula, table: Mapping[str, Region], traj: np.ndarray) -> int:
    """First step where some predicate score equals the formula's robustness.

    For a violated formula this is the earliest step at which a predicate
    realises the negative margin.
    """
    traj = np.asarray(traj, dtype=float)
    value = robustness_signal(f, table, traj)[0]
    best = traj.shape[0]
    for p in predicates(f):
        region = table[p.name].complement() if p.negated else table[p.name]
        s = np.asarray(region.signed_distance(traj[:, list(region.coords)]), dtype=float)
        hit = np.flatnonzero(s == value)
        if len(hit):
            best = min(best, int(hit[0]))
    return 0 if best == traj.shape[0] else best


def falsify(sc: "Scenario", spec: ErodedSpec, budget: int | None = None, seed: int | None = None,
            chunk: int = 1000) -> Counterexample | None:
    """Random search for a deterministic run violating the eroded formula."""
    budget = sc.budget if budget is None else budget
    seed = sc.seed if seed is None else seed
    if budget < 1:
        raise ValueError("falsification budget must be at least 1")
    model, T = sc.model, sc.T
    for start in range(0, budget, chunk):
        count = min(chunk, budget - start)
        dr = draw_inputs(model, sc.x0_lo, sc.x0_hi, T, seed, start, count, noise=False)
        traj = simulate_batch(model, dr.x0, dr.d_seq, T)
        ok = np.asarray(eval_bool(spec.formula, spec.table, traj))
        bad = np.flatnonzero(~ok.reshape(-1))
        if len(bad):
            j = int(bad[0])
            return Counterexample(dr.x0[j], dr.d_seq[j], traj[j],
                                  critical_time(spec.formula, spec.table, traj[j]), start + j)
    return None


def replay(model: SystemModel, cex: Counterexample) -> np.ndarray:
    return simulate_batch(model, cex.x0[None], cex.d_seq[None], len(cex.d_seq))[0]


def verify_deterministic(sc: "Scenario", spec: ErodedSpec, budget: int | None = None,
                         seed: int | None = None) -> Verdict:
    centers = cover_initial_set(sc.x0_lo, sc.x0_hi, sc.rho0, spec.weight, sc.cover_cap)
    tubes = build_tube(sc.model, centers, sc.rho0, sc.T, spec.lipschitz, spec.weight, sc.divergence_cap)
    n = len(centers)
    if tubes.divergent:
        ok = np.zeros(n, dtype=bool)
        margin = -math.inf
    else:
        ok = np.atleast_1d(tube_satisfies(spec.formula, spec.table, tubes))
        margin = float(np.min(tube_margin(spec.formula, spec.table, tubes)))
    if ok.all():
        return Verdict(VERIFIED, margin, n, n)
    cex = falsify(sc, spec, budget, seed)
    tried = sc.budget if budget is None else budget
    div = n if tubes.divergent else 0
    if cex is not None:
        return Verdict(FALSIFIED, margin, n, n, div, cex, cex.index + 1)
    return Verdict(UNKNOWN, margin, n, n, div, None, tried)


# ---------------------------------------------------------------------------
# Monte Carlo
# ---------------------------------------------------------------------------

@dataclass
class SatisfactionEstimate:
    trials: int
    successes: int
    rate: float
    lower: float
    confidence: float = 0.99

    @property
    def violations(self) -> int:
        return self.trials - self.successes


def clopper_pearson_lower(successes: int, trials: int, confidence: float = 0.99) -> float:
    if successes == 0:
        return 0.0
    return float(beta.ppf(1.0 - confidence, successes, trials - successes + 1))


def monte_carlo_estimate(sc: "Scenario", f: Formula, table: Mapping[str, Region], N: int | None = None,
                         seed: int | None = None, stochastic: bool = True, chunk: int = 2000,
                         workers: int = 1, keep: int = 0) -> tuple[SatisfactionEstimate, np.ndarray]:
    """Satisfaction rate of ``f`` over ``N`` sampled runs.

    Returns the estimate and the first ``keep`` trajectories. Counts are
    summed over index-ordered chunks, so ``workers`` does not change them.
    """
    N = sc.trials if N is None else N
    seed = sc.seed if seed is None else seed
    if N < 1:
        raise ValueError("need at least one trial")
    model, T = sc.model, sc.T

    def run(start):
        count = min(chunk, N - start)
        dr = draw_inputs(model, sc.x0_lo, sc.x0_hi, T, seed, start, count, noise=stochastic)
        traj = simulate_batch(model, dr.x0, dr.d_seq, T, dr.noise if stochastic else None)
        ok = np.asarray(eval_bool(f, table, traj)).reshape(-1)
        return int(ok.sum()), traj[: max(0, keep - start)]

    starts = list(range(0, N, chunk))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(run, starts))
    else:
        parts = [run(s) for s in starts]
    k = sum(p[0] for p in parts)
    kept = np.concatenate([p[1] for p in parts], axis=0) if keep else np.zeros((0, T + 1, model.n))
    est = SatisfactionEstimate(N, k, k / N, clopper_pearson_lower(k, N))
    return est, kept[:keep]
