"""Formula erosion and the probabilistic-to-deterministic reduction."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from itertools import product
from typing import TYPE_CHECKING, Mapping

import numpy as np

from .deviation import (
    LIPSCHITZ_SAFETY,
    bound_constant,
    induced_norm,
    lipschitz_estimate_sampling,
    optimize_epsilon,
    prs_radius,
    subgaussian_proxy,
    weight_search_linear,
    worst_case_radius,
)
from .geometry import Ball, Ellipsoid, EmptyRegion, Region, erode_region, effective_radius
from .stl import Formula, NegationError, Pred, horizon, is_negation_free, map_predicates, parse_formula, to_nnf
from .systems import SystemModel

if TYPE_CHECKING:
    from .scenario import Scenario

log = logging.getLogger(__name__)

NEG_SUFFIX = "__not"


@dataclass
class ErodedSpec:
    original: Formula
    formula: Formula
    table: dict[str, Region]
    deviation: Ball | Ellipsoid
    planar_radius: dict[str, float]
    empty: list[str]
    theta: float | None = None
    delta: float | None = None
    T: int | None = None
    weight: np.ndarray | None = field(default=None, repr=False)
    lipschitz: np.ndarray | None = field(default=None, repr=False)
    sigma2: np.ndarray | None = field(default=None, repr=False)
    eps: float | None = None
    r_tight: np.ndarray | None = field(default=None, repr=False)
    r_worst: np.ndarray | None = field(default=None, repr=False)
    bound: str = "tight"

    @property
    def guarantee(self) -> float | None:
        return None if self.delta is None else 1.0 - self.delta

    @property
    def radius(self) -> float:
        return float(getattr(self.deviation, "level", getattr(self.deviation, "radius", 0.0)))


def erode_formula(f: Formula, table: Mapping[str, Region], E: Ball | Ellipsoid | float) -> ErodedSpec:
    """Replace every predicate region by its erosion under ``E``.

    A negated predicate becomes a fresh predicate holding the eroded
    complement, so the returned formula has no negation flags at all.
    """
    if not is_negation_free(f):
        raise NegationError("erosion needs a negation-free formula; apply to_nnf first")
    out: dict[str, Region] = {}
    radius: dict[str, float] = {}

    def sub(p: Pred) -> Formula:
        if p.name not in table:
            raise KeyError(f"predicate {p.name!r} has no region")
        region = table[p.name]
        name = p.name
        if p.negated:
            region = region.complement()
            name = p.name + NEG_SUFFIX
        if name not in out:
            out[name] = erode_region(region, E)
            radius[name] = effective_radius(E, region.coords)
        return Pred(name)

    eroded = map_predicates(f, sub)
    empty = [k for k, r in out.items() if isinstance(r, EmptyRegion)]
    E = E if isinstance(E, (Ball, Ellipsoid)) else Ball(float(E), 2)
    return ErodedSpec(f, eroded, out, E, radius, empty)


def identity_table(f: Formula, table: Mapping[str, Region]) -> dict[str, Region]:
    """Table matching :func:`erode_formula` naming with zero erosion."""
    return erode_formula(f, table, 0.0).table


# ---------------------------------------------------------------------------
# Schedules for a model
# ---------------------------------------------------------------------------

def choose_weight(model: SystemModel, weight="auto") -> np.ndarray:
    if isinstance(weight, str):
        if weight == "identity" or (weight == "auto" and model.linear_part is None):
            return np.eye(model.n)
        if weight in ("auto", "search"):
            if model.linear_part is None:
                raise ValueError("weight search needs a linear model")
            return weight_search_linear(model.linear_part)
        raise ValueError(f"unknown weight choice {weight!r}")
    P = np.asarray(weight, dtype=float)
    if P.shape != (model.n, model.n):
        raise ValueError("weight matrix shape does not match the state dimension")
    return P


def lipschitz_schedule(model: SystemModel, T: int, P: np.ndarray, envelope=None, pairs: int = 10_000,
                       seed: int = 0, safety: float = LIPSCHITZ_SAFETY) -> np.ndarray:
    """``L_0 .. L_{T-1}`` in the ``P`` norm.

    Linear models use the exact induced norm. Otherwise each step is sampled
    over the box ``x_ref[t] +/- envelope``.
    """
    if model.linear_part is not None:
        return np.full(T, induced_norm(model.linear_part, P))
    if envelope is None or model.reference is None:
        raise ValueError("nonlinear models need a reference and a sampling envelope")
    env = np.broadcast_to(np.asarray(envelope, dtype=float), (model.n,))
    model.reference.require(T)
    out = np.empty(T)
    for t in range(T):
        c = model.reference.states[t]
        out[t] = lipschitz_estimate_sampling(model.step, c - env, c + env, model.dist_lo, model.dist_hi,
                                             t=t, pairs=pairs, seed=seed, P=P, safety=safety)
    return out


def disturbance_radius(model: SystemModel, P: np.ndarray) -> float:
    """``max_{d in D} ||G (d - d_c)||_P`` over the box corners (exact for affine entry)."""
    if model.disturbance_gain is None:
        raise ValueError("model has no affine disturbance input")
    half = 0.5 * (model.dist_hi - model.dist_lo)
    G = model.disturbance_gain
    best = 0.0
    for signs in product((-1.0, 1.0), repeat=model.m):
        v = G @ (np.asarray(signs) * half)
        best = max(best, float(np.sqrt(v @ P @ v)))
    return best


# ---------------------------------------------------------------------------
# Pipeline
# ---------------------------------------------------------------------------

def erosion_pipeline(sc: "Scenario") -> ErodedSpec:
    """Bound the stochastic fluctuation and erode the scenario formula by it."""
    if not 0.0 < sc.delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {sc.delta}")
    if sc.T < 1:
        raise ValueError("horizon T must be at least 1")
    original = parse_formula(sc.formula) if isinstance(sc.formula, str) else sc.formula
    f = to_nnf(original)
    h = horizon(f)
    if h > sc.T:
        raise ValueError(f"formula horizon {h} exceeds T = {sc.T}")
    model = sc.model
    theta = sc.delta / sc.T
    P = choose_weight(model, sc.weight)
    L = lipschitz_schedule(model, sc.T, P, sc.envelope, sc.lipschitz_pairs, sc.seed)
    s2 = np.full(sc.T, subgaussian_proxy(model.noise_cov, P))
    eps = optimize_epsilon(model.n, theta)
    r_tight = prs_radius(L, s2, model.n, theta, eps)
    r_worst = worst_case_radius(L, s2, model.n, sc.delta, sc.T, eps)
    radii = r_worst if sc.bound == "worst" else r_tight
    E = Ellipsoid(P, float(radii.max()))
    spec = erode_formula(f, sc.table, E)
    for name in spec.empty:
        log.warning("eroded predicate %s is empty (planar erosion radius %.4g)", name, spec.planar_radius[name])
    spec.original = original
    spec.theta, spec.delta, spec.T = theta, sc.delta, sc.T
    spec.weight, spec.lipschitz, spec.sigma2, spec.eps = P, L, s2, eps
    spec.r_tight, spec.r_worst, spec.bound = r_tight, r_worst, sc.bound
    return spec


def bound_report(spec: ErodedSpec) -> str:
    rt, rw = float(spec.r_tight.max()), float(spec.r_worst.max())
    lines = [
        f"horizon T            {spec.T}",
        f"delta                {spec.delta:.6g}",
        f"theta = delta/T      {spec.theta:.6g}",
        f"epsilon*             {spec.eps:.6f}",
        f"bound constant       {bound_constant(spec.weight.shape[0], spec.theta, spec.eps):.6f}",
        f"Lipschitz range      [{spec.lipschitz.min():.6f}, {spec.lipschitz.max():.6f}]",
        f"variance proxy       {spec.sigma2.max():.6g}",
        f"max r_tight          {rt:.6f}",
        f"max r_worst          {rw:.6f}",
        f"ratio worst/tight    {rw / rt if rt > 0 else float('nan'):.4f}",
        f"erosion bound        {spec.bound}",
    ]
    for name in sorted(spec.planar_radius):
        flag = "  EMPTY" if name in spec.empty else ""
        lines.append(f"planar radius {name:<8s} {spec.planar_radius[name]:.6f}{flag}")
    return "\n".join(lines) + "\n"
