"""YAML scenario files.

A scenario names a built-in system with its parameters, a formula with
tagged region records, and the verification settings. See
``scenarios/double_integrator.yaml`` for the layout.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .geometry import (
    ConvexPolygon,
    Disk,
    DiskComplement,
    Ellipse,
    EllipseComplement,
    EmptyRegion,
    Halfspace,
    PolygonComplement,
    Region,
    regular_polygon,
)
from .stl import horizon, parse_formula, predicates
from .systems import (
    DI_FIELDS,
    DI_GAIN,
    UNICYCLE_FIELDS,
    SystemModel,
    double_integrator_closed_loop,
    load_reference,
    unicycle_closed_loop,
)


class ScenarioError(ValueError):
    pass


@dataclass
class Scenario:
    name: str
    model: SystemModel
    x0_lo: np.ndarray
    x0_hi: np.ndarray
    formula: str
    table: dict[str, Region]
    T: int
    delta: float
    bound: str = "tight"
    weight: Any = "auto"
    envelope: np.ndarray | None = None
    lipschitz_pairs: int = 10_000
    seed: int = 0
    rho0: float = 0.05
    cover_cap: int = 100_000
    budget: int = 100_000
    trials: int = 100_000
    divergence_cap: float = 1e3
    out_dir: Path | None = None
    raw: dict = field(default_factory=dict, repr=False)

    def with_(self, **kw) -> "Scenario":
        return replace(self, **kw)


# ---------------------------------------------------------------------------
# Region records
# ---------------------------------------------------------------------------

def _coords(rec: dict) -> tuple[int, int]:
    c = tuple(int(v) for v in rec.get("coords", (0, 1)))
    if len(c) != 2:
        raise ScenarioError("regions are planar: coords needs two indices")
    return c


def _pairs(vs) -> tuple[tuple[float, float], ...]:
    return tuple((float(a), float(b)) for a, b in vs)


def region_from_record(rec: dict) -> Region:
    if not isinstance(rec, dict) or "type" not in rec:
        raise ScenarioError(f"region record needs a 'type' tag: {rec!r}")
    kind = rec["type"]
    c = _coords(rec)
    try:
        if kind in ("disk", "disk_complement"):
            cls = Disk if kind == "disk" else DiskComplement
            return cls(tuple(map(float, rec["center"])), float(rec["radius"]), c)
        if kind == "halfspace":
            return Halfspace(tuple(map(float, rec["normal"])), float(rec["offset"]), c)
        if kind in ("polygon", "polygon_complement"):
            cls = ConvexPolygon if kind == "polygon" else PolygonComplement
            return cls(_pairs(rec["vertices"]), c)
        if kind in ("regular_polygon", "regular_polygon_complement"):
            v = regular_polygon(rec["center"], float(rec["circumradius"]), int(rec.get("sides", 6)),
                                float(rec.get("rotation", 0.0)))
            cls = ConvexPolygon if kind == "regular_polygon" else PolygonComplement
            return cls(v, c)
        if kind in ("ellipse", "ellipse_complement"):
            cls = Ellipse if kind == "ellipse" else EllipseComplement
            return cls(tuple(map(float, rec["center"])), tuple(tuple(map(float, r)) for r in rec["shape"]),
                       float(rec.get("level", 1.0)), c)
        if kind == "empty":
            return EmptyRegion(c)
    except KeyError as exc:
        raise ScenarioError(f"region {kind!r} is missing field {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"region {kind!r}: {exc}") from None
    raise ScenarioError(f"unknown region type {kind!r}")


def region_to_record(r: Region) -> dict:
    c = [int(v) for v in r.coords]
    if isinstance(r, EmptyRegion):
        return {"type": "empty", "coords": c}
    if isinstance(r, (Disk, DiskComplement)):
        kind = "disk" if isinstance(r, Disk) else "disk_complement"
        return {"type": kind, "center": [float(v) for v in r.center], "radius": float(r.radius), "coords": c}
    if isinstance(r, Halfspace):
        return {"type": "halfspace", "normal": [float(v) for v in r.normal], "offset": float(r.offset), "coords": c}
    if isinstance(r, (ConvexPolygon, PolygonComplement)):
        kind = "polygon" if isinstance(r, ConvexPolygon) else "polygon_complement"
        return {"type": kind, "vertices": [[float(a), float(b)] for a, b in r.vertices], "coords": c}
    if isinstance(r, (Ellipse, EllipseComplement)):
        kind = "ellipse" if isinstance(r, Ellipse) else "ellipse_complement"
        return {"type": kind, "center": [float(v) for v in r.center],
                "shape": [[float(v) for v in row] for row in r.shape], "level": float(r.level), "coords": c}
    raise ScenarioError(f"cannot serialise {type(r).__name__}")


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------

def _vec(v, n: int, what: str) -> np.ndarray:
    a = np.asarray(v, dtype=float).reshape(-1)
    if a.shape != (n,) or not np.all(np.isfinite(a)):
        raise ScenarioError(f"{what} needs {n} finite numbers")
    return a


def _noise(v, n: int) -> np.ndarray:
    a = np.asarray(v, dtype=float)
    if a.ndim == 0:
        return float(a) * np.eye(n)
    if a.shape == (n,):
        return np.diag(a)
    if a.shape == (n, n):
        return a
    raise ScenarioError(f"noise_cov must be a scalar, a length-{n} diagonal or an {n}x{n} matrix")


def _build_model(sys: dict, base: Path) -> SystemModel:
    name = sys.get("model")
    ref_path = sys.get("reference")
    if ref_path is None:
        raise ScenarioError("system block needs a reference file")
    ref_path = (base / ref_path) if not Path(ref_path).is_absolute() else Path(ref_path)
    dist = sys.get("disturbance", {})
    if name == "double_integrator":
        ref = load_reference(ref_path, DI_FIELDS, 4)
        dt = float(sys.get("dt", 0.01))
        return double_integrator_closed_loop(
            ref, dt=dt, mass=float(sys.get("mass", 0.1)), gain=sys.get("gain", DI_GAIN),
            noise_cov=_noise(sys.get("noise_cov", dt * 0.04), 4),
            dist_lo=_vec(dist.get("lo", (-0.1, -0.1)), 2, "disturbance lo"),
            dist_hi=_vec(dist.get("hi", (0.1, 0.1)), 2, "disturbance hi"))
    if name == "unicycle":
        ref = load_reference(ref_path, UNICYCLE_FIELDS, 3)
        dt = float(sys.get("dt", 0.05))
        return unicycle_closed_loop(
            ref, dt=dt, gains=tuple(sys.get("gains", (2.0, 2.0, 2.0))),
            noise_cov=_noise(sys.get("noise_cov", dt * 0.001), 3),
            dist_lo=_vec(dist.get("lo", (-0.02,)), 1, "disturbance lo"),
            dist_hi=_vec(dist.get("hi", (0.02,)), 1, "disturbance hi"))
    raise ScenarioError(f"unknown system model {name!r}")


def scenario_from_dict(raw: dict, base: Path | str = ".") -> Scenario:
    base = Path(base)
    try:
        sys, spec = raw["system"], raw["spec"]
    except (KeyError, TypeError):
        raise ScenarioError("scenario needs 'system' and 'spec' blocks") from None
    dev = raw.get("deviation", {}) or {}
    ver = raw.get("verify", {}) or {}
    out = raw.get("output", {}) or {}
    try:
        model = _build_model(sys, base)
    except (ValueError, OSError) as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(str(exc)) from None
    x0 = sys.get("initial_set")
    if not isinstance(x0, dict):
        raise ScenarioError("system block needs initial_set with lo and hi")
    x0_lo = _vec(x0.get("lo"), model.n, "initial_set lo")
    x0_hi = _vec(x0.get("hi"), model.n, "initial_set hi")
    if np.any(x0_hi < x0_lo):
        raise ScenarioError("initial_set lo exceeds hi")

    text = spec.get("formula")
    if not isinstance(text, str):
        raise ScenarioError("spec block needs a formula string")
    f = parse_formula(text)
    table = {k: region_from_record(v) for k, v in (spec.get("predicates") or {}).items()}
    missing = sorted({p.name for p in predicates(f)} - set(table))
    if missing:
        raise ScenarioError(f"undefined predicates: {', '.join(missing)}")
    T = int(spec.get("T", 0))
    delta = float(spec.get("delta", 0))
    if T < 1:
        raise ScenarioError("T must be at least 1")
    if not 0 < delta < 1:
        raise ScenarioError("delta must lie in (0, 1)")
    if horizon(f) > T:
        raise ScenarioError(f"formula horizon {horizon(f)} exceeds T = {T}")
    if len(model.reference) < T + 1:
        raise ScenarioError(f"reference has {len(model.reference)} rows, need {T + 1}")
    bound = spec.get("bound", "tight")
    if bound not in ("tight", "worst"):
        raise ScenarioError("bound must be 'tight' or 'worst'")
    weight = dev.get("weight", "auto")
    if not isinstance(weight, str):
        weight = np.asarray(weight, dtype=float)
    env = dev.get("envelope")
    sc = Scenario(
        name=str(raw.get("name", sys.get("model"))), model=model, x0_lo=x0_lo, x0_hi=x0_hi,
        formula=text, table=table, T=T, delta=delta, bound=bound, weight=weight,
        envelope=None if env is None else _vec(env, model.n, "envelope"),
        lipschitz_pairs=int(dev.get("lipschitz_pairs", 10_000)),
        seed=int(ver.get("seed", 0)), rho0=float(ver.get("rho0", 0.05)),
        cover_cap=int(ver.get("cover_cap", 100_000)), budget=int(ver.get("budget", 100_000)),
        trials=int(ver.get("trials", 100_000)), divergence_cap=float(ver.get("divergence_cap", 1e3)),
        out_dir=(base / out["dir"]) if "dir" in out else None, raw=copy.deepcopy(raw))
    if sc.rho0 <= 0:
        raise ScenarioError("rho0 must be positive")
    return sc


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ScenarioError(f"cannot read {path}: {exc.strerror}") from None
    except yaml.YAMLError as exc:
        raise ScenarioError(f"{path}: invalid YAML: {exc}") from None
    if not isinstance(raw, dict):
        raise ScenarioError(f"{path}: top level must be a mapping")
    return scenario_from_dict(raw, path.parent)


def eroded_scenario_dict(sc: Scenario, formula_text: str, table: dict[str, Region]) -> dict:
    """Copy of the raw scenario with the formula and regions replaced."""
    raw = copy.deepcopy(sc.raw)
    raw.setdefault("spec", {})
    raw["spec"]["formula"] = formula_text
    raw["spec"]["predicates"] = {k: region_to_record(v) for k, v in table.items()}
    return raw
