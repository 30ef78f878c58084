"""Planar predicate regions, signed distances and erosion by deviation sets.

Every region is a closed set; points on the boundary count as inside. Regions
carry ``coords``, the state indices they constrain.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

Coords = tuple[int, ...]


class RegionError(ValueError):
    pass


def _pts(region: "Region", p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.shape[-1:] != (region.dim,):
        raise RegionError(f"point dimension {p.shape[-1:]} does not match region dimension {region.dim}")
    return p


def _result(x):
    x = np.asarray(x)
    return x.item() if x.ndim == 0 else x


class Region:
    coords: Coords

    @property
    def dim(self) -> int:
        return len(self.coords)

    @property
    def is_empty(self) -> bool:
        return False

    def contains(self, p):
        raise NotImplementedError

    def signed_distance(self, p):
        raise NotImplementedError

    def complement(self) -> "Region":
        raise NotImplementedError

    def erode(self, rho: float) -> "Region":
        raise NotImplementedError


def _check_rho(rho: float) -> float:
    rho = float(rho)
    if not rho >= 0:
        raise RegionError(f"erosion radius must be nonnegative, got {rho}")
    return rho


@dataclass(frozen=True)
class EmptyRegion(Region):
    """Result of an erosion that removed the whole region."""

    coords: Coords = (0, 1)

    @property
    def is_empty(self) -> bool:
        return True

    def contains(self, p):
        p = _pts(self, p)
        return _result(np.zeros(p.shape[:-1], dtype=bool))

    def signed_distance(self, p):
        p = _pts(self, p)
        return _result(np.full(p.shape[:-1], -np.inf))

    def erode(self, rho: float) -> Region:
        return self

    def complement(self) -> Region:
        raise RegionError("complement of an empty region is not representable")


@dataclass(frozen=True)
class Disk(Region):
    center: tuple[float, ...]
    radius: float
    coords: Coords = (0, 1)

    def __post_init__(self):
        if not self.radius >= 0:
            raise RegionError("disk radius must be nonnegative")
        if len(self.center) != len(self.coords):
            raise RegionError("center dimension does not match coords")

    def contains(self, p):
        d = _pts(self, p) - np.asarray(self.center)
        return _result(np.einsum("...i,...i->...", d, d) <= self.radius**2)

    def signed_distance(self, p):
        d = _pts(self, p) - np.asarray(self.center)
        return _result(self.radius - np.linalg.norm(d, axis=-1))

    def complement(self) -> Region:
        return DiskComplement(self.center, self.radius, self.coords)

    def erode(self, rho: float) -> Region:
        rho = _check_rho(rho)
        if self.radius - rho < 0:
            return EmptyRegion(self.coords)
        return Disk(self.center, self.radius - rho, self.coords)


@dataclass(frozen=True)
class DiskComplement(Region):
    center: tuple[float, ...]
    radius: float
    coords: Coords = (0, 1)

    def __post_init__(self):
        if not self.radius >= 0:
            raise RegionError("disk radius must be nonnegative")
        if len(self.center) != len(self.coords):
            raise RegionError("center dimension does not match coords")

    def contains(self, p):
        d = _pts(self, p) - np.asarray(self.center)
        return _result(np.einsum("...i,...i->...", d, d) >= self.radius**2)

    def signed_distance(self, p):
        d = _pts(self, p) - np.asarray(self.center)
        return _result(np.linalg.norm(d, axis=-1) - self.radius)

    def complement(self) -> Region:
        return Disk(self.center, self.radius, self.coords)

    def erode(self, rho: float) -> Region:
        return DiskComplement(self.center, self.radius + _check_rho(rho), self.coords)


@dataclass(frozen=True)
class Halfspace(Region):
    """The set ``normal . p >= offset``."""

    normal: tuple[float, ...]
    offset: float
    coords: Coords = (0, 1)

    def __post_init__(self):
        if len(self.normal) != len(self.coords):
            raise RegionError("normal dimension does not match coords")
        if not np.any(np.asarray(self.normal) != 0):
            raise RegionError("halfspace normal must be nonzero")

    def contains(self, p):
        return _result(_pts(self, p) @ np.asarray(self.normal) >= self.offset)

    def signed_distance(self, p):
        a = np.asarray(self.normal)
        return _result((_pts(self, p) @ a - self.offset) / np.linalg.norm(a))

    def complement(self) -> Region:
        return Halfspace(tuple(-x for x in self.normal), -self.offset, self.coords)

    def erode(self, rho: float) -> Region:
        rho = _check_rho(rho)
        norm = float(np.linalg.norm(self.normal))
        return Halfspace(self.normal, self.offset + rho * norm, self.coords)


# ---------------------------------------------------------------------------
# Convex polygons
# ---------------------------------------------------------------------------

def _edges(vertices: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Inward unit normals and offsets: polygon = {p : n_i . p >= b_i}."""
    v0 = vertices
    v1 = np.roll(vertices, -1, axis=0)
    e = v1 - v0
    n = np.stack([-e[:, 1], e[:, 0]], axis=1)
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    b = np.einsum("ij,ij->i", n, v0)
    return n, b


def _validate_polygon(vertices) -> np.ndarray:
    v = np.asarray(vertices, dtype=float)
    if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
        raise RegionError("polygon needs at least three planar vertices")
    e0 = np.roll(v, -1, axis=0) - v
    e1 = np.roll(e0, -1, axis=0)
    cross = e0[:, 0] * e1[:, 1] - e0[:, 1] * e1[:, 0]
    if not np.all(cross > 0):
        raise RegionError("polygon vertices must be strictly convex and counterclockwise")
    return v


def _segment_distance(p: np.ndarray, v: np.ndarray) -> np.ndarray:
    a = v[None, :, :]
    b = np.roll(v, -1, axis=0)[None, :, :]
    q = p.reshape(-1, 1, 2)
    ab = b - a
    s = np.clip(np.einsum("kij,kij->ki", q - a, ab) / np.einsum("kij,kij->ki", ab, ab), 0.0, 1.0)
    closest = a + s[..., None] * ab
    d = np.linalg.norm(q - closest, axis=-1).min(axis=1)
    return d.reshape(p.shape[:-1])


def _polygon_sd(v: np.ndarray, p: np.ndarray) -> np.ndarray:
    n, b = _edges(v)
    slack = p @ n.T - b
    inside = np.all(slack >= 0, axis=-1)
    return np.where(inside, slack.min(axis=-1), -_segment_distance(p, v))


def clip_halfplanes(normals: np.ndarray, offsets: np.ndarray, bound: float = 1e6) -> np.ndarray:
    """Vertices (CCW) of {p : normals @ p >= offsets}; empty array when empty."""
    poly = np.array([[-bound, -bound], [bound, -bound], [bound, bound], [-bound, bound]])
    for n, b in zip(normals, offsets):
        if len(poly) == 0:
            break
        s = poly @ n - b
        out = []
        for i in range(len(poly)):
            j = (i + 1) % len(poly)
            if s[i] >= 0:
                out.append(poly[i])
            if (s[i] >= 0) != (s[j] >= 0):
                lam = s[i] / (s[i] - s[j])
                out.append(poly[i] + lam * (poly[j] - poly[i]))
        poly = np.array(out) if out else np.zeros((0, 2))
    return _dedupe(poly)


def _dedupe(poly: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    if len(poly) == 0:
        return poly
    keep = [poly[0]]
    for q in poly[1:]:
        if np.linalg.norm(q - keep[-1]) > tol:
            keep.append(q)
    if len(keep) > 1 and np.linalg.norm(keep[0] - keep[-1]) <= tol:
        keep.pop()
    out = np.array(keep)
    # drop collinear vertices so the result is strictly convex
    while len(out) >= 3:
        e0 = np.roll(out, -1, axis=0) - out
        e1 = np.roll(e0, -1, axis=0)
        cross = e0[:, 0] * e1[:, 1] - e0[:, 1] * e1[:, 0]
        bad = np.flatnonzero(cross <= tol)
        if len(bad) == 0:
            break
        out = np.delete(out, (bad[0] + 1) % len(out), axis=0)
    return out if len(out) >= 3 else np.zeros((0, 2))


@dataclass(frozen=True)
class ConvexPolygon(Region):
    vertices: tuple[tuple[float, float], ...]
    coords: Coords = (0, 1)

    def __post_init__(self):
        _validate_polygon(self.vertices)
        if len(self.coords) != 2:
            raise RegionError("polygons are planar")

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.vertices, dtype=float)

    def contains(self, p):
        n, b = _edges(self.array)
        return _result(np.all(_pts(self, p) @ n.T - b >= 0, axis=-1))

    def signed_distance(self, p):
        return _result(_polygon_sd(self.array, _pts(self, p)))

    def complement(self) -> Region:
        return PolygonComplement(self.vertices, self.coords)

    def erode(self, rho: float) -> Region:
        rho = _check_rho(rho)
        if rho == 0:
            return self
        n, b = _edges(self.array)
        v = clip_halfplanes(n, b + rho)
        if len(v) == 0:
            return EmptyRegion(self.coords)
        return ConvexPolygon(_as_tuple(v), self.coords)


@dataclass(frozen=True)
class PolygonComplement(Region):
    """Closed complement of the interior of a convex polygon."""

    vertices: tuple[tuple[float, float], ...]
    coords: Coords = (0, 1)

    def __post_init__(self):
        _validate_polygon(self.vertices)
        if len(self.coords) != 2:
            raise RegionError("polygons are planar")

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.vertices, dtype=float)

    def contains(self, p):
        n, b = _edges(self.array)
        return _result(np.any(_pts(self, p) @ n.T - b <= 0, axis=-1))

    def signed_distance(self, p):
        return _result(-_polygon_sd(self.array, _pts(self, p)))

    def complement(self) -> Region:
        return ConvexPolygon(self.vertices, self.coords)

    def erode(self, rho: float) -> Region:
        # sharp-corner outward offset contains the rounded dilation
        rho = _check_rho(rho)
        if rho == 0:
            return self
        n, b = _edges(self.array)
        v = clip_halfplanes(n, b - rho)
        return PolygonComplement(_as_tuple(v), self.coords)


def _as_tuple(v: np.ndarray) -> tuple[tuple[float, float], ...]:
    return tuple((float(x), float(y)) for x, y in v)


def regular_polygon(center: Sequence[float], circumradius: float, sides: int = 6,
                    rotation: float = 0.0) -> tuple[tuple[float, float], ...]:
    """CCW vertices of a regular polygon inscribed in a circle.

    ``rotation=0`` puts a vertex on the +x axis, which for a hexagon gives a
    flat top and bottom.
    """
    ang = rotation + 2 * np.pi * np.arange(sides) / sides
    cx, cy = center
    return tuple((cx + circumradius * math.cos(a), cy + circumradius * math.sin(a)) for a in ang)


# ---------------------------------------------------------------------------
# Ellipses
# ---------------------------------------------------------------------------

def _check_spd(m: np.ndarray, what: str) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise RegionError(f"{what} must be square")
    if not np.allclose(m, m.T, rtol=1e-10, atol=1e-12):
        raise RegionError(f"{what} must be symmetric")
    try:
        np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        raise RegionError(f"{what} must be positive definite") from None
    return m


def _ellipse_point_distance(e0: float, e1: float, y0: float, y1: float) -> float:
    """Distance from (y0, y1), y >= 0, to the ellipse with semi-axes e0 >= e1."""
    if y1 > 0:
        if y0 > 0:
            z0, z1 = y0 / e0, y1 / e1
            g = z0 * z0 + z1 * z1 - 1
            if g == 0:
                return 0.0
            r0 = (e0 / e1) ** 2
            n0 = r0 * z0
            s0, s1 = z1 - 1, (math.hypot(n0, z1) - 1 if g >= 0 else 0.0)
            s = 0.0
            for _ in range(200):
                s = 0.5 * (s0 + s1)
                if s == s0 or s == s1:
                    break
                ratio0 = n0 / (s + r0)
                ratio1 = z1 / (s + 1)
                gs = ratio0 * ratio0 + ratio1 * ratio1 - 1
                if gs > 0:
                    s0 = s
                elif gs < 0:
                    s1 = s
                else:
                    break
            x0 = r0 * y0 / (s + r0)
            x1 = y1 / (s + 1)
            return math.hypot(x0 - y0, x1 - y1)
        return abs(y1 - e1)
    num = e0 * y0
    den = e0 * e0 - e1 * e1
    if num < den:
        x0 = e0 * num / den
        x1 = e1 * math.sqrt(max(0.0, 1 - (x0 / e0) ** 2))
        return math.hypot(x0 - y0, x1)
    return abs(y0 - e0)


@dataclass(frozen=True)
class Ellipse(Region):
    """``{p : (p - c)^T S^{-1} (p - c) <= level^2}``."""

    center: tuple[float, ...]
    shape: tuple[tuple[float, ...], ...]
    level: float
    coords: Coords = (0, 1)

    def __post_init__(self):
        _check_spd(np.asarray(self.shape), "ellipse shape matrix")
        if not self.level >= 0:
            raise RegionError("ellipse level must be nonnegative")
        if len(self.center) != len(self.coords) or len(self.shape) != len(self.coords):
            raise RegionError("ellipse dimension does not match coords")

    @property
    def S(self) -> np.ndarray:
        return np.asarray(self.shape, dtype=float)

    def _q(self, p) -> np.ndarray:
        d = _pts(self, p) - np.asarray(self.center)
        return np.sqrt(np.einsum("...i,ij,...j->...", d, np.linalg.inv(self.S), d))

    def semi_axes(self) -> np.ndarray:
        return self.level * np.sqrt(np.linalg.eigvalsh(self.S))

    def contains(self, p):
        return _result(self._q(p) <= self.level)

    def signed_distance(self, p):
        p = _pts(self, p)
        if self.dim != 2:
            raise RegionError("signed distance is implemented for planar ellipses")
        lam, vec = np.linalg.eigh(self.S)
        e1, e0 = self.level * np.sqrt(lam)
        local = (p - np.asarray(self.center)) @ vec
        flat = np.abs(local.reshape(-1, 2))
        dist = np.array([_ellipse_point_distance(e0, e1, y[1], y[0]) for y in flat])
        sign = np.where(self._q(p).reshape(-1) <= self.level, 1.0, -1.0)
        return _result((sign * dist).reshape(p.shape[:-1]))

    def complement(self) -> Region:
        return EllipseComplement(self.center, self.shape, self.level, self.coords)

    def erode(self, rho: float) -> Region:
        # ||z||_{S^-1} <= rho / sqrt(lambda_min(S)) for ||z|| <= rho
        rho = _check_rho(rho)
        level = self.level - rho / math.sqrt(np.linalg.eigvalsh(self.S)[0])
        if level < 0:
            return EmptyRegion(self.coords)
        return Ellipse(self.center, self.shape, level, self.coords)


@dataclass(frozen=True)
class EllipseComplement(Region):
    center: tuple[float, ...]
    shape: tuple[tuple[float, ...], ...]
    level: float
    coords: Coords = (0, 1)

    def __post_init__(self):
        Ellipse.__post_init__(self)

    def _inner(self) -> Ellipse:
        return Ellipse(self.center, self.shape, self.level, self.coords)

    def contains(self, p):
        return _result(self._inner()._q(p) >= self.level)

    def signed_distance(self, p):
        return _result(-np.asarray(self._inner().signed_distance(p)))

    def complement(self) -> Region:
        return self._inner()

    def erode(self, rho: float) -> Region:
        rho = _check_rho(rho)
        S = np.asarray(self.shape, dtype=float)
        level = self.level + rho / math.sqrt(np.linalg.eigvalsh(S)[0])
        return EllipseComplement(self.center, self.shape, level, self.coords)


# ---------------------------------------------------------------------------
# Deviation sets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Ball:
    """Euclidean ball of ``radius`` centred at the origin."""

    radius: float
    dim: int

    def __post_init__(self):
        if not self.radius >= 0:
            raise RegionError("ball radius must be nonnegative")

    def contains(self, e) -> np.ndarray:
        return np.linalg.norm(np.asarray(e, dtype=float), axis=-1) <= self.radius

    def planar_radius(self, coords: Coords) -> float:
        return float(self.radius)


@dataclass(frozen=True)
class Ellipsoid:
    """``{e : e^T P e <= level^2}``, the ``level``-ball of the weighted norm."""

    weight: np.ndarray = field(compare=False)
    level: float

    def __post_init__(self):
        object.__setattr__(self, "weight", _check_spd(self.weight, "weight matrix"))
        if not self.level >= 0:
            raise RegionError("ellipsoid level must be nonnegative")

    @property
    def dim(self) -> int:
        return self.weight.shape[0]

    def contains(self, e) -> np.ndarray:
        e = np.asarray(e, dtype=float)
        return np.einsum("...i,ij,...j->...", e, self.weight, e) <= self.level**2

    def shadow(self, coords: Coords) -> Ellipse:
        return project_ellipsoid(self.weight, self.level, coords)

    def planar_radius(self, coords: Coords) -> float:
        if self.level == 0:
            return 0.0
        return enclosing_disk(self.shadow(coords))


DeviationSet = Ball | Ellipsoid


def project_ellipsoid(P, r: float, coords: Sequence[int]) -> Ellipse:
    """Exact shadow of ``{e : e^T P e <= r^2}`` on the ``coords`` plane."""
    P = _check_spd(P, "weight matrix")
    coords = tuple(int(c) for c in coords)
    if len(set(coords)) != len(coords) or not all(0 <= c < P.shape[0] for c in coords):
        raise RegionError(f"invalid coordinate selection {coords} for dimension {P.shape[0]}")
    S = np.linalg.inv(P)[np.ix_(coords, coords)]
    S = 0.5 * (S + S.T)
    return Ellipse(tuple(0.0 for _ in coords), tuple(map(tuple, S)), float(r), coords)


def enclosing_disk(e: Ellipse) -> float:
    """Radius of the smallest origin-centred disk containing ``e``: its largest semi-axis."""
    return float(e.level * math.sqrt(np.linalg.eigvalsh(e.S)[-1]))


def effective_radius(E: DeviationSet | float, coords: Coords) -> float:
    if isinstance(E, (Ball, Ellipsoid)):
        return E.planar_radius(coords)
    return _check_rho(E)


def erode_region(R: Region, E: DeviationSet | float) -> Region:
    """Sound inner approximation of ``R ⊖ E``; may return :class:`EmptyRegion`.

    Ellipsoidal deviation sets are reduced to the enclosing disk of their
    shadow on ``R.coords`` before the planar erosion.
    """
    return R.erode(effective_radius(E, R.coords))


def outline(R: Region, n: int = 96) -> np.ndarray:
    """Boundary polyline of a planar region, for plotting."""
    if isinstance(R, EmptyRegion):
        return np.zeros((0, 2))
    if isinstance(R, (Disk, DiskComplement)):
        a = 2 * np.pi * np.arange(n) / n
        return np.asarray(R.center) + R.radius * np.stack([np.cos(a), np.sin(a)], axis=1)
    if isinstance(R, (ConvexPolygon, PolygonComplement)):
        return np.asarray(R.vertices, dtype=float)
    if isinstance(R, (Ellipse, EllipseComplement)):
        lam, vec = np.linalg.eigh(np.asarray(R.shape, dtype=float))
        a = 2 * np.pi * np.arange(n) / n
        circ = np.stack([np.cos(a), np.sin(a)], axis=1) * (R.level * np.sqrt(lam))
        return np.asarray(R.center) + circ @ vec.T
    raise RegionError(f"no outline for {type(R).__name__}")
