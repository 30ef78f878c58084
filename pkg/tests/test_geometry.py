import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from stlerode.geometry import (
    Ball, ConvexPolygon, Disk, DiskComplement, Ellipse, EllipseComplement, Ellipsoid, EmptyRegion, Halfspace,
    PolygonComplement, RegionError, enclosing_disk, erode_region, project_ellipsoid, regular_polygon,
)

UNIT_SQUARE = ((0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0))


def test_contains_examples():
    assert Disk((4.9, 3.2), 0.55).contains((4.9, 3.2))
    assert not DiskComplement((2.2, 2.2), 1.2).contains((2.2, 2.2))
    assert Halfspace((1.0, 0.0), 0.0).contains((0.0, 5.0))
    with pytest.raises(ValueError):
        Disk((0.0, 0.0), 1.0).contains((1.0, 2.0, 3.0))


def _brute_sd(region, p, n=20000):
    """Signed distance from a dense boundary sample."""
    a = np.linspace(0, 1, n, endpoint=False)
    if isinstance(region, ConvexPolygon):
        v = np.asarray(region.vertices)
        w = np.roll(v, -1, axis=0)
        k = len(v)
        idx = (a * k).astype(int)
        s = a * k - idx
        pts = v[idx] + s[:, None] * (w[idx] - v[idx])
    else:
        lam, vec = np.linalg.eigh(np.asarray(region.shape))
        th = 2 * np.pi * a
        pts = region.center + (np.stack([np.cos(th), np.sin(th)], 1) * region.level * np.sqrt(lam)) @ vec.T
    d = np.min(np.linalg.norm(pts - p, axis=1))
    return d if region.contains(p) else -d


def test_signed_distance_examples():
    assert Disk((1.0, 1.0), 1.0).signed_distance((1.25, 1.0)) == pytest.approx(0.75)
    assert DiskComplement((0.0, 0.0), 1.2).signed_distance((1.2, 0.0)) == pytest.approx(0.0)
    sq = ConvexPolygon(UNIT_SQUARE)
    assert sq.signed_distance((0.5, 0.5)) == pytest.approx(0.5)
    for p in [(0.2, 0.7), (1.5, 0.5), (2.0, 2.0), (-0.3, 0.1)]:
        assert sq.signed_distance(p) == pytest.approx(_brute_sd(sq, np.array(p)), abs=1e-4)


@given(st.floats(-3, 3), st.floats(-3, 3))
def test_ellipse_signed_distance_brute(x, y):
    e = Ellipse((0.3, -0.2), ((2.0, 0.6), (0.6, 1.0)), 1.5)
    p = np.array([x, y])
    assert e.signed_distance(p) == pytest.approx(_brute_sd(e, p), abs=2e-3)
    assert EllipseComplement(e.center, e.shape, e.level).signed_distance(p) == pytest.approx(-e.signed_distance(p))


def test_erode_examples():
    assert DiskComplement((0.0, 2.4), 1.2).erode(0.63) == DiskComplement((0.0, 2.4), 1.83)
    assert Disk((4.9, 3.2), 0.55).erode(0.0) == Disk((4.9, 3.2), 0.55)
    assert isinstance(Disk((4.9, 3.2), 0.55).erode(0.644), EmptyRegion)
    h = Halfspace((0.0, 2.0), 1.0).erode(0.5)
    assert h.normal == (0.0, 2.0) and h.offset == pytest.approx(2.0, rel=1e-10)


def test_halfspace_erosion_dense():
    R = Halfspace((0.0, 2.0), 1.0)
    E = R.erode(0.5)
    rng = np.random.default_rng(0)
    x = rng.uniform(-2, 2, size=(10_000, 2))
    ang = np.linspace(0, 2 * np.pi, 64, endpoint=False)
    ring = 0.5 * np.stack([np.cos(ang), np.sin(ang)], 1)
    exact = np.all(R.contains(x[:, None, :] + ring[None]), axis=1)
    # the ring sample is exact for a halfspace up to the points between sampled angles
    assert np.array_equal(E.contains(x), exact | (np.abs(x[:, 1] - 1.0) < 1e-3) & exact)


def test_polygon_validation():
    with pytest.raises(RegionError):
        ConvexPolygon(tuple(reversed(UNIT_SQUARE)))
    with pytest.raises(RegionError):
        ConvexPolygon(((0, 0), (2, 0), (1, 0.1), (2, 2), (0, 2)))


def test_hexagon_flat_top():
    v = np.array(regular_polygon((0.0, 2.4), 1.2))
    assert len(v) == 6
    assert np.allclose(np.linalg.norm(v - (0.0, 2.4), axis=1), 1.2)
    top = v[v[:, 1] > 3.0]
    assert len(top) == 2 and top[0, 1] == pytest.approx(top[1, 1])
    assert top[0, 1] == pytest.approx(2.4 + 1.2 * math.sin(math.pi / 3))
    PolygonComplement(tuple(map(tuple, v)))


def test_polygon_erosion_offsets():
    sq = ConvexPolygon(UNIT_SQUARE)
    inner = sq.erode(0.1)
    assert np.allclose(sorted(map(tuple, np.round(inner.vertices, 6))), [(0.1, 0.1), (0.1, 0.9), (0.9, 0.1), (0.9, 0.9)])
    assert isinstance(sq.erode(0.5), EmptyRegion)
    outer = PolygonComplement(UNIT_SQUARE).erode(0.1)
    assert np.allclose(sorted(map(tuple, np.round(outer.vertices, 6))),
                       [(-0.1, -0.1), (-0.1, 1.1), (1.1, -0.1), (1.1, 1.1)])


@st.composite
def regions(draw):
    kind = draw(st.sampled_from(["disk", "cdisk", "half", "poly", "cpoly", "ell", "cell"]))
    c = (draw(st.floats(-1, 1)), draw(st.floats(-1, 1)))
    r = draw(st.floats(0.2, 1.5))
    if kind == "disk":
        return Disk(c, r)
    if kind == "cdisk":
        return DiskComplement(c, r)
    if kind == "half":
        a = draw(st.floats(0, 2 * math.pi))
        return Halfspace((draw(st.floats(0.3, 3)) * math.cos(a), math.sin(a) * 2.0), draw(st.floats(-1, 1)))
    if kind in ("poly", "cpoly"):
        v = regular_polygon(c, r, draw(st.integers(3, 8)), draw(st.floats(0, 1)))
        return ConvexPolygon(v) if kind == "poly" else PolygonComplement(v)
    a, b, th = draw(st.floats(0.3, 3)), draw(st.floats(0.3, 3)), draw(st.floats(0, math.pi))
    R = np.array([[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]])
    S = R @ np.diag([a, b]) @ R.T
    S = tuple(map(tuple, S))
    return Ellipse(c, S, r) if kind == "ell" else EllipseComplement(c, S, r)


def _ball(rho, n=400, seed=0):
    rng = np.random.default_rng(seed)
    ang = rng.uniform(0, 2 * np.pi, n)
    rad = rho * np.sqrt(rng.uniform(0, 1, n))
    rad[: n // 2] = rho  # half on the boundary, where violations would show first
    return np.stack([rad * np.cos(ang), rad * np.sin(ang)], 1)


@given(regions(), st.floats(0.0, 0.8), st.integers(0, 2**31))
def test_erosion_sound(R, rho, seed):
    E = R.erode(rho)
    rng = np.random.default_rng(seed)
    x = rng.uniform(-3, 3, size=(300, 2))
    inside = np.asarray(E.contains(x), dtype=bool)
    # shrink by 1e-9 so exact erosions do not fail on rounding at the boundary
    y = _ball(rho, seed=seed) * (1 - 1e-9)
    pts = (x[inside][:, None, :] + y[None]).reshape(-1, 2)
    assert np.all(R.contains(pts))


@given(regions(), st.floats(0.0, 0.5), st.floats(0.0, 0.5), st.integers(0, 2**31))
def test_erosion_nesting(R, r1, r2, seed):
    r1, r2 = min(r1, r2), max(r1, r2)
    x = np.random.default_rng(seed).uniform(-3, 3, size=(500, 2))
    big, small = R.erode(r1), R.erode(r2)
    assert not np.any(np.asarray(small.contains(x)) & ~np.asarray(big.contains(x)))


@given(regions(), st.integers(0, 2**31))
def test_zero_erosion_identity(R, seed):
    x = np.random.default_rng(seed).uniform(-3, 3, size=(500, 2))
    assert np.array_equal(R.erode(0.0).contains(x), R.contains(x))


def test_project_ellipsoid_examples():
    e = project_ellipsoid(np.eye(4), 0.644, (0, 1))
    assert enclosing_disk(e) == pytest.approx(0.644)
    assert np.allclose(e.semi_axes(), 0.644)
    e = project_ellipsoid(np.diag([4.0, 1, 1, 1]), 1.0, (0, 1))
    assert np.allclose(sorted(e.semi_axes()), [0.5, 1.0])
    assert enclosing_disk(e) == pytest.approx(1.0)
    # support widths of the sampled 4-D boundary match
    rng = np.random.default_rng(1)
    u = rng.normal(size=(200_000, 4))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    pts = u / np.sqrt([4.0, 1, 1, 1])
    assert np.max(np.abs(pts[:, 0])) == pytest.approx(0.5, abs=2e-3)
    assert np.max(np.abs(pts[:, 1])) == pytest.approx(1.0, abs=2e-3)


def _random_spd(rng, n):
    A = rng.normal(size=(n, n))
    return A @ A.T + 0.1 * np.eye(n)


@given(st.integers(0, 2**31), st.integers(2, 5))
def test_projection_contains_samples(seed, n):
    rng = np.random.default_rng(seed)
    P = _random_spd(rng, n)
    r = rng.uniform(0.1, 2)
    E = Ellipsoid(P, r)
    L = np.linalg.cholesky(np.linalg.inv(P))
    u = rng.normal(size=(2000, n))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    pts = r * u @ L.T
    assert np.all(E.contains(pts * (1 - 1e-9)))
    sh = E.shadow((0, 1))
    assert np.all(sh.signed_distance(pts[:, :2]) >= -1e-9)
    rad = enclosing_disk(sh)
    assert np.all(np.linalg.norm(pts[:, :2], axis=1) <= rad * (1 + 1e-9))


def test_enclosing_disk_examples():
    assert enclosing_disk(Ellipse((0.0, 0.0), ((1.0, 0.0), (0.0, 1.0)), 0.644)) == pytest.approx(0.644)
    assert enclosing_disk(Ellipse((0.0, 0.0), ((0.25, 0.0), (0.0, 1.0)), 1.0)) == pytest.approx(1.0)


@given(st.integers(0, 2**31), st.floats(0.1, 10))
def test_planar_radius_scale_invariance(seed, c):
    rng = np.random.default_rng(seed)
    P = _random_spd(rng, 4)
    r = 0.7
    a = Ellipsoid(P, r).planar_radius((0, 1))
    b = Ellipsoid(c * P, r * math.sqrt(c)).planar_radius((0, 1))
    assert a == pytest.approx(b, rel=1e-9)


def test_erode_region_by_deviation_sets():
    goal = Disk((4.9, 3.2), 0.55)
    assert erode_region(goal, Ball(0.3, 4)).radius == pytest.approx(0.25)
    # shadow semi-axes (0.5, 0.25): enclosing disk 0.5
    assert erode_region(goal, Ellipsoid(np.diag([4.0, 16.0, 1, 1]), 1.0)).radius == pytest.approx(0.05)
    assert isinstance(erode_region(goal, Ellipsoid(np.eye(4), 0.644)), EmptyRegion)
