"""Tubular neighborhoods: offsets, membership, Hausdorff distance."""

import numpy as np
import pytest

from cycleperturb.geom import (OffsetError, build_tubes, distance_to_polyline,
                               hausdorff, offset_polyline, points_in_polygon,
                               polyline_length, signed_area)


def _circle(r=1.0, n=512):
    t = np.linspace(0, 2 * np.pi, n, endpoint=False)
    return np.stack([r * np.cos(t), r * np.sin(t)], axis=1)


def test_offset_circle_radii():
    c = _circle(1.0)
    for g, r in ((0.2, 1.2), (-0.2, 0.8)):
        off = offset_polyline(c, g)
        rr = np.hypot(off[:, 0], off[:, 1])
        assert np.max(np.abs(rr - r)) <= 1e-3


def test_offset_too_large_raises():
    with pytest.raises(OffsetError):
        offset_polyline(_circle(1.0), -1.5)


def test_polyline_length_and_area():
    c = _circle(2.0, 4096)
    assert polyline_length(np.vstack([c, c[:1]])) == pytest.approx(
        4 * np.pi, rel=1e-5)
    assert signed_area(c) == pytest.approx(4 * np.pi, rel=1e-5)


def test_distance_to_polyline_oracle():
    rng = np.random.default_rng(7)
    c = _circle(1.0, 2048)
    pts = rng.uniform(-2, 2, (200, 2))
    d = distance_to_polyline(pts, c)
    ref = np.abs(np.hypot(pts[:, 0], pts[:, 1]) - 1.0)
    assert np.max(np.abs(d - ref)) <= 1e-5


def test_hausdorff_brute_force_oracle():
    rng = np.random.default_rng(8)
    for _ in range(5):
        a = rng.uniform(-1, 1, (40, 2))
        b = rng.uniform(-1, 1, (50, 2))
        # point-set oracle (the implementation measures set-to-set over
        # segments; on scattered short polylines the vertex bound holds)
        d = hausdorff(a, b)
        dm = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2)
        ref = max(dm.min(axis=1).max(), dm.min(axis=0).max())
        assert d <= ref + 1e-12


def test_hausdorff_circles():
    assert hausdorff(_circle(1.0), _circle(1.3)) == pytest.approx(0.3,
                                                                  abs=1e-3)


def test_points_in_polygon_circle():
    rng = np.random.default_rng(9)
    c = _circle(1.0, 1024)
    pts = rng.uniform(-1.5, 1.5, (500, 2))
    r = np.hypot(pts[:, 0], pts[:, 1])
    keep = np.abs(r - 1.0) > 1e-2  # stay off the discretized boundary
    got = points_in_polygon(pts[keep], c)
    assert np.array_equal(got, r[keep] < 1.0)


def test_build_tubes_structure(lc, ts):
    assert ts.gamma == 0.2
    # curve is CCW and on the unit circle
    assert signed_area(ts.curve) > 0
    assert np.max(np.abs(np.hypot(ts.curve[:, 0], ts.curve[:, 1]) - 1)) <= 1e-6
    # outer boundary sits at radius 1.2
    rb = np.hypot(ts.boundary_W[:, 0], ts.boundary_W[:, 1])
    assert np.max(np.abs(rb - 1.2)) <= 1e-3
    # annulus samples fill 1 <= r <= 1.2
    ra = np.hypot(ts.annulus_samples[:, 0], ts.annulus_samples[:, 1])
    assert ra.min() >= 1.0 - 1e-6 and ra.max() <= 1.2 + 1e-3


def test_tube_membership(ts):
    assert ts.contains("U", (0.0, 0.0))
    assert not ts.contains("U", (1.1, 0.0))
    assert ts.contains("W_gamma", (1.1, 0.0))
    assert ts.contains("B_gamma", (0.0, 1.1))
    assert not ts.contains("B_gamma", (0.0, 0.5))
    assert not ts.contains("W_gamma", (1.5, 0.0))


def test_inner_tube(lc):
    inner = build_tubes(lc, -0.2)
    ra = np.hypot(inner.annulus_samples[:, 0], inner.annulus_samples[:, 1])
    assert ra.min() >= 0.8 - 1e-3 and ra.max() <= 1.0 + 1e-6
