"""Jordan-curve geometry around the cycle: offsets, annuli, membership.

The trajectory is represented as a closed polyline (stored counterclockwise).
W_gamma is the interior region grown (gamma > 0) or eroded (gamma < 0) by
|gamma|; B_gamma is the open annulus between the trajectory and the offset
boundary.  Offsets are per-vertex normal displacements, which is accurate for
the smooth curves produced by cycle sampling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

BOUNDARY_BAND = 1e-12


class OffsetError(ValueError):
    pass


def _close(poly: np.ndarray) -> np.ndarray:
    return np.vstack([poly, poly[:1]])


def polyline_length(poly: np.ndarray) -> float:
    seg = np.diff(_close(poly), axis=0)
    return float(np.sum(np.hypot(seg[:, 0], seg[:, 1])))


def signed_area(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def point_segment_distance(points: np.ndarray, a: np.ndarray,
                           b: np.ndarray) -> np.ndarray:
    """Distances from points (m,2) to each segment a[j]->b[j] (n,2): (m,n)."""
    ab = b - a  # (n,2)
    ap = points[:, None, :] - a[None, :, :]  # (m,n,2)
    denom = np.einsum("nj,nj->n", ab, ab)
    denom = np.where(denom == 0, 1.0, denom)
    t = np.clip(np.einsum("mnj,nj->mn", ap, ab) / denom, 0.0, 1.0)
    proj = a[None] + t[:, :, None] * ab[None]
    d = points[:, None, :] - proj
    return np.hypot(d[..., 0], d[..., 1])


def distance_to_polyline(points, poly: np.ndarray) -> np.ndarray:
    """Distance from each point to a closed polyline."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    closed = _close(poly)
    a, b = closed[:-1], closed[1:]
    out = np.empty(len(points))
    chunk = max(1, int(4e6 / max(len(poly), 1)))
    for i in range(0, len(points), chunk):
        out[i:i + chunk] = point_segment_distance(points[i:i + chunk], a, b).min(axis=1)
    return out


def hausdorff(curve_a: np.ndarray, curve_b: np.ndarray) -> float:
    """Symmetric Hausdorff distance between two closed polylines."""
    if len(curve_a) == 0 or len(curve_b) == 0:
        raise ValueError("curves must be nonempty")
    d_ab = distance_to_polyline(curve_a, curve_b).max()
    d_ba = distance_to_polyline(curve_b, curve_a).max()
    return float(max(d_ab, d_ba))


def points_in_polygon(points, poly: np.ndarray) -> np.ndarray:
    """Even-odd (crossing number) point-in-polygon test, vectorized."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    x, y = points[:, 0], points[:, 1]
    closed = _close(poly)
    x0, y0 = closed[:-1, 0], closed[:-1, 1]
    x1, y1 = closed[1:, 0], closed[1:, 1]
    inside = np.zeros(len(points), dtype=bool)
    for j in range(len(x0)):
        cond = (y0[j] > y) != (y1[j] > y)
        if not np.any(cond):
            continue
        xs = x0[j] + (y[cond] - y0[j]) / (y1[j] - y0[j]) * (x1[j] - x0[j])
        flip = np.zeros(len(points), dtype=bool)
        flip[cond] = xs > x[cond]
        inside ^= flip
    return inside


def _curvature(poly: np.ndarray) -> np.ndarray:
    """Discrete signed curvature at each vertex of a closed polyline
    (positive where a CCW curve bends left, i.e. convex)."""
    prev = np.roll(poly, 1, axis=0)
    nxt = np.roll(poly, -1, axis=0)
    d1 = (nxt - prev) / 2.0
    d2 = nxt - 2 * poly + prev
    speed = np.hypot(d1[:, 0], d1[:, 1])
    cross = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    return cross / np.maximum(speed, 1e-300) ** 3


def _outward_normals(poly: np.ndarray) -> np.ndarray:
    """Unit outward normals of a CCW closed polyline."""
    prev = np.roll(poly, 1, axis=0)
    nxt = np.roll(poly, -1, axis=0)
    t = nxt - prev
    t /= np.hypot(t[:, 0], t[:, 1])[:, None]
    return np.column_stack([t[:, 1], -t[:, 0]])


def is_simple(poly: np.ndarray) -> bool:
    """No self-intersections at polyline resolution (non-adjacent segments)."""
    closed = _close(poly)
    a, b = closed[:-1], closed[1:]
    n = len(a)
    d = b - a
    idx_i, idx_j = np.triu_indices(n, k=2)
    keep = ~((idx_i == 0) & (idx_j == n - 1))
    idx_i, idx_j = idx_i[keep], idx_j[keep]
    p, r = a[idx_i], d[idx_i]
    q, s = a[idx_j], d[idx_j]
    rxs = r[:, 0] * s[:, 1] - r[:, 1] * s[:, 0]
    qp = q - p
    t_num = qp[:, 0] * s[:, 1] - qp[:, 1] * s[:, 0]
    u_num = qp[:, 0] * r[:, 1] - qp[:, 1] * r[:, 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = t_num / rxs
        u = u_num / rxs
    hit = (rxs != 0) & (t > 0) & (t < 1) & (u > 0) & (u < 1)
    return not bool(np.any(hit))


@dataclass(frozen=True)
class TubeSets:
    curve: np.ndarray            # (n,2) closed CCW polyline ~ the trajectory
    gamma: float                 # signed offset (positive = outward)
    boundary_W: np.ndarray       # (m,2) closed CCW polyline for dW_gamma
    annulus_samples: np.ndarray  # (k,2) points filling closure of B_gamma
    ring_offsets: np.ndarray     # signed offsets of the sample rings
    pitch: float

    def contains(self, region: str, p) -> np.ndarray | bool:
        """Open-set membership for region in {"U", "W_gamma", "B_gamma"}.

        Points within the boundary band are classified as boundary and are
        not members of any open region.
        """
        pts = np.atleast_2d(np.asarray(p, dtype=float))
        scalar = np.asarray(p).ndim == 1
        in_u = points_in_polygon(pts, self.curve)
        in_w = points_in_polygon(pts, self.boundary_W)
        near = (distance_to_polyline(pts, self.curve) <= BOUNDARY_BAND) | \
               (distance_to_polyline(pts, self.boundary_W) <= BOUNDARY_BAND)
        if region == "U":
            out = in_u & ~near
        elif region == "W_gamma":
            out = in_w & ~near
        elif region == "B_gamma":
            out = (in_w != in_u) & ~near
        else:
            raise ValueError(f"unknown region {region!r}")
        return bool(out[0]) if scalar else out


def offset_polyline(poly: np.ndarray, gamma: float) -> np.ndarray:
    """Offset a CCW closed polyline by a signed normal displacement."""
    kappa = _curvature(poly)
    margin = 1.0 + gamma * kappa
    if np.any(margin <= 1e-3):
        opposing = kappa[np.sign(kappa) == -np.sign(gamma)]
        max_safe = 1.0 / np.max(np.abs(opposing)) if len(opposing) else 0.0
        raise OffsetError(
            f"offset {gamma:.4g} exceeds the curve reach; max safe |gamma| "
            f"is about {max_safe:.4g}")
    out = poly + gamma * _outward_normals(poly)
    if not is_simple(out[:: max(1, len(out) // 512)]):
        raise OffsetError(f"offset {gamma:.4g} self-intersects")
    return out


def build_tubes(lc, gamma: float, pitch: float | None = None,
                n_curve: int = 1024) -> TubeSets:
    """Build the trajectory curve, the offset region boundary and a point
    sampling of the annulus between them.

    ``lc`` is anything with ``x0(theta)``, ``T0``; typically a LimitCycle.
    """
    if gamma == 0:
        raise ValueError("gamma must be nonzero")
    thetas = np.linspace(0.0, lc.T0, n_curve, endpoint=False)
    curve = np.asarray(lc.x0(thetas)).T
    if signed_area(curve) < 0:
        curve = curve[::-1]
    if pitch is None:
        pitch = abs(gamma) / 8.0
    boundary_w = offset_polyline(curve, gamma)

    n_rings = max(int(np.ceil(abs(gamma) / pitch)), 1)
    n_along = min(n_curve, max(int(np.ceil(polyline_length(curve) / pitch)), 16))
    stride = max(1, n_curve // n_along)
    base = curve[::stride]
    normals = _outward_normals(curve)[::stride]
    offsets = np.linspace(0.0, gamma, n_rings + 1)
    rings = [base + s * normals for s in offsets]
    samples = np.vstack(rings)
    return TubeSets(curve=curve, gamma=float(gamma), boundary_W=boundary_w,
                    annulus_samples=samples, ring_offsets=offsets,
                    pitch=float(pitch))
