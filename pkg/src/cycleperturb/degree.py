"""Planar topological degree via winding numbers.

The degree of a nonvanishing field along a closed boundary is the total
rotation of the field divided by 2*pi.  Three routes are provided: adaptive
angle tracking (`winding_degree`), the classical sign-change formula over
roots of the first component (`sign_change_degree`), and a dense-sampling
brute force used as an oracle in tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import brentq

DEGENERACY_REL_TOL = 1e-10


class DegenerateFieldError(ValueError):
    """The field vanishes (within tolerance) somewhere on the boundary."""


@dataclass
class BoundaryField:
    """A planar field sampled along a closed boundary parametrized on [0,1)."""

    evaluator: Callable[[float], np.ndarray]
    min_norm: float = field(default=np.inf)

    def __call__(self, s: float) -> np.ndarray:
        v = np.asarray(self.evaluator(s), dtype=float)
        self.min_norm = min(self.min_norm, float(np.hypot(v[0], v[1])))
        return v


def _delta_angle(u: np.ndarray, v: np.ndarray) -> float:
    """Signed angle from u to v in (-pi, pi]."""
    return float(np.arctan2(u[0] * v[1] - u[1] * v[0], u[0] * v[0] + u[1] * v[1]))


def winding_degree(bf: BoundaryField | Callable, n_init: int = 64,
                   max_depth: int = 40) -> int:
    """Winding number of the field around 0 along the boundary.

    The parameter interval is bisected until consecutive field directions
    differ by less than pi/2, which pins the atan2 branch.  Raises
    :class:`DegenerateFieldError` if the field becomes degenerate relative to
    the median boundary magnitude.
    """
    if not isinstance(bf, BoundaryField):
        bf = BoundaryField(bf)
    ss = np.linspace(0.0, 1.0, n_init, endpoint=False)
    vals = [bf(s) for s in ss]
    norms = [np.hypot(v[0], v[1]) for v in vals]
    scale = float(np.median(norms))
    if scale == 0.0:
        raise DegenerateFieldError("field vanishes on the boundary")
    tol = DEGENERACY_REL_TOL * scale

    total = 0.0
    for i in range(n_init):
        s0, v0 = ss[i], vals[i]
        s1 = ss[i + 1] if i + 1 < n_init else 1.0
        v1 = vals[(i + 1) % n_init]
        total += _arc(bf, s0, v0, s1, v1, tol, max_depth)
    deg = total / (2.0 * np.pi)
    if abs(deg - round(deg)) > 0.05:
        raise DegenerateFieldError(
            f"winding did not close to an integer (got {deg:.4f})")
    return int(round(deg))


def _arc(bf, s0, v0, s1, v1, tol, depth) -> float:
    if np.hypot(v0[0], v0[1]) < tol or np.hypot(v1[0], v1[1]) < tol:
        raise DegenerateFieldError(
            f"field magnitude below tolerance near s = {s0:.6g}")
    d = _delta_angle(v0, v1)
    if abs(d) < np.pi / 2:
        return d
    if depth <= 0:
        raise DegenerateFieldError(
            f"cannot resolve field rotation near s = {s0:.6g}")
    sm = 0.5 * (s0 + s1)
    vm = bf(sm)
    return _arc(bf, s0, v0, sm, vm, tol, depth - 1) + \
        _arc(bf, sm, vm, s1, v1, tol, depth - 1)


def circle_map_degree(g: Callable, period: float, orientation: int = 1,
                      n_init: int = 64) -> int:
    """Winding number of a periodic map g: [0, P] -> R^2 about 0.

    ``orientation`` (+1/-1) converts the parameter direction into the
    boundary orientation the degree should be measured against (a cycle
    traversed clockwise carries orientation -1).
    """
    scale = max(np.linalg.norm(np.asarray(g(s), dtype=float))
                for s in np.linspace(0, period, 17))
    mismatch = np.linalg.norm(np.asarray(g(period)) - np.asarray(g(0.0)))
    if mismatch > 1e-8 * max(scale, 1.0):
        raise ValueError(f"g(0) != g(P): endpoint mismatch {mismatch:.3g}")
    deg = winding_degree(lambda s: g(s * period), n_init=n_init)
    return orientation * deg


def sign_change_degree(g: Callable, period: float, orientation: int = 1,
                       n_scan: int = 2048) -> int:
    """Degree from the sign-change formula over roots of the first component.

    Simple roots theta_i of [g]_1 are bracketed on a scan grid and refined by
    bisection; each contributes sign([g]_2(theta_i)) times the sign of [g]_1
    just before the root, and the half-sum is the winding number.
    """
    # offset grid: symmetric maps tend to have roots exactly at 0, pi/2, ...
    thetas = (np.arange(n_scan) + 0.381966) * period / n_scan
    g1 = np.array([g(t)[0] for t in thetas])
    scale = float(np.median([np.linalg.norm(np.asarray(g(t))) for t in
                             thetas[:: max(1, n_scan // 64)]]))
    tol = DEGENERACY_REL_TOL * scale

    total = 0
    nxt = np.roll(np.arange(n_scan), -1)
    for i in range(n_scan):
        a, b = thetas[i], thetas[i] + period / n_scan
        ga, gb = g1[i], g1[nxt[i]]
        if ga == 0.0:
            raise DegenerateFieldError(
                f"[g]_1 vanishes exactly on the scan grid at theta = {a:.6g}; "
                "refine the grid")
        if ga * gb >= 0 and gb != 0.0:
            continue
        root = brentq(lambda t: g(t)[0], a, b, xtol=1e-14 * max(period, 1.0))
        g2 = g(root)[1]
        if abs(g2) < tol:
            raise DegenerateFieldError(
                f"both components vanish near theta = {root:.6g}")
        total += int(np.sign(g2)) * int(np.sign(ga))
    if total % 2 != 0:
        raise DegenerateFieldError("odd crossing count: non-simple root suspected")
    return orientation * (total // 2)


def brute_force_degree(g: Callable, period: float, orientation: int = 1,
                       n: int = 1_000_000) -> int:
    """Plain angle summation at dense uniform samples; test oracle."""
    thetas = np.linspace(0.0, period, n, endpoint=False)
    vals = np.asarray(g(thetas), dtype=float)
    if vals.shape != (2, n):  # non-vectorized callable
        vals = np.array([g(t) for t in thetas]).T
    ang = np.arctan2(vals[1], vals[0])
    d = np.diff(np.append(ang, ang[0]))
    d = (d + np.pi) % (2 * np.pi) - np.pi
    deg = d.sum() / (2 * np.pi)
    if abs(deg - round(deg)) > 0.05:
        raise DegenerateFieldError(f"brute-force winding not integral: {deg}")
    return orientation * int(round(deg))


def batched_winding(field: Callable, n_init: int = 512,
                    max_rounds: int = 40) -> int:
    """Winding number for a field that is cheapest to evaluate in batches.

    ``field(ss)`` maps an array of parameters in [0, 1) to values shaped
    (2, len(ss)).  Intervals whose direction change is not yet resolved get
    their midpoints evaluated together, one batch per refinement round.
    """
    ss = np.linspace(0.0, 1.0, n_init, endpoint=False)
    vals = np.asarray(field(ss), dtype=float)
    norms = np.hypot(vals[0], vals[1])
    scale = float(np.median(norms))
    if scale == 0.0:
        raise DegenerateFieldError("field vanishes on the boundary")
    tol = DEGENERACY_REL_TOL * scale
    for _ in range(max_rounds):
        if np.min(norms) < tol:
            raise DegenerateFieldError(
                "field magnitude below tolerance on the boundary")
        nxt = np.roll(vals, -1, axis=1)
        dang = np.arctan2(vals[0] * nxt[1] - vals[1] * nxt[0],
                          vals[0] * nxt[0] + vals[1] * nxt[1])
        bad = np.abs(dang) >= np.pi / 2
        if not bad.any():
            deg = float(np.sum(dang)) / (2.0 * np.pi)
            if abs(deg - round(deg)) > 0.05:
                raise DegenerateFieldError(
                    f"winding did not close to an integer (got {deg:.4f})")
            return int(round(deg))
        idx = np.flatnonzero(bad)
        hi = np.where(idx + 1 < len(ss), np.append(ss, 1.0)[idx + 1], 1.0)
        mids = 0.5 * (ss[idx] + hi)
        mvals = np.asarray(field(mids), dtype=float)
        order = np.argsort(np.concatenate([ss, mids]))
        ss = np.concatenate([ss, mids])[order]
        vals = np.concatenate([vals, mvals], axis=1)[:, order]
        norms = np.hypot(vals[0], vals[1])
    raise DegenerateFieldError(
        "cannot resolve the field rotation on the boundary")
