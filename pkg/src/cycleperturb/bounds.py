"""Explicit admissible perturbation-size bound.

Six constants are estimated over the closed tube around the trajectory:

* ``M``  — max of the pulled-back perturbation ``Phi = V^-1 phi``;
* ``Mp`` — max spectral norm of the spatial derivative of ``Phi``;
* ``Lp`` — max spectral norm of the end-time variational matrix ``V(T)``;
* ``Lpp``— max bilinear norm of the end-time second variational tensor;
* ``K0`` — boundary minimum of the T-increment of eta (from the conditions
  module);
* ``K_gamma`` — minimum displacement of the time-T map over the two offset
  curves at distance ``|gamma|``.

The admissible bound is

    eps_gamma = min( K0 / (T^2 M (Mp + sqrt(2) M Lpp + Mp Lp)),
                     K_gamma / (T M (1 + Lp)) )

with zero denominators treated as +inf branches.  V is inverted through the
adjugate and the separately integrated determinant (trace identity), which
stays relatively accurate where V is strongly contracting.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.optimize import minimize_scalar

from . import degree as degree_mod
from . import odeflow
from .cycle import LimitCycle
from .geom import TubeSets, OffsetError, offset_polyline
from .odeflow import IntegratorConfig, BlowUpError
from .system import SystemDef

_BOUNDS_CFG = IntegratorConfig(rel_tol=1e-9, abs_tol=1e-12)
_CHUNK = 256


@dataclass
class BoundsReport:
    gamma: float
    T: float
    M: float = 0.0
    Mp: float = 0.0
    Lp: float = 0.0
    Lpp: float = 0.0
    K0: float | None = None
    K_gamma: float | None = None
    K_gamma_side: str | None = None
    gamma0: float | None = None
    eps_gamma: float | None = None
    eps_terms: tuple | None = None
    diagnostic: str | None = None
    grids: dict = field(default_factory=dict)
    failed_cells: list = field(default_factory=list)

    def to_json(self, **extra) -> str:
        doc = asdict(self)
        doc.update(extra)
        return json.dumps(doc, indent=2, sort_keys=True, default=_jsonable)


def _jsonable(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON-serializable: {type(o)}")


def _spec2(A):
    """Spectral norm of a stack of 2x2 matrices shaped (2, 2, ...)."""
    f = A[0, 0] ** 2 + A[0, 1] ** 2 + A[1, 0] ** 2 + A[1, 1] ** 2
    d = A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
    disc = np.maximum(f * f - 4.0 * d * d, 0.0)
    return np.sqrt(np.maximum(0.5 * (f + np.sqrt(disc)), 0.0))


def _adjugate(V):
    adj = np.empty_like(V)
    adj[0, 0], adj[0, 1] = V[1, 1], -V[0, 1]
    adj[1, 0], adj[1, 1] = -V[1, 0], V[0, 0]
    return adj


def _bilinear_norm(W, n_dirs: int = 64):
    """max_{|u|=1} ||W[u,u]|| for a stack of 2x2x2 tensors (2,2,2,...)."""
    al = np.linspace(0.0, np.pi, n_dirs, endpoint=False)  # u and -u coincide
    U = np.stack([np.cos(al), np.sin(al)])                # (2, n_dirs)
    Wuu = np.einsum("ijk...,ja,ka->ia...", W, U, U)       # (2, n_dirs, ...)
    return np.max(np.hypot(Wuu[0], Wuu[1]), axis=0)


def _phi_pullback(sys, t, st):
    """Phi and its spatial derivative from the unpacked flow state."""
    x, V, W, D = st["x"], st["V"], st["W"], st["D"]
    Z = _adjugate(V) / D
    ph = sys.phi(t, x[0], x[1])
    Phi = np.einsum("ij...,j...->i...", Z, ph)
    G = np.einsum("im...,mj...->ij...", sys.phi_jac_x(t, x[0], x[1]), V)
    P = (-np.einsum("im...,mjk...,j...->ik...", Z, W, Phi)
         + np.einsum("im...,mk...->ik...", Z, G))
    return Phi, P


def estimate_constants(sys: SystemDef, lc: LimitCycle, ts: TubeSets, T: float,
                       *, K0: float | None = None, n_t: int = 64,
                       cfg: IntegratorConfig | None = None) -> BoundsReport:
    """Maxima/minima over the tube sample set and a uniform time grid.

    Cells whose trajectory blows up are excluded from the maxima and listed
    in ``failed_cells``.
    """
    cfg = cfg or _BOUNDS_CFG
    rep = BoundsReport(gamma=ts.gamma, T=T, K0=K0,
                       grids={"n_t": n_t, "n_samples": len(ts.annulus_samples),
                              "pitch": ts.pitch})
    tgrid = np.linspace(0.0, T, n_t + 1)
    samples = ts.annulus_samples

    M = Mp = Lp = Lpp = 0.0
    best_M = best_Mp = (0, 0.0)  # (sample index, time)
    for lo in range(0, len(samples), _CHUNK):
        chunk = samples[lo:lo + _CHUNK]
        try:
            sol = odeflow.integrate(sys, chunk, 0.0, T, order=2,
                                    divergence=True, t_eval=tgrid, cfg=cfg)
        except BlowUpError:
            # isolate the offending cells one by one
            for j, pt in enumerate(chunk):
                try:
                    sol1 = odeflow.integrate(sys, pt, 0.0, T, order=2,
                                             divergence=True, t_eval=tgrid,
                                             cfg=cfg)
                except BlowUpError:
                    rep.failed_cells.append([float(pt[0]), float(pt[1])])
                    continue
                M, Mp, Lp, Lpp, best_M, best_Mp = _fold_chunk(
                    sys, sol1.states(), tgrid, lo + j, 1,
                    M, Mp, Lp, Lpp, best_M, best_Mp, single=True)
            continue
        M, Mp, Lp, Lpp, best_M, best_Mp = _fold_chunk(
            sys, sol.states(), tgrid, lo, len(chunk),
            M, Mp, Lp, Lpp, best_M, best_Mp)

    # golden-section polish in time at the best cells
    M = max(M, _polish_time(sys, samples[best_M[0]], T, best_M[1], cfg, 0))
    Mp = max(Mp, _polish_time(sys, samples[best_Mp[0]], T, best_Mp[1], cfg, 1))
    rep.M, rep.Mp, rep.Lp, rep.Lpp = M, Mp, Lp, Lpp

    rep.K_gamma, rep.K_gamma_side = k_gamma(sys, lc, abs(ts.gamma), T, cfg=cfg)
    if K0 is not None:
        epsilon_star(rep)
    return rep


def _fold_chunk(sys, states, tgrid, lo, n, M, Mp, Lp, Lpp, best_M, best_Mp,
                single=False):
    if single:
        states = {k: v[..., None, :] for k, v in states.items()}
    Phi, P = _phi_pullback(sys, tgrid, states)
    nPhi = np.hypot(Phi[0], Phi[1])      # (n, n_t+1)
    nP = _spec2(P)
    if nPhi.max() > M:
        M = float(nPhi.max())
        i, j = np.unravel_index(int(np.argmax(nPhi)), nPhi.shape)
        best_M = (lo + i, float(tgrid[j]))
    if nP.max() > Mp:
        Mp = float(nP.max())
        i, j = np.unravel_index(int(np.argmax(nP)), nP.shape)
        best_Mp = (lo + i, float(tgrid[j]))
    Lp = max(Lp, float(np.max(_spec2(states["V"][..., -1]))))
    Lpp = max(Lpp, float(np.max(_bilinear_norm(states["W"][..., -1]))))
    return M, Mp, Lp, Lpp, best_M, best_Mp


def _polish_time(sys, pt, T, t_best, cfg, which):
    """Refine the time of the best cell with a bounded scalar search."""
    sol = odeflow.integrate(sys, pt, 0.0, T, order=2, divergence=True,
                            cfg=cfg, dense=True)

    def neg(t):
        st = {k: v[..., None] for k, v in sol.state_at(float(t)).items()}
        Phi, P = _phi_pullback(sys, float(t), st)
        val = np.hypot(Phi[0], Phi[1]) if which == 0 else _spec2(P)
        return -float(val[0] if val.ndim else val)

    lo = max(0.0, t_best - T / 16)
    hi = min(T, t_best + T / 16)
    res = minimize_scalar(neg, bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-6 * T})
    return -float(res.fun)


# ---------------------------------------------------------------------------
# K_gamma and the displacement degree


def _outward_unit(lc: LimitCycle, thetas):
    """Unit outward normal of the trajectory at x0(theta)."""
    v = lc.dx0(thetas)
    n = np.stack([v[1], -v[0]]) / np.hypot(v[0], v[1])
    return lc.orientation * n


def k_gamma(sys: SystemDef, lc: LimitCycle, gamma_abs: float, T: float, *,
            n_theta: int = 512,
            cfg: IntegratorConfig | None = None) -> tuple[float, str]:
    """min ||xi - Omega(T,0,xi)|| over the two curves offset by +-|gamma|,
    with a bounded scalar polish around the best parameter."""
    cfg = cfg or _BOUNDS_CFG
    thetas = np.linspace(0.0, lc.T0, n_theta, endpoint=False)
    normals = _outward_unit(lc, thetas)
    base = lc.x0(thetas)
    best = (math.inf, "outer", 0.0)
    for side, name in ((gamma_abs, "outer"), (-gamma_abs, "inner")):
        pts = (base + side * normals).T
        disp = _displacement(sys, pts, T, cfg)
        i = int(np.argmin(disp))
        if disp[i] < best[0]:
            best = (float(disp[i]), name, float(thetas[i]))

        def neg(th, side=side):
            p = lc.x0(th) + side * _outward_unit(lc, th)
            end = odeflow.flow(sys, p, 0.0, T, cfg=cfg)
            return float(np.hypot(p[0] - end[0], p[1] - end[1]))

        span = lc.T0 / n_theta
        res = minimize_scalar(neg, bounds=(thetas[i] - span, thetas[i] + span),
                              method="bounded", options={"xatol": 1e-8})
        if res.fun < best[0]:
            best = (float(res.fun), name, float(res.x))
    return best[0], best[1]


def _displacement(sys, pts, T, cfg):
    """||xi - Omega(T,0,xi)|| per point; +inf where the trajectory blows up
    (such a point cannot be T-periodic)."""
    out = []
    for lo in range(0, len(pts), _CHUNK):
        chunk = pts[lo:lo + _CHUNK]
        try:
            end = odeflow.integrate(sys, chunk, 0.0, T, cfg=cfg).at_end()["x"]
        except BlowUpError:
            d = np.empty(len(chunk))
            for j, pt in enumerate(chunk):
                try:
                    e1 = odeflow.integrate(sys, pt, 0.0, T, cfg=cfg).at_end()["x"]
                    d[j] = np.hypot(pt[0] - e1[0], pt[1] - e1[1])
                except BlowUpError:
                    d[j] = np.inf
            out.append(d)
            continue
        out.append(np.hypot(chunk[:, 0] - end[0], chunk[:, 1] - end[1]))
    return np.concatenate(out)


def time_map_degree(sys: SystemDef, ts: TubeSets, T: float, *,
                    n_init: int = 512,
                    cfg: IntegratorConfig | None = None) -> int:
    """deg(I - Omega(T,0,.)) along the offset boundary of W_gamma."""
    cfg = cfg or IntegratorConfig(rel_tol=1e-8, abs_tol=1e-10)
    poly = ts.boundary_W
    seg = np.hypot(*np.diff(np.vstack([poly, poly[:1]]), axis=0).T)
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    total = arc[-1]

    def param(ss):
        a = np.asarray(ss) * total
        i = np.clip(np.searchsorted(arc, a, side="right") - 1, 0, len(poly) - 1)
        frac = (a - arc[i]) / seg[i]
        nxt = np.vstack([poly, poly[:1]])[i + 1]
        return poly[i] + frac[:, None] * (nxt - poly[i])

    def fieldfn(ss):
        pts = param(np.atleast_1d(ss))
        vals = []
        for lo in range(0, len(pts), _CHUNK):
            end = odeflow.integrate(sys, pts[lo:lo + _CHUNK], 0.0, T,
                                    cfg=cfg).at_end()["x"]
            end = end if end.ndim == 2 else end[:, None]
            vals.append(pts[lo:lo + _CHUNK].T - end)
        return np.concatenate(vals, axis=1)

    return degree_mod.batched_winding(fieldfn, n_init=n_init)


# ---------------------------------------------------------------------------
# gamma0 and the final bound


def find_gamma0(sys: SystemDef, lc: LimitCycle, ts_builder, T0: float,
                gamma_grid, *, safety_tol: float = 1e-6,
                cfg: IntegratorConfig | None = None) -> tuple[float, list]:
    """Largest grid gamma whose two-sided tube carries no T0-periodic point.

    Scans from small to large and stops at the first failure; if even the
    smallest gamma fails, it is returned together with a warning entry.
    Returns (gamma0, warnings).
    """
    cfg = cfg or IntegratorConfig(rel_tol=1e-8, abs_tol=1e-10)
    grid = sorted(float(g) for g in gamma_grid)
    if not grid or grid[0] <= 0:
        raise ValueError("gamma_grid must be a nonempty list of positive reals")
    warnings: list[str] = []
    gamma0 = None
    for g in grid:
        try:
            pts = np.vstack([_band_samples(ts_builder(g)),
                             _band_samples(ts_builder(-g))])
        except OffsetError as e:
            warnings.append(f"gamma={g:g}: offset failed ({e})")
            break
        disp = _displacement(sys, pts, T0, cfg)
        if float(disp.min()) <= safety_tol:
            warnings.append(
                f"gamma={g:g}: time-T0 displacement fell to {disp.min():.3g}")
            break
        gamma0 = g
    if gamma0 is None:
        warnings.append(
            f"no grid gamma validated; returning smallest value {grid[0]:g}")
        gamma0 = grid[0]
    return gamma0, warnings


def _band_samples(ts: TubeSets) -> np.ndarray:
    """Tube samples excluding the trajectory ring itself (its displacement
    is identically zero)."""
    n_per = len(ts.annulus_samples) // len(ts.ring_offsets)
    keep = []
    for j, off in enumerate(ts.ring_offsets):
        if off != 0.0:
            keep.append(ts.annulus_samples[j * n_per:(j + 1) * n_per])
    return np.vstack(keep)


def epsilon_star(br: BoundsReport) -> float:
    """The explicit admissible bound; zero denominators count as +inf."""
    if br.K0 is None or br.K_gamma is None:
        raise ValueError("K0 and K_gamma must be set before epsilon_star")
    if br.K0 <= 0.0 or br.K_gamma <= 0.0:
        br.eps_terms = (0.0, 0.0)
        br.eps_gamma = 0.0
        br.diagnostic = "conditions fail: K0 and K_gamma must be positive"
        return 0.0
    den1 = br.T ** 2 * br.M * (br.Mp + math.sqrt(2.0) * br.M * br.Lpp
                               + br.Mp * br.Lp)
    den2 = br.T * br.M * (1.0 + br.Lp)
    t1 = br.K0 / den1 if den1 > 0.0 else math.inf
    t2 = br.K_gamma / den2 if den2 > 0.0 else math.inf
    br.eps_terms = (t1, t2)
    br.eps_gamma = min(t1, t2)
    return br.eps_gamma
