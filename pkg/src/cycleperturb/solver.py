"""Periodic solutions of the perturbed system by shooting on the time-T map.

Fixed points of xi -> Omega_eps(T, 0, xi) are located with a damped Newton
iteration whose Jacobian I - V_eps(T) comes from the perturbed variational
flow.  Near eps = 0 that Jacobian is nearly singular along the cycle
tangent; the step then falls back to the minimal-norm least-squares
solution and the result is flagged as a degenerate (curve-like) family.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

import numpy as np

from . import geom
from . import odeflow
from .cycle import LimitCycle
from .geom import TubeSets
from .odeflow import IntegratorConfig, BlowUpError
from .system import SystemDef

_SOLVE_CFG = IntegratorConfig(rel_tol=1e-10, abs_tol=1e-12)

RESIDUAL_ACCEPT = 1e-8
DEDUPE_TOL = 1e-6
DEGENERATE_SMIN = 1e-6


@dataclass
class OrbitResult:
    eps: float
    T: float
    xi: np.ndarray                  # fixed point of the time-T map
    residual: float                 # closure defect at 10x tighter tolerance
    samples: np.ndarray             # dense orbit polyline, shape (n, 2)
    sample_times: np.ndarray
    hausdorff_to_cycle: float | None = None
    side: str | None = None         # inside | outside | crossing
    least_period_factor: int = 1
    degenerate_jacobian: bool = False
    certified: bool | None = None   # None = no bound supplied

    def to_dict(self) -> dict:
        d = asdict(self)
        d["xi"] = [float(self.xi[0]), float(self.xi[1])]
        d["samples"] = None  # dumped separately as CSV
        d["sample_times"] = None
        return d


@dataclass
class Attempt:
    guess: np.ndarray
    xi: np.ndarray
    residual: float
    status: str                     # converged | stalled | left-tube | blow-up


@dataclass
class ContinuationResult:
    rungs: list                     # list of (eps, [OrbitResult])
    failed_rung: float | None = None
    messages: list = field(default_factory=list)


def _map_residual(sys, eps, T, xi, cfg, order=1):
    """Value (and Jacobian) of xi - Omega_eps(T,0,xi)."""
    st = odeflow.integrate(sys, xi, 0.0, T, eps=eps, order=order,
                           cfg=cfg).at_end()
    F = xi - st["x"]
    if order == 0:
        return F, None
    J = np.eye(2) - st["V"]
    return F, J


def _newton(sys, eps, T, guess, *, restrict: TubeSets | None = None,
            max_iter: int = 40, cfg: IntegratorConfig = _SOLVE_CFG):
    """Damped Newton for the time-T map from one guess.

    Returns an Attempt plus a flag for a (near-)singular Jacobian at the
    solution, which signals a non-isolated fixed-point family.
    """
    xi = np.asarray(guess, dtype=float).copy()
    degenerate = False
    status = "stalled"
    try:
        F, J = _map_residual(sys, eps, T, xi, cfg)
    except BlowUpError:
        return Attempt(np.asarray(guess, float), xi, np.inf, "blow-up"), False
    for _ in range(max_iter):
        r = float(np.hypot(F[0], F[1]))
        if r < 1e-12 * max(1.0, float(np.hypot(xi[0], xi[1]))):
            status = "converged"
            break
        smin = np.linalg.svd(J, compute_uv=False)[-1]
        if smin < DEGENERATE_SMIN * max(1.0, np.linalg.norm(J)):
            degenerate = True
            step, *_ = np.linalg.lstsq(J, F, rcond=1e-10)
        else:
            step = np.linalg.solve(J, F)
        # backtracking: accept the first step that reduces the defect
        lam, accepted = 1.0, False
        for _ in range(6):
            trial = xi - lam * step
            if restrict is not None and not _in_tube(restrict, trial):
                lam *= 0.5
                continue
            try:
                Ft, Jt = _map_residual(sys, eps, T, trial, cfg)
            except BlowUpError:
                lam *= 0.5
                continue
            if np.hypot(Ft[0], Ft[1]) < r or lam < 0.2:
                xi, F, J = trial, Ft, Jt
                accepted = True
                break
            lam *= 0.5
        if not accepted:
            if restrict is not None and not _in_tube(restrict, xi - step):
                status = "left-tube"
            break
    else:
        r = float(np.hypot(F[0], F[1]))
        if r < 1e-12 * max(1.0, float(np.hypot(xi[0], xi[1]))):
            status = "converged"
    res = float(np.hypot(F[0], F[1]))
    if status != "converged" and res < 1e-12 * max(1.0, float(np.hypot(xi[0], xi[1]))):
        status = "converged"
    return Attempt(np.asarray(guess, float), xi, res, status), degenerate


def _in_tube(ts: TubeSets, p) -> bool:
    return float(geom.distance_to_polyline(np.atleast_2d(p), ts.curve)[0]) \
        <= abs(ts.gamma)


def _newton_batch(sys, eps, T, guesses, *, restrict: TubeSets | None = None,
                  max_iter: int = 40, cfg: IntegratorConfig = _SOLVE_CFG):
    """Newton on the time-T map for all guesses at once.

    Every iteration costs a single batched variational integration of the
    active set.  Tube restriction and step damping use geometry only, so
    they are free.  Falls back to the per-guess iteration when the batch
    integration blows up (one runaway guess must not sink the rest).
    """
    guesses = np.atleast_2d(np.asarray(guesses, dtype=float))
    n = len(guesses)
    xi = guesses.copy()
    status = np.array(["stalled"] * n, dtype=object)
    residual = np.full(n, np.inf)
    degenerate = np.zeros(n, dtype=bool)
    active = np.arange(n)
    step_cap = 0.25 * max(1.0, float(np.max(np.hypot(*guesses.T))))

    for _ in range(max_iter):
        if len(active) == 0:
            break
        try:
            st = odeflow.integrate(sys, xi[active], 0.0, T, eps=eps,
                                   order=1, cfg=cfg).at_end()
        except BlowUpError:
            for i in active:
                att, deg = _newton(sys, eps, T, xi[i], restrict=restrict,
                                   cfg=cfg, max_iter=max_iter)
                xi[i], residual[i] = att.xi, att.residual
                status[i], degenerate[i] = att.status, deg
            active = np.array([], dtype=int)
            break
        x_end = st["x"] if st["x"].ndim == 2 else st["x"][:, None]
        V = st["V"] if st["V"].ndim == 3 else st["V"][:, :, None]
        F = xi[active].T - x_end                     # (2, m)
        r = np.hypot(F[0], F[1])
        residual[active] = r
        scale = np.maximum(1.0, np.hypot(*xi[active].T))
        done = r < 1e-12 * scale
        status[active[done]] = "converged"
        keep = active[~done]
        if len(keep) == 0:
            break
        J = np.zeros((len(keep), 2, 2))
        J[:, 0, 0] = 1.0 - V[0, 0, ~done]
        J[:, 0, 1] = -V[0, 1, ~done]
        J[:, 1, 0] = -V[1, 0, ~done]
        J[:, 1, 1] = 1.0 - V[1, 1, ~done]
        Fk = F[:, ~done].T                           # (m', 2)
        det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        frob = np.sqrt(np.einsum("kij,kij->k", J, J))
        steps = np.empty_like(Fk)
        sing = np.abs(det) < DEGENERATE_SMIN * np.maximum(1.0, frob) ** 2
        ok = ~sing
        steps[ok, 0] = (J[ok, 1, 1] * Fk[ok, 0] - J[ok, 0, 1] * Fk[ok, 1]) / det[ok]
        steps[ok, 1] = (-J[ok, 1, 0] * Fk[ok, 0] + J[ok, 0, 0] * Fk[ok, 1]) / det[ok]
        for j in np.flatnonzero(sing):
            steps[j], *_ = np.linalg.lstsq(J[j], Fk[j], rcond=1e-10)
        for j, i in enumerate(keep):
            degenerate[i] = degenerate[i] or sing[j]
        lens = np.hypot(steps[:, 0], steps[:, 1])
        big = lens > step_cap
        steps[big] *= (step_cap / lens[big])[:, None]
        trial = xi[keep] - steps
        if restrict is not None:
            inside = np.array([_in_tube(restrict, p) for p in trial])
            for j in np.flatnonzero(~inside):
                lam, pt = 1.0, trial[j]
                for _ in range(6):
                    lam *= 0.5
                    pt = xi[keep[j]] - lam * steps[j]
                    if _in_tube(restrict, pt):
                        break
                else:
                    status[keep[j]] = "left-tube"
                trial[j] = pt
            stay = status[keep] != "left-tube"
            xi[keep[stay]] = trial[stay]
            active = keep[stay]
        else:
            xi[keep] = trial
            active = keep
    # a singular (curve-like) fixed-point family cannot reach the strict
    # Newton tolerance; a stall at the integration noise floor still counts
    stalled_ok = (status == "stalled") & (residual <= 1e-9)
    status[stalled_ok] = "converged"
    atts = [Attempt(guesses[i], xi[i], float(residual[i]), str(status[i]))
            for i in range(n)]
    return atts, degenerate


def default_guesses(lc: LimitCycle, gamma: float, n: int = 16) -> np.ndarray:
    """16 points on each of the half-offset curves and the cycle itself."""
    thetas = np.linspace(0.0, lc.T0, n, endpoint=False)
    base = lc.x0(thetas)
    v = lc.dx0(thetas)
    normal = lc.orientation * np.stack([v[1], -v[0]]) / np.hypot(v[0], v[1])
    rows = [base + s * normal for s in (-gamma / 2.0, 0.0, gamma / 2.0)]
    return np.hstack(rows).T


def find_periodic(sys: SystemDef, eps: float, T: float,
                  guesses=None, *, lc: LimitCycle | None = None,
                  gamma: float | None = None,
                  restrict: TubeSets | None = None,
                  eps_gamma: float | None = None,
                  cfg: IntegratorConfig = _SOLVE_CFG,
                  n_samples: int = 1024) -> list[OrbitResult]:
    """All distinct fixed points of the time-T map reachable from the guesses.

    Completeness is never claimed: the underlying existence statement does
    not guarantee uniqueness, and the search only reports what the guess
    grid reaches.  Raises RuntimeError with per-guess diagnostics when no
    guess converges.
    """
    if guesses is None:
        if lc is None or gamma is None:
            raise ValueError("default guesses need lc and gamma")
        guesses = default_guesses(lc, gamma)
    guesses = np.atleast_2d(np.asarray(guesses, dtype=float))

    attempts, degs = _newton_batch(sys, eps, T, guesses, restrict=restrict,
                                   cfg=cfg)
    found: list[tuple[np.ndarray, bool]] = []
    for att, degenerate in zip(attempts, degs):
        if att.status != "converged":
            continue
        if any(np.hypot(*(att.xi - xi)) < DEDUPE_TOL for xi, _ in found):
            continue
        found.append((att.xi, bool(degenerate)))

    if not found:
        diag = "; ".join(
            f"guess ({a.guess[0]:.4g},{a.guess[1]:.4g}): {a.status}, "
            f"residual {a.residual:.3g}" for a in attempts)
        raise RuntimeError(f"no guess converged: {diag}")

    orbits = []
    for xi, degenerate in found:
        orb = _validate_orbit(sys, eps, T, xi, degenerate, lc, cfg, n_samples)
        if eps_gamma is not None:
            orb.certified = eps <= eps_gamma
        if orb.residual <= RESIDUAL_ACCEPT:
            orbits.append(orb)
    if not orbits:
        raise RuntimeError("all converged fixed points failed re-validation")
    return orbits


def _validate_orbit(sys, eps, T, xi, degenerate, lc, cfg, n_samples):
    """Re-integrate at 10x tighter tolerance and attach orbit geometry."""
    tight = cfg.tighter(10.0)
    tgrid = np.linspace(0.0, T, n_samples + 1)
    sol = odeflow.integrate(sys, xi, 0.0, T, eps=eps, t_eval=tgrid, cfg=tight)
    xs = sol.states()["x"]                      # (2, n+1)
    residual = float(np.hypot(xi[0] - xs[0, -1], xi[1] - xs[1, -1]))
    samples = xs.T
    orb = OrbitResult(eps=float(eps), T=float(T), xi=xi, residual=residual,
                      samples=samples, sample_times=tgrid,
                      degenerate_jacobian=degenerate)
    if lc is not None:
        curve = np.asarray(lc.x0(np.linspace(0, lc.T0, 1024,
                                             endpoint=False))).T
        orb.hausdorff_to_cycle = float(geom.hausdorff(samples, curve))
        inside = geom.points_in_polygon(samples, curve)
        if inside.all():
            orb.side = "inside"
        elif not inside.any():
            orb.side = "outside"
        else:
            orb.side = "crossing"
    return orb


def continuation(sys: SystemDef, T: float, eps_ladder, *,
                 lc: LimitCycle, gamma: float,
                 eps_gamma: float | None = None,
                 cfg: IntegratorConfig = _SOLVE_CFG) -> ContinuationResult:
    """Follow the orbits found at the largest eps down the ladder.

    Each rung is seeded with the previous rung's fixed points; a rung from
    which no branch survives stops the run and is reported.
    """
    ladder = sorted((float(e) for e in eps_ladder), reverse=True)
    if not ladder:
        raise ValueError("eps_ladder must be nonempty")
    out = ContinuationResult(rungs=[])
    seeds = None
    for eps in ladder:
        try:
            orbits = find_periodic(sys, eps, T, guesses=seeds, lc=lc,
                                   gamma=gamma, eps_gamma=eps_gamma, cfg=cfg)
        except RuntimeError as e:
            out.failed_rung = eps
            out.messages.append(f"branch lost at eps={eps:g}: {e}")
            return out
        if eps_gamma is not None and eps > eps_gamma:
            out.messages.append(
                f"eps={eps:g} outside certified range (eps_gamma={eps_gamma:g})")
        out.rungs.append((eps, orbits))
        seeds = np.array([o.xi for o in orbits])
    return out


def least_period_check(orbit: OrbitResult, T1: float, *, sys: SystemDef,
                       threshold: float = 1e-4,
                       n_grid: int = 2048) -> tuple[int, str]:
    """Test the divisor candidates T/m, m = 2..10, against the orbit.

    Returns (m, verdict): verdict "PASS" with m = 1 when no sub-period
    qualifies (the least period among the tested divisors is T itself),
    "FAIL" with the smallest qualifying m, or "degenerate" with the cap 10
    for an essentially constant solution.
    """
    T = orbit.T
    tgrid = np.linspace(0.0, T, n_grid + 1)
    sol = odeflow.integrate(sys, orbit.xi, 0.0, T, eps=orbit.eps,
                            t_eval=tgrid, cfg=_SOLVE_CFG)
    xs = sol.states()["x"]                       # (2, n_grid+1)
    spread = np.max(np.hypot(xs[0] - xs[0, 0], xs[1] - xs[1, 0]))
    if spread < threshold:
        return 10, "degenerate"
    for m in range(2, 11):
        if n_grid % m:
            continue
        k = n_grid // m
        d = np.max(np.hypot(xs[0, k:] - xs[0, :-k], xs[1, k:] - xs[1, :-k]))
        if d < threshold:
            return m, "FAIL"
    return 1, "PASS"


def phi_time_constant(sys: SystemDef, lc: LimitCycle, tol: float = 1e-9,
                      n: int = 64) -> bool:
    """True when phi(t, xi) is constant in t for all sampled cycle points."""
    thetas = np.linspace(0.0, lc.T0, 8, endpoint=False)
    pts = np.asarray(lc.x0(thetas))
    ts = np.linspace(0.0, sys.T1, n, endpoint=False)
    for j in range(pts.shape[1]):
        vals = sys.phi(ts, pts[0, j], pts[1, j])
        if np.max(np.abs(vals - vals[:, :1])) > tol:
            return False
    return True


def irrational_scan(sys: SystemDef, T_candidates, eps_ladder, *,
                    lc: LimitCycle, ts: TubeSets,
                    n_guesses: int = 16,
                    cfg: IntegratorConfig = _SOLVE_CFG) -> list[dict]:
    """Residual-floor table for candidate periods T = n0 T0.

    For each (T, eps) the minimum post-Newton residual of the time-T map
    over a tube-restricted guess grid is reported.  A floor bounded away
    from zero across the ladder is the numerical nonexistence signature;
    the table is exploratory, not a proof.
    """
    if phi_time_constant(sys, lc):
        raise ValueError(
            "phi(t, xi) is constant in t on the cycle; the nonexistence "
            "scan requires a genuinely time-dependent perturbation")
    guesses = default_guesses(lc, ts.gamma, n=n_guesses)
    rows = []
    for T in T_candidates:
        for eps in eps_ladder:
            atts, _ = _newton_batch(sys, float(eps), float(T), guesses,
                                    restrict=ts, cfg=cfg)
            kept = [a for a in atts if a.status in ("converged", "stalled")]
            best_map = min((a.residual for a in kept), default=np.inf)
            n_conv = sum(a.status == "converged" for a in kept)
            # A fixed point of the time-T map is only a T-periodic solution
            # when the equation itself is T-periodic; the defect that
            # detects nonexistence is the full periodicity defect of the
            # continued trajectory, not the map closure.
            cand = sorted(kept, key=lambda a: a.residual)[:8]
            best = np.inf
            if cand:
                pts = np.array([a.xi for a in cand])
                best = float(np.min(_periodicity_defect(
                    sys, float(eps), float(T), pts, cfg)))
            rows.append({"T": float(T), "eps": float(eps),
                         "min_residual": best,
                         "min_map_residual": float(best_map),
                         "n_converged": int(n_conv)})
    return rows


def _periodicity_defect(sys, eps, T, pts, cfg, n_grid: int = 256):
    """max over a t-grid of ||x(t+T) - x(t)|| for each initial point."""
    tg = np.linspace(0.0, T, n_grid, endpoint=False)
    t_eval = np.concatenate([tg, tg + T])
    sol = odeflow.integrate(sys, pts, 0.0, 2.0 * T, eps=eps,
                            t_eval=t_eval, cfg=cfg)
    xs = sol.states()["x"]                       # (2, m, 2*n_grid)
    if xs.ndim == 2:
        xs = xs[:, None, :]
    a = xs[..., :n_grid]
    b = xs[..., n_grid:]
    return np.max(np.hypot(b[0] - a[0], b[1] - a[1]), axis=-1)
