"""Limit cycle location, monodromy/Floquet data, and the period-ratio test.

The cycle is found by Poincare shooting: a transversal line through the seed
picks out first returns, and Newton iteration on (xi, T) solves
Omega(T,0,xi) = xi on the section.  The nontrivial characteristic multiplier
mu and the companion Floquet solution y(t) of the linearization are read off
the monodromy matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.interpolate import CubicHermiteSpline
from scipy.optimize import brentq

from . import odeflow
from .odeflow import IntegratorConfig
from .system import SystemDef


class CycleError(RuntimeError):
    pass


class HypothesisError(RuntimeError):
    """A structural hypothesis on the system fails (nonhyperbolic cycle,
    stagnating shooting iteration, ...)."""


# integrator used for cycle refinement; the acceptance tolerances need a bit
# more than the library default
_TIGHT = IntegratorConfig(rel_tol=1e-12, abs_tol=1e-13)


class PeriodicHermite:
    """Cubic Hermite interpolation of a T-periodic vector function from
    uniform samples of the value and its derivative."""

    def __init__(self, period: float, values: np.ndarray, derivs: np.ndarray):
        self.period = float(period)
        self.values = np.asarray(values, dtype=float)  # (dim, n)
        self.derivs = np.asarray(derivs, dtype=float)
        self.n = self.values.shape[1]
        self.h = self.period / self.n

    def _locate(self, theta):
        theta = np.asarray(theta, dtype=float) % self.period
        idx = np.minimum((theta / self.h).astype(int), self.n - 1)
        u = theta / self.h - idx
        nxt = (idx + 1) % self.n
        return idx, nxt, u

    def __call__(self, theta):
        idx, nxt, u = self._locate(theta)
        p0, p1 = self.values[:, idx], self.values[:, nxt]
        m0, m1 = self.derivs[:, idx] * self.h, self.derivs[:, nxt] * self.h
        u2, u3 = u * u, u * u * u
        h00 = 2 * u3 - 3 * u2 + 1
        h10 = u3 - 2 * u2 + u
        h01 = -2 * u3 + 3 * u2
        h11 = u3 - u2
        return h00 * p0 + h10 * m0 + h01 * p1 + h11 * m1

    def deriv(self, theta):
        idx, nxt, u = self._locate(theta)
        p0, p1 = self.values[:, idx], self.values[:, nxt]
        m0, m1 = self.derivs[:, idx] * self.h, self.derivs[:, nxt] * self.h
        u2 = u * u
        d00 = (6 * u2 - 6 * u) / self.h
        d10 = (3 * u2 - 4 * u + 1) / self.h
        d01 = (-6 * u2 + 6 * u) / self.h
        d11 = (3 * u2 - 2 * u) / self.h
        return d00 * p0 + d10 * m0 + d01 * p1 + d11 * m1


@dataclass(frozen=True)
class LimitCycle:
    sys: SystemDef
    xi0: np.ndarray
    T0: float
    thetas: np.ndarray          # uniform grid on [0, T0)
    x_samples: np.ndarray       # (2, n): x0(theta_i)
    dx_samples: np.ndarray      # (2, n): psi(x0(theta_i))
    monodromy: np.ndarray
    mu: float
    y_samples: np.ndarray       # (2, n): Floquet companion over one period
    dy_samples: np.ndarray
    ccw: bool                   # orientation of the trajectory
    newton_steps: int
    _x_interp: PeriodicHermite
    _y_interp: CubicHermiteSpline

    def x0(self, theta):
        return self._x_interp(theta)

    def dx0(self, theta):
        """Velocity along the cycle, evaluated through the field itself."""
        p = self._x_interp(theta)
        return self.sys.psi(p[0], p[1])

    def y(self, theta):
        """Floquet companion, extended by y(t + n T0) = mu^n y(t)."""
        theta = np.asarray(theta, dtype=float)
        n = np.floor(theta / self.T0)
        base = self._y_interp(theta - n * self.T0)
        return base * self.mu ** n

    @property
    def orientation(self) -> int:
        return 1 if self.ccw else -1


def _section_returns(sys, seed, normal, max_time, cfg):
    """Yield (t, point) for same-direction crossings of the section line."""
    p = np.asarray(seed, dtype=float)
    n = np.asarray(normal, dtype=float)
    n = n / np.linalg.norm(n)
    chunk = 40.0
    t0 = 0.0
    x = p
    while t0 < max_time:
        t1 = min(t0 + chunk, max_time)
        sol = odeflow.integrate(sys, x, t0, t1, cfg=cfg, dense=True)
        ts = np.linspace(t0, t1, max(int((t1 - t0) * 200), 64))
        xs = sol.states(ts)["x"]
        g = (xs[0] - p[0]) * n[0] + (xs[1] - p[1]) * n[1]
        up = np.where((g[:-1] < 0) & (g[1:] >= 0))[0]
        for i in up:
            gfun = lambda t: float((sol.state_at(t)["x"] - p) @ n)
            tc = brentq(gfun, ts[i], ts[i + 1], xtol=1e-13)
            if tc > 1e-9:
                yield tc, sol.state_at(tc)["x"]
        x = sol.at_end()["x"]
        t0 = t1


def find_cycle(sys: SystemDef, seed, section_normal=None, *,
               n_samples: int = 2048, max_time: float = 500.0,
               newton_tol: float = 1e-10, max_newton: int = 25,
               cfg: IntegratorConfig | None = None) -> LimitCycle:
    """Locate the limit cycle reachable from ``seed``.

    The Poincare section is the line through ``seed`` with normal
    ``psi(seed)`` unless overridden.  Raises :class:`CycleError` when no
    return is found and :class:`HypothesisError` when the cycle is not
    hyperbolic in the Poincare sense (multiplier at +-1).
    """
    cfg = cfg or _TIGHT
    seed = np.asarray(seed, dtype=float)
    fseed = sys.psi(seed[0], seed[1])
    if section_normal is None:
        if np.linalg.norm(fseed) < 1e-12:
            raise CycleError("psi(seed) vanishes; supply section_normal")
        section_normal = fseed
    n_hat = np.asarray(section_normal, dtype=float)
    n_hat = n_hat / np.linalg.norm(n_hat)

    # walk successive returns until they settle, to damp the transient
    prev = None
    prev_t = None
    xi, T = None, None
    for tc, q in _section_returns(sys, seed, n_hat, max_time, cfg):
        if prev is not None:
            if np.linalg.norm(q - prev) < 2e-2:
                xi, T = q, tc - prev_t
                break
        prev, prev_t = q, tc
    if xi is None:
        if prev is None:
            raise CycleError(f"no section crossing within time budget {max_time}")
        raise CycleError("returns did not settle within the time budget")

    # Newton on (xi, T): [Omega(T,0,xi) - xi ; <xi - seed, n>] = 0
    steps = 0
    for steps in range(1, max_newton + 1):
        xT, V = odeflow.flow_variational(sys, xi, 0.0, T, cfg=cfg)
        r = np.array([xT[0] - xi[0], xT[1] - xi[1], (xi - seed) @ n_hat])
        fT = sys.psi(xT[0], xT[1])
        J = np.zeros((3, 3))
        J[:2, :2] = V - np.eye(2)
        J[:2, 2] = fT
        J[2, :2] = n_hat
        delta = np.linalg.solve(J, -r)
        xi = xi + delta[:2]
        T = T + delta[2]
        if np.linalg.norm(r[:2]) < newton_tol and np.linalg.norm(delta) < newton_tol:
            break
    else:
        raise HypothesisError("Newton iteration on the return map stagnated")

    closure = np.linalg.norm(odeflow.flow(sys, xi, 0.0, T, cfg=cfg) - xi)
    if closure > 1e-9:
        raise HypothesisError(f"cycle closure residual {closure:.3g} > 1e-9")

    # least-period guard: no return at T/m
    for m in range(2, 6):
        d = np.linalg.norm(odeflow.flow(sys, xi, 0.0, T / m, cfg=cfg) - xi)
        if d < 1e-6:
            raise HypothesisError(f"trajectory already closes at T/{m}")

    # dense one-period sampling with variational data
    thetas = np.linspace(0.0, T, n_samples, endpoint=False)
    sol = odeflow.integrate(sys, xi, 0.0, T, order=1, t_eval=None, cfg=cfg,
                            dense=True)
    states = sol.states(thetas)
    xs = states["x"]
    Vs = states["V"]
    monodromy = sol.at_end()["V"]

    eigvals, eigvecs = np.linalg.eig(monodromy)
    i_triv = int(np.argmin(np.abs(eigvals - 1.0)))
    i_mu = 1 - i_triv
    mu = eigvals[i_mu]
    if abs(np.imag(mu)) > 1e-9:
        raise HypothesisError(f"complex nontrivial multiplier {mu}")
    mu = float(np.real(mu))
    if abs(mu - 1.0) <= 1e-6 or abs(mu + 1.0) <= 1e-6:
        raise HypothesisError(
            f"(A0) violated: nontrivial multiplier mu = {mu:.6g} is at +-1")

    # the trivial eigenvector must align with the flow direction
    f0 = sys.psi(xi[0], xi[1])
    res = np.linalg.norm(monodromy @ f0 - f0) / np.linalg.norm(f0)
    if res > 1e-6:
        raise HypothesisError(f"monodromy tangent-eigenvector residual {res:.3g}")

    y0 = np.real(eigvecs[:, i_mu])
    y0 = y0 / np.linalg.norm(y0)
    if f0[0] * y0[1] - f0[1] * y0[0] < 0:
        y0 = -y0  # orient the frame (dx0, y) positively

    ys = np.einsum("ijt,j->it", Vs, y0)
    dxs = sys.psi(xs[0], xs[1])
    jacs = sys.psi_jac(xs[0], xs[1])
    dys = np.einsum("ijt,jt->it", jacs, ys)

    area = 0.5 * np.sum(xs[0] * np.roll(xs[1], -1) - np.roll(xs[0], -1) * xs[1])
    ccw = bool(area > 0)

    lc = LimitCycle(
        sys=sys, xi0=xi, T0=float(T), thetas=thetas,
        x_samples=xs, dx_samples=dxs,
        monodromy=monodromy, mu=mu,
        y_samples=ys, dy_samples=dys,
        ccw=ccw, newton_steps=steps,
        _x_interp=PeriodicHermite(T, xs, dxs),
        # y is not periodic (y(T) = mu y(0)); interpolate over the closed
        # period with the Floquet endpoint appended
        _y_interp=CubicHermiteSpline(
            np.append(thetas, T),
            np.concatenate([ys, mu * ys[:, :1]], axis=1),
            np.concatenate([dys, mu * dys[:, :1]], axis=1),
            axis=1),
    )

    wr = _min_wronskian(lc)
    if wr < 1e-10:
        raise HypothesisError(f"dx0 and y nearly dependent (min scaled det {wr:.3g})")
    return lc


def _min_wronskian(lc: LimitCycle, n: int = 1000) -> float:
    th = np.linspace(0.0, lc.T0, n, endpoint=False)
    dx = lc.dx0(th)
    y = lc.y(th)
    det = dx[0] * y[1] - dx[1] * y[0]
    scale = np.linalg.norm(dx, axis=0) * np.linalg.norm(y, axis=0)
    return float(np.min(np.abs(det) / scale))


def floquet_companion(sys: SystemDef, lc: LimitCycle):
    """Floquet companion data (y samples over one period, multiplier).

    ``find_cycle`` already populates this on the LimitCycle; this accessor
    re-validates the Floquet relation y(T0) = mu * y(0).
    """
    if abs(lc.mu - 1.0) <= 1e-6:
        raise HypothesisError("monodromy defective: mu numerically equal to 1")
    yT = lc.monodromy @ lc.y_samples[:, 0]
    err = np.linalg.norm(yT - lc.mu * lc.y_samples[:, 0])
    if err > 1e-8:
        raise HypothesisError(f"Floquet relation residual {err:.3g}")
    return lc.y_samples, lc.mu


# ---------------------------------------------------------------------------
# Period-ratio detection (condition on T0/T1)


@dataclass(frozen=True)
class RatioResult:
    rational: bool
    l: int | None = None
    k: int | None = None
    T: float | None = None
    error: float | None = None
    both_prime: bool | None = None


def _is_prime(n: int) -> bool:
    if n < 2:
        return False
    return all(n % d for d in range(2, int(math.isqrt(n)) + 1))


def check_A1(T0: float, T1: float, tol: float = 1e-9,
             max_k: int = 1000) -> RatioResult:
    """Detect a rational period ratio T0/T1 = l/k in lowest terms.

    Returns the smallest k <= max_k within ``tol``; the common period is
    T = k*l*T0.  The hypothesis as stated asks for prime l, k; coprimality
    is what the common-period arithmetic needs, so we report lowest terms
    and flag whether both happen to be prime.
    """
    if T0 <= 0 or T1 <= 0:
        raise ValueError("periods must be positive")
    r = T0 / T1
    for k in range(1, max_k + 1):
        l = round(r * k)
        if l < 1:
            continue
        if abs(r - l / k) <= tol:
            frac = Fraction(l, k)
            l, k = frac.numerator, frac.denominator
            return RatioResult(True, l, k, k * l * T0, abs(r - l / k),
                               _is_prime(l) and _is_prime(k))
    return RatioResult(False)
