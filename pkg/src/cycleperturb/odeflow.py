"""Flows of the autonomous and perturbed systems plus variational data.

The first variational matrix V(t) solves  V' = A(t) V,  V(t0) = I  with
A = psi'(x(t)) (+ eps * phi_x' for the perturbed flow), and the second
variational tensor W(t) solves

    W'[i,j,k] = sum_m A[i,m] W[m,j,k] + sum_{m,n} H[i,m,n] V[m,j] V[n,k]

with W(t0) = 0 and H = psi''.  All of these are integrated jointly with the
base state in one solver pass, and a whole batch of initial conditions can be
integrated as a single vectorized system.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .system import SystemDef

BLOWUP_NORM = 1e8


class BlowUpError(RuntimeError):
    """Integration aborted: the state left the working region."""

    def __init__(self, t_last: float, message: str | None = None):
        self.t_last = t_last
        super().__init__(message or f"solution blew up near t = {t_last:.6g}")


@dataclass(frozen=True)
class IntegratorConfig:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    max_step: float = np.inf
    dense_output: bool = False
    method: str = "RK45"

    def __post_init__(self):
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ValueError("tolerances must be positive")

    def tighter(self, factor: float) -> "IntegratorConfig":
        return replace(self, rel_tol=max(self.rel_tol / factor, 1e-13),
                       abs_tol=self.abs_tol / factor)


DEFAULT_CONFIG = IntegratorConfig()


def _inv2(V):
    """Inverse of a stack of 2x2 matrices shaped (2, 2, ...)."""
    det = V[0, 0] * V[1, 1] - V[0, 1] * V[1, 0]
    out = np.empty_like(V)
    out[0, 0] = V[1, 1]
    out[0, 1] = -V[0, 1]
    out[1, 0] = -V[1, 0]
    out[1, 1] = V[0, 0]
    return out / det


class FlowSolution:
    """Result of one (possibly batched) integration.

    Slices of the flat solver state are exposed as arrays shaped
    ``(..., N)`` for a batch of N initial conditions; the trailing axis is
    dropped for single-point integrations started from a shape-(2,) point.
    """

    def __init__(self, sol, n, order, phi_integral, squeeze, divergence=False):
        self._sol = sol
        self.n = n
        self.order = order
        self.phi_integral = phi_integral
        self.divergence = divergence
        self._squeeze = squeeze
        self.t = sol.t

    def _unpack(self, y):
        n = self.n
        cols = y.shape[1:]  # () for a single time, (nt,) for a grid
        parts = {}
        pos = 0

        def take(shape):
            nonlocal pos
            size = int(np.prod(shape)) * n
            block = y[pos:pos + size].reshape(shape + (n,) + cols)
            pos += size
            return block

        parts["x"] = take((2,))
        if self.order >= 1:
            parts["V"] = take((2, 2))
        if self.order >= 2:
            parts["W"] = take((2, 2, 2))
        if self.phi_integral:
            parts["I"] = take((2,))
        if self.divergence:
            parts["D"] = take(())
        if self._squeeze:
            # drop the batch axis, which sits right before the time columns
            ax = -1 - len(cols)
            parts = {k: np.squeeze(v, axis=ax) for k, v in parts.items()}
        return parts

    def at_end(self):
        return self.state_at(index=-1)

    def state_at(self, t: float | None = None, index: int | None = None):
        if index is not None:
            y = self._sol.y[:, index]
        else:
            y = self._sol.sol(t)
        return self._unpack(y)

    def states(self, t=None):
        """All requested output times at once; time is the last axis."""
        y = self._sol.y if t is None else self._sol.sol(np.asarray(t))
        return self._unpack(y)


def integrate(sys: SystemDef, xi, t0: float, t1: float, *,
              eps: float = 0.0, order: int = 0, phi_integral: bool = False,
              divergence: bool = False,
              t_eval: Sequence[float] | None = None,
              cfg: IntegratorConfig | None = None,
              dense: bool = False) -> FlowSolution:
    """Integrate the flow (optionally with variational data) from t0 to t1.

    ``xi`` is a single point (shape (2,)) or a batch (shape (N, 2)).
    ``order`` 0/1/2 selects base flow, first, or second variational data;
    second-order data is only defined for the unperturbed flow.
    ``phi_integral`` additionally accumulates  I(t) = int_0^t V^-1 phi  which
    is the running integral of the averaging field.
    ``divergence`` accumulates D(t) = det V(t) through the trace identity
    D' = tr(A) D, which stays relatively accurate where direct inversion of
    a strongly contracting V would not.
    """
    if order >= 2 and eps != 0.0:
        raise ValueError("second variational data is only supported at eps = 0")
    if phi_integral and order < 1:
        raise ValueError("phi_integral needs the variational matrix (order >= 1)")
    if divergence and order < 1:
        raise ValueError("divergence needs the field Jacobian (order >= 1)")
    cfg = cfg or DEFAULT_CONFIG

    xi = np.asarray(xi, dtype=float)
    squeeze = xi.ndim == 1
    pts = xi.reshape(1, 2) if squeeze else xi
    n = pts.shape[0]

    y0 = [pts.T.reshape(2 * n)]
    if order >= 1:
        V0 = np.zeros((2, 2, n))
        V0[0, 0] = V0[1, 1] = 1.0
        y0.append(V0.reshape(4 * n))
    if order >= 2:
        y0.append(np.zeros(8 * n))
    if phi_integral:
        y0.append(np.zeros(2 * n))
    if divergence:
        y0.append(np.ones(n))
    y0 = np.concatenate(y0)

    nV = 4 * n if order >= 1 else 0
    nW = 8 * n if order >= 2 else 0

    def rhs(t, y):
        x = y[:2 * n].reshape(2, n)
        x1, x2 = x[0], x[1]
        f = sys.psi(x1, x2)
        if eps != 0.0:
            f = f + eps * sys.phi(t, x1, x2)
        out = [f.reshape(2 * n)]
        if order >= 1:
            V = y[2 * n:2 * n + nV].reshape(2, 2, n)
            A = sys.psi_jac(x1, x2)
            if eps != 0.0:
                A = A + eps * sys.phi_jac_x(t, x1, x2)
            dV = np.einsum("imk,mjk->ijk", A, V)
            out.append(dV.reshape(4 * n))
        if order >= 2:
            W = y[2 * n + nV:2 * n + nV + nW].reshape(2, 2, 2, n)
            H = sys.psi_hess(x1, x2)
            dW = (np.einsum("imk,mjlk->ijlk", A, W)
                  + np.einsum("imnk,mjk,nlk->ijlk", H, V, V))
            out.append(dW.reshape(8 * n))
        if phi_integral:
            Vinv = _inv2(V)
            Phi = np.einsum("ijk,jk->ik", Vinv, sys.phi(t, x1, x2))
            out.append(Phi.reshape(2 * n))
        if divergence:
            nI = 2 * n if phi_integral else 0
            D = y[2 * n + nV + nW + nI:]
            out.append(np.trace(A) * D)
        return np.concatenate(out)

    def blowup(t, y):
        return BLOWUP_NORM - np.max(np.abs(y[:2 * n]))

    blowup.terminal = True

    sol = solve_ivp(rhs, (t0, t1), y0, method=cfg.method,
                    rtol=cfg.rel_tol, atol=cfg.abs_tol, max_step=cfg.max_step,
                    dense_output=dense or cfg.dense_output,
                    t_eval=t_eval, events=blowup)
    if sol.status == 1:  # terminated by the blow-up event
        raise BlowUpError(float(sol.t_events[0][0]))
    if not sol.success:
        raise BlowUpError(float(sol.t[-1]), f"integration failed: {sol.message}")
    return FlowSolution(sol, n, order, phi_integral, squeeze, divergence)


# ---------------------------------------------------------------------------
# Spec-level convenience wrappers


def flow(sys: SystemDef, xi, t0: float, t1: float,
         cfg: IntegratorConfig | None = None) -> np.ndarray:
    if t0 == t1:
        return np.asarray(xi, dtype=float)
    return integrate(sys, xi, t0, t1, cfg=cfg).at_end()["x"]


def flow_variational(sys: SystemDef, xi, t0: float, t1: float,
                     cfg: IntegratorConfig | None = None):
    if t0 == t1:
        return np.asarray(xi, dtype=float), np.eye(2)
    st = integrate(sys, xi, t0, t1, order=1, cfg=cfg).at_end()
    return st["x"], st["V"]


def flow_second_variational(sys: SystemDef, xi, t0: float, t1: float,
                            cfg: IntegratorConfig | None = None):
    if t0 == t1:
        return np.asarray(xi, dtype=float), np.eye(2), np.zeros((2, 2, 2))
    st = integrate(sys, xi, t0, t1, order=2, cfg=cfg).at_end()
    return st["x"], st["V"], st["W"]


def flow_perturbed(sys: SystemDef, eps: float, xi, t0: float, t1: float,
                   cfg: IntegratorConfig | None = None) -> np.ndarray:
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    if t0 == t1:
        return np.asarray(xi, dtype=float)
    return integrate(sys, xi, t0, t1, eps=eps, cfg=cfg).at_end()["x"]


def flow_perturbed_variational(sys: SystemDef, eps: float, xi, t0: float,
                               t1: float, cfg: IntegratorConfig | None = None):
    if t0 == t1:
        return np.asarray(xi, dtype=float), np.eye(2)
    st = integrate(sys, xi, t0, t1, eps=eps, order=1, cfg=cfg).at_end()
    return st["x"], st["V"]
