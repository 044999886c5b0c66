"""System definitions: the planar field, its perturbation and derived data.

A :class:`SystemDef` bundles the autonomous field ``psi(x1, x2)``, the
time-periodic perturbation ``phi(t, x1, x2)`` with declared period ``T1``,
and the symbolically derived Jacobian / Hessian data the variational
equations need.  Everything is compiled to numpy-vectorized callables at
construction time and immutable afterwards.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import exprlang
from .exprlang import Expr, diff, parse

try:
    import tomllib as _toml
except ModuleNotFoundError:  # Python < 3.11
    import tomli as _toml


class ConfigError(Exception):
    pass


def _stack(fns, shape, *args):
    """Evaluate a nested tuple of compiled scalar functions, broadcasting
    constants up to the common array shape of the arguments."""
    b = np.broadcast(*[np.asarray(a) for a in args])
    out = np.empty(shape + b.shape)
    for idx, fn in fns:
        out[idx] = fn(*args)
    return out


def _flatten(tree, prefix=()):
    if isinstance(tree, tuple):
        for i, sub in enumerate(tree):
            yield from _flatten(sub, prefix + (i,))
    else:
        yield prefix, tree


@dataclass(frozen=True)
class SystemDef:
    """Immutable parsed system.  Use :func:`make_system` to build one."""

    psi_exprs: tuple[Expr, Expr]
    phi_exprs: tuple[Expr, Expr]
    psi_jac_exprs: tuple  # 2x2
    psi_hess_exprs: tuple  # 2x2x2
    phi_jac_x_exprs: tuple  # 2x2
    params: Mapping[str, float]
    T1: float
    warnings: tuple[str, ...] = ()
    _compiled: dict = field(default_factory=dict, repr=False, compare=False)

    # -- evaluation ---------------------------------------------------------

    def _fns(self, key, tree, args):
        cache = self._compiled
        if key not in cache:
            cache[key] = [
                (idx, exprlang.compile_expr(e, args, self.params))
                for idx, e in _flatten(tree)
            ]
        return cache[key]

    def psi(self, x1, x2):
        """psi(x) with shape (2,) + broadcast(x1, x2)."""
        return _stack(self._fns("psi", self.psi_exprs, ("x1", "x2")), (2,), x1, x2)

    def psi_jac(self, x1, x2):
        return _stack(self._fns("psi_jac", self.psi_jac_exprs, ("x1", "x2")),
                      (2, 2), x1, x2)

    def psi_hess(self, x1, x2):
        return _stack(self._fns("psi_hess", self.psi_hess_exprs, ("x1", "x2")),
                      (2, 2, 2), x1, x2)

    def phi(self, t, x1, x2):
        return _stack(self._fns("phi", self.phi_exprs, ("t", "x1", "x2")),
                      (2,), t, x1, x2)

    def phi_jac_x(self, t, x1, x2):
        return _stack(self._fns("phi_jac_x", self.phi_jac_x_exprs, ("t", "x1", "x2")),
                      (2, 2), t, x1, x2)


def make_system(psi: tuple[str, str], phi: tuple[str, str] = ("0", "0"),
                T1: float = 1.0, params: Mapping[str, float] | None = None,
                check_periodicity: bool = True) -> SystemDef:
    """Parse the field expressions and derive Jacobians/Hessian symbolically."""
    params = dict(params or {})
    x_vars = {"x1", "x2"} | set(params)
    tx_vars = {"t"} | x_vars
    warnings: list[str] = []

    psi_e = tuple(parse(s, x_vars) for s in psi)
    phi_e = tuple(parse(s, tx_vars) for s in phi)

    psi_jac = tuple(
        tuple(diff(psi_e[i], v, warnings) for v in ("x1", "x2")) for i in range(2)
    )
    psi_hess = tuple(
        tuple(tuple(diff(psi_jac[i][j], v, warnings) for v in ("x1", "x2"))
              for j in range(2))
        for i in range(2)
    )
    phi_jac_x = tuple(
        tuple(diff(phi_e[i], v, warnings) for v in ("x1", "x2")) for i in range(2)
    )

    if T1 <= 0:
        raise ConfigError(f"T1 must be positive, got {T1}")

    sys = SystemDef(psi_e, phi_e, psi_jac, psi_hess, phi_jac_x,
                    params, float(T1), tuple(warnings))
    if check_periodicity:
        _spot_check_periodicity(sys)
    return sys


def _spot_check_periodicity(sys: SystemDef, tol: float = 1e-9) -> None:
    rng = np.random.default_rng(0)
    t = rng.uniform(0.0, 3.0 * sys.T1, 32)
    x1 = rng.uniform(-2.0, 2.0, 32)
    x2 = rng.uniform(-2.0, 2.0, 32)
    err = np.max(np.abs(sys.phi(t + sys.T1, x1, x2) - sys.phi(t, x1, x2)))
    if err > tol:
        raise ConfigError(
            f"phi is not T1-periodic: max |phi(t+T1,x)-phi(t,x)| = {err:.3g} > {tol:g}")


# ---------------------------------------------------------------------------
# Config files


def load_config(path_or_text) -> tuple[SystemDef, dict]:
    """Load a TOML config; returns (SystemDef, full config dict).

    Required layout::

        [system]        psi1 = "..."   psi2 = "..."
        [perturbation]  phi1 = "..."   phi2 = "..."   T1 = <real>
        [params]        a = 0.1  ...

    Other sections (cycle, tubes, conditions, bounds, solve, scan) carry
    numeric knobs for the CLI and are passed through untouched.
    """
    if isinstance(path_or_text, str) and "\n" in path_or_text:
        cfg = _toml.load(io.BytesIO(path_or_text.encode()))
    else:
        with open(path_or_text, "rb") as fh:
            cfg = _toml.load(fh)
    try:
        system = cfg["system"]
        pert = cfg.get("perturbation", {})
        psi = (system["psi1"], system["psi2"])
        phi = (pert.get("phi1", "0"), pert.get("phi2", "0"))
        T1 = float(pert.get("T1", 1.0))
    except KeyError as exc:
        raise ConfigError(f"missing config key {exc}") from None
    params = {k: float(v) for k, v in cfg.get("params", {}).items()}
    return make_system(psi, phi, T1, params), cfg


# Bundled example: the cubic field with the unit-circle limit cycle, perturbed
# by a 4*pi-periodic forcing (rational period ratio T0/T1 = 1/2).
_PHI1 = "x2*(x1*cos(t) - x2*sin(t) + a*sin(t/2)) + x1*(x1*sin(t) + x2*cos(t))"
_PHI2 = "-x1*(x1*cos(t) - x2*sin(t) + a*sin(t/2)) + x2*(x1*sin(t) + x2*cos(t))"

EXAMPLE_CONFIG = f"""\
# Unit-circle limit cycle with a 4*pi-periodic perturbation.
[system]
psi1 = "x2 - x1*(x1^2 + x2^2 - 1)"
psi2 = "-x1 - x2*(x1^2 + x2^2 - 1)"

[perturbation]
phi1 = "{_PHI1}"
phi2 = "{_PHI2}"
T1 = {4 * math.pi!r}

[params]
a = 0.1

[cycle]
seed = [0.5, 0.5]

[tubes]
gamma = 0.2

[solve]
eps = 1e-3
eps_ladder = [4e-3, 2e-3, 1e-3, 5e-4]
"""

# Same autonomous field, but the forcing period is 4*pi*sqrt(2): the ratio
# T0/T1 = 1/(2*sqrt(2)) is irrational, so no periodic solutions converge to
# the cycle; used by the nonexistence scan.
_OMEGA = math.sqrt(2.0) / 2.0
_IPHI1 = "x2*(x1*cos(w*t) - x2*sin(w*t) + a*sin(w*t/2)) + x1*(x1*sin(w*t) + x2*cos(w*t))"
_IPHI2 = "-x1*(x1*cos(w*t) - x2*sin(w*t) + a*sin(w*t/2)) + x2*(x1*sin(w*t) + x2*cos(w*t))"

IRRATIONAL_CONFIG = f"""\
# Irrational forcing/cycle period ratio: nonexistence scan target.
[system]
psi1 = "x2 - x1*(x1^2 + x2^2 - 1)"
psi2 = "-x1 - x2*(x1^2 + x2^2 - 1)"

[perturbation]
phi1 = "{_IPHI1}"
phi2 = "{_IPHI2}"
T1 = {4 * math.pi / _OMEGA!r}

[params]
a = 0.1
w = {_OMEGA!r}

[cycle]
seed = [0.5, 0.5]

[tubes]
gamma = 0.2

[scan]
eps_ladder = [1e-3, 5e-4]
n_periods = 3
"""


def example_system() -> tuple[SystemDef, dict]:
    return load_config(EXAMPLE_CONFIG)


def irrational_example_system() -> tuple[SystemDef, dict]:
    return load_config(IRRATIONAL_CONFIG)
