"""Limit-cycle location, Floquet data, period-ratio detection."""

import math

import numpy as np
import pytest

from cycleperturb import (HypothesisError, check_A1, find_cycle,
                          floquet_companion, make_system)

TWO_PI = 2 * math.pi


@pytest.mark.parametrize("seed", [(0.5, 0.5), (1.2, 0.0), (0.1, -0.3)])
def test_cycle_from_various_seeds(ex_sys, seed):
    lc = find_cycle(ex_sys, seed)
    assert lc.T0 == pytest.approx(TWO_PI, abs=1e-7)
    r = np.hypot(lc.x_samples[0], lc.x_samples[1])
    assert np.max(np.abs(r - 1.0)) <= 1e-7
    assert not lc.ccw  # the example cycle runs clockwise


def test_multiplier(lc):
    assert lc.mu == pytest.approx(math.exp(-4 * math.pi), rel=1e-4)


def test_interpolant_accuracy(lc01):
    """From seed (0,1) the cycle is exactly (sin t, cos t)."""
    t = np.linspace(0, 3 * TWO_PI, 500)
    x = lc01.x0(t)
    assert np.max(np.abs(x[0] - np.sin(t))) <= 1e-8
    assert np.max(np.abs(x[1] - np.cos(t))) <= 1e-8
    dx = lc01.dx0(t)
    assert np.max(np.abs(dx[0] - np.cos(t))) <= 1e-7


def test_floquet_companion_direction(lc01):
    """y(t) is parallel to e^{-2t} (sin t, cos t) for the example."""
    t = np.linspace(0, TWO_PI, 16, endpoint=False)
    y = lc01.y(t)
    ref = np.exp(-2 * t) * np.stack([np.sin(t), np.cos(t)])
    cross = y[0] * ref[1] - y[1] * ref[0]
    angle = np.abs(cross) / (np.hypot(*y) * np.hypot(*ref))
    assert np.max(angle) <= 1e-6


def test_floquet_endpoint_scaling(lc):
    """y is not periodic: y(t + T0) = mu * y(t), including at the seam."""
    for t in (0.0, 1.0, lc.T0 - 1e-9):
        lhs = lc.y(t + lc.T0)
        rhs = lc.mu * lc.y(t)
        assert np.linalg.norm(lhs - rhs) <= 1e-9 * np.linalg.norm(rhs) + 1e-15


def test_companion_solves_linearization(ex_sys, lc):
    """Finite-difference check of dy/dt = psi'(x0(t)) y."""
    h = 1e-6
    for t in (0.3, 2.0, 5.0):
        dy = (lc.y(t + h) - lc.y(t - h)) / (2 * h)
        x = lc.x0(t)
        rhs = ex_sys.psi_jac(x[0], x[1]) @ lc.y(t)
        assert np.linalg.norm(dy - rhs) <= 1e-4 * max(1.0,
                                                      np.linalg.norm(rhs))


def test_floquet_companion_function(ex_sys, lc):
    y_samples, mu = floquet_companion(ex_sys, lc)
    assert mu == lc.mu
    assert np.allclose(y_samples, lc.y_samples)


def test_pure_rotation_rejected():
    sys_ = make_system(("x2", "-x1"), check_periodicity=False)
    with pytest.raises(HypothesisError):
        find_cycle(sys_, (0.5, 0.5))


def test_unstable_cycle_between_attractors():
    """Repelling cycle at r=1 inside an attracting one at r=1.3."""
    g = "((x1^2+x2^2) - 1)*((x1^2+x2^2) - 1.69)"
    sys_ = make_system((f"x2 - x1*{g}", f"-x1 - x2*{g}"),
                       check_periodicity=False)
    lc = find_cycle(sys_, (1.0, 0.0))
    r = np.hypot(lc.x_samples[0], lc.x_samples[1])
    assert np.max(np.abs(r - 1.0)) <= 1e-6
    assert lc.mu > 1.0  # repelling


def test_check_a1_rational():
    r = check_A1(TWO_PI, 2 * TWO_PI)
    assert r.rational and (r.l, r.k) == (1, 2)
    assert r.T == pytest.approx(2 * TWO_PI)
    r = check_A1(3.0, 2.0)
    assert (r.l, r.k) == (3, 2) and r.T == pytest.approx(18.0)
    assert r.both_prime


def test_check_a1_irrational():
    r = check_A1(TWO_PI, TWO_PI * math.sqrt(2), tol=1e-9, max_k=1000)
    assert not r.rational


def test_check_a1_validates():
    with pytest.raises(ValueError):
        check_A1(-1.0, 2.0)
