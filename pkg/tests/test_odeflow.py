"""Flow integration: composition, variational data, inverse identity."""

import numpy as np
import pytest

from cycleperturb import IntegratorConfig, integrate, make_system

_CFG = IntegratorConfig(rel_tol=1e-11, abs_tol=1e-13)


@pytest.fixture(scope="module")
def rng():
    return np.random.default_rng(42)


def _random_points(rng, n, lo=0.3, hi=1.5):
    r = rng.uniform(lo, hi, n)
    a = rng.uniform(0, 2 * np.pi, n)
    return np.stack([r * np.cos(a), r * np.sin(a)], axis=1)


def test_flow_composition(ex_sys, rng):
    pts = _random_points(rng, 8)
    for xi in pts:
        t1, t2 = 1.3, 3.1
        mid = integrate(ex_sys, xi, 0.0, t1, cfg=_CFG).at_end()["x"]
        end_a = integrate(ex_sys, mid, t1, t2, cfg=_CFG).at_end()["x"]
        end_b = integrate(ex_sys, xi, 0.0, t2, cfg=_CFG).at_end()["x"]
        assert np.linalg.norm(end_a - end_b) <= 1e-9


def test_inverse_identity(ex_sys, rng):
    """Forward variational matrix times the backward one is the identity.

    The product error is amplified by the condition number of V (~2e5 at
    t = 2*pi on the example), so this check needs a high-order method at a
    tight tolerance.
    """
    cfg = IntegratorConfig(rel_tol=1e-13, abs_tol=1e-14, method="DOP853")
    worst = 0.0
    for _ in range(100):
        xi = _random_points(rng, 1)[0]
        t = rng.uniform(0.1, 2 * np.pi)
        fwd = integrate(ex_sys, xi, 0.0, t, order=1, cfg=cfg).at_end()
        back = integrate(ex_sys, fwd["x"], t, 0.0, order=1,
                         cfg=cfg).at_end()
        res = np.linalg.norm(back["V"] @ fwd["V"] - np.eye(2))
        worst = max(worst, res)
    assert worst <= 1e-7


def test_variational_matches_finite_differences(ex_sys, rng):
    h = 1e-6
    for _ in range(5):
        xi = _random_points(rng, 1)[0]
        t = rng.uniform(0.5, 4.0)
        V = integrate(ex_sys, xi, 0.0, t, order=1, cfg=_CFG).at_end()["V"]
        for k in range(2):
            e = np.zeros(2)
            e[k] = h
            xp = integrate(ex_sys, xi + e, 0.0, t, cfg=_CFG).at_end()["x"]
            xm = integrate(ex_sys, xi - e, 0.0, t, cfg=_CFG).at_end()["x"]
            assert np.linalg.norm(V[:, k] - (xp - xm) / (2 * h)) <= 1e-4


def test_second_variational(ex_sys, rng):
    """W is symmetric in its derivative slots and matches FD of V."""
    h = 1e-5
    for _ in range(5):
        xi = _random_points(rng, 1)[0]
        t = rng.uniform(0.5, 3.0)
        st = integrate(ex_sys, xi, 0.0, t, order=2, cfg=_CFG).at_end()
        W = st["W"]
        assert np.max(np.abs(W - np.swapaxes(W, 1, 2))) <= 1e-9
        for k in range(2):
            e = np.zeros(2)
            e[k] = h
            Vp = integrate(ex_sys, xi + e, 0.0, t, order=1,
                           cfg=_CFG).at_end()["V"]
            Vm = integrate(ex_sys, xi - e, 0.0, t, order=1,
                           cfg=_CFG).at_end()["V"]
            fd = (Vp - Vm) / (2 * h)
            scale = max(1.0, np.max(np.abs(fd)))
            assert np.max(np.abs(W[:, :, k] - fd)) <= 1e-4 * scale


def test_divergence_state_matches_det_v(ex_sys, rng):
    """The separately integrated volume factor equals det V (Liouville)."""
    for _ in range(5):
        xi = _random_points(rng, 1)[0]
        t = rng.uniform(0.5, 4.0)
        st = integrate(ex_sys, xi, 0.0, t, order=1, divergence=True,
                       cfg=_CFG).at_end()
        det = np.linalg.det(st["V"])
        assert st["D"] == pytest.approx(det, rel=1e-7)


def test_batched_equals_single(ex_sys, rng):
    pts = _random_points(rng, 6)
    batch = integrate(ex_sys, pts, 0.0, 2.0, order=1, phi_integral=True,
                      eps=1e-3, cfg=_CFG).at_end()
    for i, xi in enumerate(pts):
        one = integrate(ex_sys, xi, 0.0, 2.0, order=1, phi_integral=True,
                        eps=1e-3, cfg=_CFG).at_end()
        assert np.linalg.norm(batch["x"][:, i] - one["x"]) <= 1e-8
        assert np.linalg.norm(batch["V"][:, :, i] - one["V"]) <= 1e-7
        assert np.linalg.norm(batch["I"][:, i] - one["I"]) <= 1e-8


def test_perturbed_flow_reduces_to_unperturbed(ex_sys, rng):
    xi = _random_points(rng, 1)[0]
    a = integrate(ex_sys, xi, 0.0, 3.0, eps=0.0, cfg=_CFG).at_end()["x"]
    b = integrate(ex_sys, xi, 0.0, 3.0, cfg=_CFG).at_end()["x"]
    assert np.linalg.norm(a - b) == 0.0


def test_blow_up_raises():
    from cycleperturb import BlowUpError
    sys_ = make_system(("x1^2", "0"), check_periodicity=False)
    with pytest.raises(BlowUpError):
        integrate(sys_, np.array([1.0, 0.0]), 0.0, 10.0)
