"""Topological degree: three independent methods must agree."""

import numpy as np
import pytest

from cycleperturb.degree import (DegenerateFieldError, batched_winding,
                                 brute_force_degree, circle_map_degree,
                                 sign_change_degree, winding_degree)

TWO_PI = 2 * np.pi


def random_trig_field(rng):
    """Nonvanishing trigonometric boundary field with a known degree.

    A dominant harmonic of order d plus strictly smaller-mass noise gives a
    field homotopic to e^{i d theta}, hence degree d.
    """
    d = int(rng.integers(-3, 4))
    n_noise = int(rng.integers(1, 4))
    ks = rng.integers(-4, 5, n_noise)
    amps = rng.uniform(0.05, 0.25, n_noise)
    phs = rng.uniform(0, TWO_PI, n_noise + 1)

    def g(theta):
        z = np.exp(1j * (d * np.asarray(theta, dtype=float) + phs[0]))
        for k, a, p in zip(ks, amps, phs[1:]):
            z = z + a * np.exp(1j * (k * np.asarray(theta) + p))
        return np.stack([np.real(z), np.imag(z)])

    return g, d


def test_three_methods_agree_on_50_random_fields():
    rng = np.random.default_rng(2024)
    for _ in range(50):
        g, d = random_trig_field(rng)
        assert circle_map_degree(g, TWO_PI) == d
        assert sign_change_degree(g, TWO_PI) == d
        assert brute_force_degree(g, TWO_PI, n=10_000) == d


def test_brute_force_full_resolution():
    rng = np.random.default_rng(5)
    g, d = random_trig_field(rng)
    assert brute_force_degree(g, TWO_PI, n=1_000_000) == d


def test_orientation_flip():
    rng = np.random.default_rng(6)
    g, d = random_trig_field(rng)
    assert circle_map_degree(g, TWO_PI, orientation=-1) == -d
    assert sign_change_degree(g, TWO_PI, orientation=-1) == -d


def test_homotopy_invariance():
    """Degree is constant along a nonvanishing homotopy."""
    def make(lam):
        def g(theta):
            z = np.exp(2j * np.asarray(theta)) + lam * 0.4 * np.exp(
                -1j * np.asarray(theta))
            return np.stack([np.real(z), np.imag(z)])
        return g

    degs = {circle_map_degree(make(lam), TWO_PI)
            for lam in np.linspace(0, 1, 6)}
    assert degs == {2}


def test_winding_degree_callable():
    def f(s):
        th = 2 * np.pi * s
        return np.array([np.cos(3 * th), np.sin(3 * th)])
    assert winding_degree(f) == 3


def test_batched_winding_matches():
    rng = np.random.default_rng(11)
    for _ in range(10):
        g, d = random_trig_field(rng)
        assert batched_winding(lambda ss: g(TWO_PI * ss)) == d


def test_degenerate_field_rejected():
    def zero(theta):
        th = np.asarray(theta, dtype=float)
        return np.stack([0.0 * th, 0.0 * th])

    with pytest.raises(DegenerateFieldError):
        batched_winding(zero)
    with pytest.raises(DegenerateFieldError):
        winding_degree(lambda s: np.zeros(2))
