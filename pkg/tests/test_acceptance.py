"""Acceptance criteria: one test (and one printed pass/fail line) each."""

import time

import numpy as np

from conftest import record_acceptance
from cycleperturb import (IntegratorConfig, build_tubes, check_A1,
                          compute_eta, find_cycle, find_periodic, integrate,
                          irrational_example_system, irrational_scan,
                          least_period_check, make_system, theorem3_check,
                          time_map_degree, winding_degree)
from cycleperturb.bounds import BoundsReport, epsilon_star, k_gamma
from cycleperturb.conditions import lemma3_grid
from cycleperturb.degree import (brute_force_degree, circle_map_degree,
                                 sign_change_degree)

from test_conditions import (_eta_oracle, _random_bounded_system,
                             _with_params)
from test_degree import random_trig_field

TWO_PI = 2 * np.pi


def test_criterion_01_cycle_recovery(ex_sys):
    t0 = time.perf_counter()
    lc = find_cycle(ex_sys, (0.5, 0.5))
    elapsed = time.perf_counter() - t0
    period_err = abs(lc.T0 - TWO_PI)
    radial_err = float(np.max(np.abs(
        np.hypot(lc.x_samples[0], lc.x_samples[1]) - 1.0)))
    ok = period_err <= 1e-7 and radial_err <= 1e-7 and elapsed < 5.0
    record_acceptance(1, ok,
                      f"T0 err {period_err:.2e}, circle dist {radial_err:.2e},"
                      f" {elapsed:.2f}s")


def test_criterion_02_floquet_data(lc01):
    mu_rel = abs(lc01.mu - np.exp(-4 * np.pi)) / np.exp(-4 * np.pi)
    t = np.linspace(0, TWO_PI, 16, endpoint=False)
    y = lc01.y(t)
    ref = np.exp(-2 * t) * np.stack([np.sin(t), np.cos(t)])
    sin_angle = np.abs(y[0] * ref[1] - y[1] * ref[0]) / (
        np.hypot(*y) * np.hypot(*ref))
    ok = mu_rel <= 1e-4 and float(np.max(sin_angle)) <= 1e-4
    record_acceptance(2, ok, f"mu rel {mu_rel:.2e}, worst angle "
                             f"{np.max(sin_angle):.2e}")


def test_criterion_03_degree_chain(ex_sys, lc, T):
    degs = {}
    for r in (0.5, 1.2):
        def field(s, r=r):
            p = np.array([r * np.cos(2 * np.pi * s),
                          r * np.sin(2 * np.pi * s)])
            return ex_sys.psi(p[0], p[1])
        degs[r] = winding_degree(field)
    tm = {}
    for g in (0.2, -0.2):
        ts_g = build_tubes(lc, g)
        tm[g] = time_map_degree(ex_sys, ts_g, T)
    ok = degs == {0.5: 1, 1.2: 1} and tm == {0.2: 1, -0.2: 1}
    record_acceptance(3, ok, f"deg(psi,U)={degs}, deg(I-Omega(T))={tm}")


def test_criterion_04_floquet_route_closed_form(ex_sys, lc01, T):
    sys_a0 = _with_params(ex_sys, a=0.0)
    rep = theorem3_check(sys_a0, lc01, T, n_s=64, n_theta=64)
    ss = np.linspace(0, T, 65)[:, None]
    th = np.linspace(0, TWO_PI, 64, endpoint=False)[None, :]
    closed = 4 * np.pi * np.sin(th) ** 2 + np.cos(th) ** 2 * 0.5 * (
        np.exp(2 * (ss + th)) - np.exp(2 * (ss + th - 4 * np.pi)))
    rel = float(np.max(np.abs(rep.B2_values - closed) / np.abs(closed)))
    ok = (rel <= 1e-3 and rep.B2_min > 0
          and rep.degB3 == 2 and rep.degB3_sign_change == 2)
    record_acceptance(4, ok, f"closed-form rel err {rel:.2e}, "
                             f"B2_min {rep.B2_min:.3f}, degN "
                             f"{rep.degB3}/{rep.degB3_sign_change}")


def test_criterion_05_eta_oracle():
    rng = np.random.default_rng(321)
    worst = 0.0
    for _ in range(20):
        sys_ = _random_bounded_system(rng)
        xi = rng.uniform(-0.5, 0.5, 2)
        s = rng.uniform(0.0, 1.5)
        t = s + rng.uniform(0.2, 1.5)
        worst = max(worst, float(np.linalg.norm(
            compute_eta(sys_, t, s, xi) - _eta_oracle(sys_, t, s, xi))))

    sys0 = make_system(("0", "0"), ("sin(t)*x1 + cos(t)", "cos(2*t)*x2"),
                       TWO_PI)
    from scipy.integrate import quad
    Tz = 2 * TWO_PI
    worst0 = 0.0
    for s in (0.0, 2.0, 9.0):
        xi = rng.uniform(-1, 1, 2)
        field = compute_eta(sys0, Tz, s, xi) - compute_eta(sys0, 0.0, s, xi)
        ref = np.array([quad(lambda tau: sys0.phi(tau, xi[0], xi[1])[i],
                             0, Tz, epsabs=1e-12, limit=200)[0]
                        for i in range(2)])
        worst0 = max(worst0, float(np.linalg.norm(field - ref)))
    ok = worst <= 1e-6 and worst0 <= 1e-9
    record_acceptance(5, ok, f"oracle gap {worst:.2e}, "
                             f"zero-field gap {worst0:.2e}")


def test_criterion_06_frame_identity(ex_sys, lc01, T):
    sys05 = _with_params(ex_sys, a=0.05)
    ss = np.linspace(0, T, 16)
    thetas = np.linspace(0, TWO_PI, 16, endpoint=False)
    lhs, rhs = lemma3_grid(sys05, lc01, T, ss, thetas)
    rel = float(np.max(np.abs(lhs - rhs) / np.maximum(np.abs(rhs), 1e-9)))
    ok = rel <= 1e-5
    record_acceptance(6, ok, f"16x16 frame identity rel err {rel:.2e}")


def test_criterion_07_existence(solve_run):
    orbits, cont, elapsed = solve_run
    sides = sorted(o.side for o in orbits)
    res = max(o.residual for o in orbits)
    decreasing = True
    by_side = {"inside": [], "outside": []}
    for _, rung in cont.rungs:
        for orb in rung:
            by_side[orb.side].append(orb.hausdorff_to_cycle)
    for hs in by_side.values():
        decreasing &= len(hs) == 4 and all(
            a > b for a, b in zip(hs, hs[1:]))
    ok = (len(orbits) == 2 and sides == ["inside", "outside"]
          and res <= 1e-8 and decreasing and elapsed < 120.0)
    record_acceptance(7, ok, f"2 orbits ({'/'.join(sides)}), residual "
                             f"{res:.2e}, monotone convergence, "
                             f"{elapsed:.1f}s")


def test_criterion_08_admissible_bound(ex_sys, lc, ts, T, cond_refined,
                                       bounds_rep):
    eps1 = bounds_rep.eps_gamma
    # doubled grids: K0 from the refined scan, constants on n_t = 128,
    # displacement bound on a doubled boundary grid
    rep2 = BoundsReport(gamma=0.2, T=T)
    from cycleperturb.bounds import estimate_constants
    dense = estimate_constants(ex_sys, lc, ts, T, K0=cond_refined.K0_refined,
                               n_t=128)
    kg2, _ = k_gamma(ex_sys, lc, 0.2, T, n_theta=1024)
    rep2.M, rep2.Mp, rep2.Lp, rep2.Lpp = dense.M, dense.Mp, dense.Lp, \
        dense.Lpp
    rep2.K0, rep2.K_gamma = cond_refined.K0_refined, kg2
    eps2 = epsilon_star(rep2)
    drift = abs(eps2 - eps1) / eps1
    eps_run = min(1e-3, 0.5 * eps1)
    orbits = find_periodic(ex_sys, eps_run, T, lc=lc, gamma=0.2)
    ok = eps1 > 0 and drift < 0.05 and len(orbits) >= 1 and all(
        o.residual <= 1e-8 for o in orbits)
    record_acceptance(8, ok, f"eps_gamma {eps1:.3e} > 0, grid drift "
                             f"{drift:.2%}, solver ok at {eps_run:.1e}")


def test_criterion_09_least_period(ex_sys, solve_run):
    orbits, _, _ = solve_run
    results = [least_period_check(o, ex_sys.T1, sys=ex_sys, threshold=1e-4)
               for o in orbits]
    ok = all(r == (1, "PASS") for r in results)
    record_acceptance(9, ok, f"sub-period tests m=2..10 all fail: {results}")


def test_criterion_10_nonexistence_scan(solve_run):
    sys_irr, _ = irrational_example_system()
    ratio = check_A1(TWO_PI, sys_irr.T1, tol=1e-9)
    lc = find_cycle(sys_irr, (0.5, 0.5))
    ts = build_tubes(lc, 0.2)
    rows = irrational_scan(sys_irr, [TWO_PI, 2 * TWO_PI, 3 * TWO_PI],
                           [1e-3, 5e-4], lc=lc, ts=ts)
    floor = min(r["min_residual"] for r in rows)
    orbits, _, _ = solve_run  # rational control = criterion 7 run
    control = max(o.residual for o in orbits)
    ok = (not ratio.rational) and floor > 1e-4 and control <= 1e-8
    record_acceptance(10, ok, f"irrational floor {floor:.2e} > 1e-4, "
                              f"rational control residual {control:.2e}")


def test_criterion_11_degree_oracles():
    rng = np.random.default_rng(777)
    agree = True
    for _ in range(50):
        g, d = random_trig_field(rng)
        d1 = circle_map_degree(g, TWO_PI)
        d2 = sign_change_degree(g, TWO_PI)
        d3 = brute_force_degree(g, TWO_PI, n=1_000_000)
        agree &= d1 == d2 == d3 == d
    record_acceptance(11, agree, "50 random fields: winding, sign-change, "
                                 "1e6-sample brute force all agree")


def test_criterion_12_numerical_hygiene(ex_sys):
    rng = np.random.default_rng(99)
    cfg = IntegratorConfig(rel_tol=1e-13, abs_tol=1e-14, method="DOP853")
    worst_inv = 0.0
    for _ in range(100):
        r, a = rng.uniform(0.3, 1.5), rng.uniform(0, TWO_PI)
        xi = np.array([r * np.cos(a), r * np.sin(a)])
        t = rng.uniform(0.1, TWO_PI)
        fwd = integrate(ex_sys, xi, 0.0, t, order=1, cfg=cfg).at_end()
        back = integrate(ex_sys, fwd["x"], t, 0.0, order=1,
                         cfg=cfg).at_end()
        worst_inv = max(worst_inv, float(np.linalg.norm(
            back["V"] @ fwd["V"] - np.eye(2))))

    worst_sym = worst_fd = 0.0
    h = 1e-5
    tight = IntegratorConfig(rel_tol=1e-11, abs_tol=1e-13)
    for _ in range(5):
        r, a = rng.uniform(0.3, 1.2), rng.uniform(0, TWO_PI)
        xi = np.array([r * np.cos(a), r * np.sin(a)])
        t = rng.uniform(0.5, 3.0)
        W = integrate(ex_sys, xi, 0.0, t, order=2, cfg=tight).at_end()["W"]
        worst_sym = max(worst_sym, float(np.max(np.abs(
            W - np.swapaxes(W, 1, 2)))))
        for k in range(2):
            e = np.zeros(2)
            e[k] = h
            Vp = integrate(ex_sys, xi + e, 0.0, t, order=1,
                           cfg=tight).at_end()["V"]
            Vm = integrate(ex_sys, xi - e, 0.0, t, order=1,
                           cfg=tight).at_end()["V"]
            fd = (Vp - Vm) / (2 * h)
            scale = max(1.0, float(np.max(np.abs(fd))))
            worst_fd = max(worst_fd, float(np.max(np.abs(
                W[:, :, k] - fd))) / scale)
    ok = worst_inv <= 1e-7 and worst_fd <= 1e-4 and worst_sym <= 1e-9
    record_acceptance(12, ok, f"inverse identity {worst_inv:.2e}, "
                              f"hessian-vs-FD {worst_fd:.2e}, symmetry "
                              f"{worst_sym:.2e}")
