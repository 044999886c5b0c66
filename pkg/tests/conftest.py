"""Shared fixtures: the bundled example system and its derived artifacts.

Heavy pipeline stages (cycle, tubes, condition scans, constant estimation,
solver runs) are session-scoped so the unit tests and the acceptance tests
share one computation.
"""

import time

import numpy as np
import pytest

from cycleperturb import (build_tubes, check_A1, check_A2_A3, continuation,
                          estimate_constants, example_system, find_cycle,
                          find_periodic)

# ---------------------------------------------------------------------------
# Acceptance reporting: one visible pass/fail line per criterion.

_ACCEPTANCE_LINES: dict[int, str] = {}


def record_acceptance(num: int, ok: bool, detail: str) -> None:
    line = f"criterion {num:2d}: {'PASS' if ok else 'FAIL'} - {detail}"
    _ACCEPTANCE_LINES[num] = line
    print(line)
    assert ok, line


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _ACCEPTANCE_LINES:
        terminalreporter.write_sep("-", "acceptance criteria")
        for num in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(_ACCEPTANCE_LINES[num])


# ---------------------------------------------------------------------------
# Example-system pipeline fixtures.


@pytest.fixture(scope="session")
def ex_sys():
    sys_, _ = example_system()
    return sys_


@pytest.fixture(scope="session")
def lc(ex_sys):
    """Cycle from the bundled config's seed."""
    return find_cycle(ex_sys, (0.5, 0.5))


@pytest.fixture(scope="session")
def lc01(ex_sys):
    """Cycle from seed (0, 1): parametrization (sin t, cos t) exactly."""
    return find_cycle(ex_sys, (0.0, 1.0))


@pytest.fixture(scope="session")
def T(ex_sys, lc):
    ratio = check_A1(lc.T0, ex_sys.T1)
    assert ratio.rational and (ratio.l, ratio.k) == (1, 2)
    return ratio.T


@pytest.fixture(scope="session")
def ts(lc):
    return build_tubes(lc, 0.2)


@pytest.fixture(scope="session")
def cond_refined(ex_sys, lc, T):
    """Direct-route conditions with the doubled-grid stability probe."""
    return check_A2_A3(ex_sys, lc, T, refine_check=True)


@pytest.fixture(scope="session")
def bounds_rep(ex_sys, lc, ts, T, cond_refined):
    return estimate_constants(ex_sys, lc, ts, T, K0=cond_refined.K0)


@pytest.fixture(scope="session")
def solve_run(ex_sys, lc, ts, T):
    """find_periodic at eps=1e-3 plus the continuation ladder, timed."""
    t0 = time.perf_counter()
    orbits = find_periodic(ex_sys, 1e-3, T, lc=lc, gamma=0.2, restrict=ts)
    cont = continuation(ex_sys, T, [4e-3, 2e-3, 1e-3, 5e-4], lc=lc,
                        gamma=0.2)
    elapsed = time.perf_counter() - t0
    return orbits, cont, elapsed
