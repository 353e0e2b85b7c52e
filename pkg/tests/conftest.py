"""Session-wide hooks.

Every mu_d evaluation anywhere in the suite is checked against the
rect_small_bound inequality; the tally feeds acceptance criterion 9.
Acceptance tests record one verdict per criterion and the terminal summary
prints a PASS/FAIL line for each.
"""
from __future__ import annotations

import pytest

from salab import measure

BOUND_LOG = {"checked": 0, "violations": []}
ACCEPTANCE: dict[int, tuple[bool, str]] = {}
CRITERIA = range(1, 12)


def _bound_observer(G, Q, params, value):
    bound = measure.rect_small_bound(Q, params, G.k, G.n)
    BOUND_LOG["checked"] += 1
    ok = abs(value) <= bound if params.exact else abs(value) <= bound * (1 + 1e-9)
    if not ok:
        BOUND_LOG["violations"].append((G.k, G.n, params, value, bound))
        raise AssertionError(f"|mu_d| = {abs(value)} exceeds rect_small_bound {bound}")


measure.OBSERVERS.append(_bound_observer)


@pytest.fixture
def bound_log():
    return BOUND_LOG


def _line(num: int, passed: bool, detail: str) -> str:
    return f"{'PASS' if passed else 'FAIL'} criterion {num}: {detail}"


@pytest.fixture
def criterion():
    def record(num: int, passed: bool, detail: str) -> bool:
        ACCEPTANCE[num] = (bool(passed), detail)
        print(_line(num, passed, detail))
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    final = dict(ACCEPTANCE)
    if 9 in final:
        ok = BOUND_LOG["checked"] > 0 and not BOUND_LOG["violations"]
        final[9] = (final[9][0] and ok,
                    f"rect_small_bound held on all {BOUND_LOG['checked']} mu_d evaluations "
                    f"in this session, {len(BOUND_LOG['violations'])} violations")
    terminalreporter.section("acceptance criteria")
    for num in CRITERIA:
        if num in final:
            terminalreporter.write_line(_line(num, *final[num]))
        else:
            terminalreporter.write_line(_line(num, False, "not run in this session"))
