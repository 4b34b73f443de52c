import numpy as np
import pytest

from fdcstar.algebra import FiniteDimAlgebra
from fdcstar.search import OptConfig


@pytest.fixture
def fast():
    return OptConfig(restarts=3, max_iters=300)


@pytest.fixture
def M2():
    return FiniteDimAlgebra([2])


@pytest.fixture
def M23():
    return FiniteDimAlgebra([2, 3])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance bookkeeping: one summary line per numbered criterion
_ACCEPT = {}


@pytest.hookimpl(wrapper=True)
def pytest_runtest_makereport(item, call):
    rep = yield
    mark = item.get_closest_marker("acceptance")
    if mark is not None and (rep.when == "call" or rep.failed or rep.skipped):
        n, label = mark.args
        parts = _ACCEPT.setdefault(n, {})
        prev = parts.get(label, "PASS")
        state = "FAIL" if rep.failed else ("SKIP" if rep.skipped else "PASS")
        parts[label] = state if prev == "PASS" else prev
    return rep


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPT:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPT):
        parts = _ACCEPT[n]
        overall = "FAIL" if "FAIL" in parts.values() else (
            "SKIP" if "SKIP" in parts.values() else "PASS")
        detail = "; ".join(f"{k} {v}" for k, v in parts.items())
        terminalreporter.write_line(f"ACCEPTANCE {n}: {overall} ({detail})")
