import numpy as np
import pytest

from activematch.core import MatchConstraints, SuitabilityMatrix

_ACCEPTANCE: dict[str, tuple[str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    number, title = marker.args
    key = f"{number}"
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[report.outcome]
        prev = _ACCEPTANCE.get(key, ("SKIP", title))[0]
        # several tests may share a criterion; any failure sticks
        rank = {"SKIP": 0, "PASS": 1, "FAIL": 2}
        _ACCEPTANCE[key] = (max(prev, status, key=rank.get), title)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_ACCEPTANCE, key=int):
        status, title = _ACCEPTANCE[key]
        terminalreporter.write_line(f"[{status}] criterion {key}: {title}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_instance(gen: np.random.Generator, max_dim: int = 5):
    """Random small grid with random bounds (possibly infeasible)."""
    n, m = (int(x) for x in gen.integers(1, max_dim + 1, size=2))
    p_min = int(gen.integers(0, m + 1))
    p_max = int(gen.integers(p_min, m + 1))
    r_min = int(gen.integers(0, n + 1))
    r_max = int(gen.integers(r_min, n + 1))
    return gen.normal(size=(n, m)), MatchConstraints(r_min, r_max, p_min, p_max)


@pytest.fixture
def small_dataset():
    gen = np.random.default_rng(3)
    values = gen.normal(size=(6, 4)) @ np.ones((4, 4)) + gen.normal(size=(6, 4))
    return SuitabilityMatrix.from_dense(values)
