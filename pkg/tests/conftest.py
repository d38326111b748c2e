import numpy as np
import pytest

from radialks import kernels

BACKENDS = kernels.backends()


@pytest.fixture(params=sorted(BACKENDS))
def backend(request):
    return BACKENDS[request.param]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_band(rng, n, p, spd=False):
    """Dense random banded matrix (diagonally dominant)."""
    a = np.zeros((n, n))
    for d in range(-p, p + 1):
        a += np.diag(rng.standard_normal(n - abs(d)), d)
    if spd:
        a = a + a.T
    a += np.diag(np.sum(np.abs(a), axis=1) + 1.0)
    return a


# ------------------------------------------------------------- acceptance report

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        key = mark.args[0]
        status = "SKIP" if rep.skipped else ("PASS" if rep.passed else "FAIL")
        prev = _CRITERIA.get(key, (mark.args[1], []))
        prev[1].append(status)
        _CRITERIA[key] = prev


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_CRITERIA):
        title, statuses = _CRITERIA[key]
        if "FAIL" in statuses:
            status = "FAIL"
        elif all(s == "SKIP" for s in statuses):
            status = "SKIP"
        else:
            status = "PASS"
        terminalreporter.write_line(f"{status}  criterion {key:>2}: {title}")
