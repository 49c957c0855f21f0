import numpy as np
import pytest

from opspaces.dyadic import auto_tree
from opspaces.space import build_space
from opspaces.spectral import spectral_decompose
from opspaces.symbols import build_partition_of_unity


@pytest.fixture(scope="session")
def c8():
    return build_space("cycle", 8)


@pytest.fixture(scope="session")
def c64():
    return build_space("cycle", 64)


@pytest.fixture(scope="session")
def spec64(c64):
    return spectral_decompose(c64)


@pytest.fixture(scope="session")
def spec8(c8):
    return spectral_decompose(c8)


@pytest.fixture(scope="session")
def pou():
    return build_partition_of_unity()


@pytest.fixture(scope="session")
def tree64(c64):
    return auto_tree(c64)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def midband(spec, rng, count=None):
    """Random combinations of the middle 80% of the positive spectrum."""
    lam = spec.eigenvalues
    pos = lam > spec.kernel_tol
    lo, hi = np.quantile(lam[pos], [0.1, 0.9])
    mid = pos & (lam >= lo) & (lam <= hi)
    shape = (spec.size,) if count is None else (spec.size, count)
    c = np.zeros(shape)
    c[mid] = rng.standard_normal((int(mid.sum()),) + shape[1:])
    return spec.eigenvectors @ c


# acceptance summary: one line per criterion test in test_acceptance.py
_ACCEPTANCE = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion_" not in report.nodeid:
        return
    if report.when == "call" or report.failed:
        name = report.nodeid.split("::test_criterion_")[1]
        num, _, title = name.partition("_")
        detail = dict(report.user_properties).get("detail", "")
        prev = _ACCEPTANCE.get(report.nodeid)
        if prev is None or prev[2] == "PASS":
            _ACCEPTANCE[report.nodeid] = (int(num), title.replace("_", " "), "PASS" if report.passed else "FAIL", detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for num, title, outcome, detail in sorted(_ACCEPTANCE.values()):
        terminalreporter.write_line(f"criterion {num:2d} {outcome}: {title}" + (f" | {detail}" if detail else ""))
