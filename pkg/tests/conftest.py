import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from sparsepf2.irregular import IrregularTensor, SparseSlice

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_runtest_logreport(report):
    crit = getattr(report, "criterion", None)
    if crit is not None and (report.when == "call" or report.failed):
        # a criterion spanning several tests fails if any of them fails
        if _criteria.get(crit) != "failed":
            _criteria[crit] = report.outcome


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        rep.criterion = marker.args


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for (number, title), outcome in sorted(_criteria.items()):
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"criterion {number}: {status}  {title}")


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def random_tensor(rng, K, J, R, I_range=(None, 15), density=0.5) -> IrregularTensor:
    """Random irregular tensor with every I_k >= R after zero-row filtering."""
    lo = R if I_range[0] is None else I_range[0]
    slices = []
    for _ in range(K):
        while True:
            I = int(rng.integers(lo, I_range[1] + 1))
            A = rng.random((I, J)) * (rng.random((I, J)) < density)
            A[A.sum(axis=1) == 0, rng.integers(J)] = rng.random() + 0.1
            s = SparseSlice.from_dense(A)
            if s.n_rows >= R:
                break
        slices.append(s)
    return IrregularTensor.from_slices(slices)


def random_orthonormal(rng, n, r) -> np.ndarray:
    q, _ = np.linalg.qr(rng.standard_normal((n, r)))
    return q
