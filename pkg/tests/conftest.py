"""Shared fixtures and the acceptance summary hook."""

import numpy as np
import pytest


def random_unitary(n: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-ish unitary from the QR of a complex Gaussian matrix."""
    z = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_dense(n_y: int, n_a: int, rng: np.random.Generator) -> np.ndarray:
    return rng.normal(size=(n_y, n_a)) + 1j * rng.normal(size=(n_y, n_a))


def random_coeffs(n: int, rng: np.random.Generator) -> np.ndarray:
    return rng.normal(size=n) + 1j * rng.normal(size=n)


@pytest.fixture
def rng():
    return np.random.default_rng(20260819)


# acceptance tests register one line each; printed after the run so the
# per-criterion verdicts survive pytest's output capture
_ACCEPTANCE_LINES = {}


def record_criterion(number: int, label: str):
    _ACCEPTANCE_LINES[number] = label


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    reports = []
    for status in ("passed", "failed", "error"):
        reports.extend(terminalreporter.stats.get(status, []))
    verdicts = {}
    for rep in reports:
        if getattr(rep, "when", "call") != "call":
            continue
        nodeid = getattr(rep, "nodeid", "")
        if "test_acceptance.py::test_criterion_" in nodeid:
            num = int(nodeid.rsplit("_", 1)[1].split("[")[0])
            verdicts[num] = "PASS" if rep.passed else "FAIL"
    if not verdicts:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for num in sorted(verdicts):
        label = _ACCEPTANCE_LINES.get(num, "")
        terminalreporter.write_line(f"criterion {num}: {verdicts[num]}  {label}")
