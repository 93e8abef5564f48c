import os

import pytest
from hypothesis import settings

from mems_quench.similarity import constants
from mems_quench.spectrum import find_spectrum

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")

# criterion number -> list of (check, passed); filled by test_acceptance.py
ACCEPTANCE = {}

SPECTRUM_RANGE = (1e-4, 1.5)


@pytest.fixture(scope="session")
def spectra():
    """Spectra for n = 2 and n = 3 on the full scan range (shared, computed once)."""
    workers = min(4, os.cpu_count() or 1)
    return {n: find_spectrum(constants(n), *SPECTRUM_RANGE, workers=workers) for n in (2, 3)}


def acceptance_lines():
    lines = []
    for k in sorted(ACCEPTANCE):
        checks = ACCEPTANCE[k]
        failed = [name for name, ok in checks if not ok]
        verdict = "PASS" if not failed else "FAIL"
        detail = f" ({', '.join(failed)})" if failed else ""
        lines.append(f"criterion {k:2d}: {verdict}{detail}")
    return lines


def pytest_terminal_summary(terminalreporter):
    lines = acceptance_lines()
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
