from functools import lru_cache

import pytest

from stokes_darcy.experiments import make_system


@lru_cache(maxsize=None)
def cached_system(example=3, n=8, nu=1.0, kappa=1.0, alpha=None):
    return make_system(example, n, nu, kappa, alpha)


@pytest.fixture
def system_factory():
    return cached_system


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def record_acceptance():
    """Store one pass/fail line per acceptance criterion for the terminal summary."""
    def record(key: str, title: str, passed: bool, detail: str = "") -> bool:
        line = f"[{key}] {title}: {'PASS' if passed else 'FAIL'}" + (f" ({detail})" if detail else "")
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
