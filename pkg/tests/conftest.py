from __future__ import annotations

import functools

import pytest
from hypothesis import HealthCheck, settings

from stokeslab.odesys import BUNDLED, bundled, formal_solution

settings.register_profile("stokeslab", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("stokeslab")

# lines recorded by the acceptance suite, echoed at the end of the run
ACCEPTANCE_LINES: list = []


@functools.lru_cache(maxsize=None)
def system(name: str):
    return bundled(name)


@functools.lru_cache(maxsize=None)
def exact_solution(name: str, order: int):
    return formal_solution(system(name), order, exact=True)


@pytest.fixture(params=BUNDLED)
def bundled_name(request):
    return request.param


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
