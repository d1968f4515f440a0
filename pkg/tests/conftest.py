from __future__ import annotations

import numpy as np
import pytest

from kcmfold import FIXTURE_CHAIN_SPEC, DEFAULT_CHAIN_SPEC, load_chain_spec

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def fixture_chain():
    """Three peptide planes, eight joints."""
    return load_chain_spec(FIXTURE_CHAIN_SPEC)


@pytest.fixture(scope="session")
def protocol_chain():
    """Ten peptide planes, 22 joints."""
    return load_chain_spec(DEFAULT_CHAIN_SPEC)


@pytest.fixture(scope="session")
def random_thetas():
    rng = np.random.default_rng(20240611)
    return [rng.uniform(-np.pi, np.pi, 8) for _ in range(3)]


@pytest.fixture(scope="session")
def acceptance_report():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
