from __future__ import annotations

import numpy as np
import pytest

from gcnpac import markov_core as mc


@pytest.fixture
def example3():
    return mc.build_example_chain([0.2, 0.3, 0.5], [0.1, 0.2, 0.3])


@pytest.fixture
def example2():
    return mc.build_example_chain([0.5, 0.5], [0.2, 0.2])


def small_chain_grid(seed: int = 0) -> list[mc.FiniteMarkovChain]:
    """Chains with N <= 3 covering stationary and non-stationary starts."""
    rng = np.random.default_rng(seed)
    grid = [
        mc.build_example_chain([0.2, 0.3, 0.5], [0.1, 0.2, 0.3]),
        mc.build_example_chain([0.2, 0.3, 0.5], [0.1, 0.2, 0.3], initial=[1.0, 0.0, 0.0]),
        mc.build_example_chain([0.5, 0.5], [0.2, 0.2]),
        mc.build_example_chain([0.5, 0.5], [0.6, 0.3], initial=[0.0, 1.0]),
        mc.iid_chain([0.3, 0.7]),
        mc.iid_chain([0.2, 0.3, 0.5], initial=[0.0, 0.0, 1.0]),
    ]
    grid += [mc.random_ergodic_chain(int(N), rng) for N in (2, 2, 3, 3, 3)]
    grid += [mc.random_ergodic_chain(3, rng, concentration=0.3) for _ in range(3)]
    return grid


ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, ok: bool, detail: str) -> None:
    """Print and keep one PASS/FAIL line for an acceptance criterion."""
    line = f"{'PASS' if ok else 'FAIL'} criterion {number:>2}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
