from __future__ import annotations

import sys

import pytest

from fairaudit.protocol import generate_pairs
from fairaudit.synthetic import CohortSpec, generate_cohort


@pytest.fixture(scope="session")
def small_cohort():
    spec = CohortSpec.grid(identities=2, samples_per_identity=3, dim=16, seed=3, noise=0.6, age_jitter=0.2)
    return generate_cohort(spec)


@pytest.fixture(scope="session")
def small_pairs(small_cohort):
    return generate_pairs(small_cohort, per_fold=40, folds=10, seed=5)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(mod.RESULTS, key=lambda s: int(s.split("]")[1].split(".")[0])):
            terminalreporter.write_line(line)
