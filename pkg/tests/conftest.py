"""Shared fixtures: the small 1D reference problem most suites reuse."""

import numpy as np
import pytest

from invert.harness import CANONICAL_CONFIG, Config, build_problem


@pytest.fixture(scope="session")
def canonical_cfg():
    return Config.from_text(CANONICAL_CONFIG, "canonical")


@pytest.fixture(scope="session")
def canonical(canonical_cfg):
    """ProblemSetup for the 1D two-mode benchmark problem."""
    return build_problem(canonical_cfg)


@pytest.fixture(scope="session")
def spec24(canonical):
    """Level-4 two-mode posterior of the benchmark problem."""
    return canonical.family.spec(2, 4)
