from __future__ import annotations

import numpy as np
import pytest

from oscdamp import cases
from oscdamp.study import build_study

RANDOM_SUITE_SIZE = 50


@pytest.fixture(scope="session")
def fixture_studies():
    """Every shipped fixture solved once: name -> (CaseFixture, Study)."""
    out = {}
    for name in cases.FIXTURE_NAMES:
        fx = cases.load_fixture(name)
        out[name] = (fx, build_study(fx.network, const_v=fx.const_v))
    return out


@pytest.fixture(scope="session")
def random_suite():
    """Fifty seeded random networks with their solved studies."""
    out = []
    for seed in range(RANDOM_SUITE_SIZE):
        net = cases.random_network(seed)
        out.append((net, build_study(net)))
    return out


def balanced_directions(rng: np.random.Generator, m: int, count: int) -> list[np.ndarray]:
    """Unit-norm balanced redispatch directions over m generators."""
    dirs = []
    while len(dirs) < count:
        dp = rng.standard_normal(m)
        dp -= dp.mean()
        norm = np.linalg.norm(dp)
        if norm < 1e-3:
            continue
        dirs.append(dp / norm)
    return dirs
