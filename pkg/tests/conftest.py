import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from noisecurator import inject_noise, make_gaussian_blobs, NoiseSpec  # noqa: E402
from noisecurator.data import SplitSpec, split  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_noisy():
    """1000 2-d blobs with 30% uniform noise, split 800/200."""
    ds = inject_noise(make_gaussian_blobs(500, 2, 2, 4.0, seed=0), NoiseSpec("uniform", eta=0.3, seed=1))
    return split(ds, SplitSpec(0.8, seed=2))


_ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE_KEY] = []


@pytest.fixture
def acceptance_log(request):
    return request.config.stash[_ACCEPTANCE_KEY]


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
