import numpy as np
import pytest

from bassmri.core import Dataset, KSpaceGrid, MultiCoilKSpace
from bassmri.recon import CoilSensitivities
from bassmri.recon.reconstructors import ReconConfig, ReconResult, Reconstructor

# criterion number -> (passed, detail); filled by tests/test_acceptance.py
ACCEPTANCE: dict = {}


class IdentityOracle(Reconstructor):
    """Test double returning the fully sampled item itself.

    Reconstructions are requested in item order, so the oracle cycles
    through the dataset it was built with.
    """

    method = "identity"

    def __init__(self, dataset: Dataset):
        g = dataset.grid
        super().__init__(CoilSensitivities.ones(g.ny, g.nx) if g.nc == 1 else
                         CoilSensitivities(np.ones((g.nc, g.ny, g.nx)) / np.sqrt(g.nc)),
                         ReconConfig(method="zero-fill"))
        self.dataset = dataset
        self._next = 0

    def _solve(self, pattern, sampled):
        item = self.dataset[self._next % len(self.dataset)]
        self._next += 1
        return ReconResult(image=np.zeros(item.grid.shape, dtype=complex), kspace=item)


def random_dataset(grid: KSpaceGrid, n: int, seed: int = 0) -> Dataset:
    rng = np.random.default_rng(seed)
    items = []
    for _ in range(n):
        v = rng.standard_normal((grid.nc,) + grid.shape) + 1j * rng.standard_normal((grid.nc,) + grid.shape)
        items.append(MultiCoilKSpace(grid, v))
    return Dataset(items)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def acceptance():
    def record(number: int, passed: bool, detail: str):
        ACCEPTANCE[number] = (bool(passed), detail)
        print(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
