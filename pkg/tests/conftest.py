from pathlib import Path

import numpy as np
import pytest
from scipy.stats import ortho_group

from orthofit.adapters.datasets import BUNDLED, bundled_path
from orthofit.adapters.storage import load_grouped_csv
from orthofit.core.models import GroupedDataset


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def random_orthogonal():
    def make(d, rng):
        return ortho_group.rvs(d, random_state=rng) if d > 1 else np.array([[1.0]])

    return make


@pytest.fixture
def cpc_dataset():
    """Groups drawn from normals sharing eigenvectors, with distinct eigenvalues."""

    def make(rng, *, n=(80, 120), eigenvalues=((4.0, 1.0), (2.0, 0.25)), angle=0.5, means=None):
        c, s = np.cos(angle), np.sin(angle)
        q = np.array([[c, -s], [s, c]])
        groups = {}
        for j, (n_j, lam) in enumerate(zip(n, eigenvalues, strict=True)):
            sigma = (q * np.asarray(lam)) @ q.T
            mean = np.zeros(2) if means is None else np.asarray(means[j], dtype=float)
            groups[f"g{j + 1}"] = rng.multivariate_normal(mean, sigma, size=n_j)
        return GroupedDataset.from_arrays(groups)

    return make


def _bundled(name: str) -> GroupedDataset:
    path = bundled_path(name)
    if not Path(path).is_file():
        pytest.skip(f"bundled dataset {name!r} not installed at {path} (see data/PROVENANCE.md)")
    dataset = BUNDLED[name]
    return load_grouped_csv(str(path), dataset.group_column, dataset.variables, log_transform=True)


@pytest.fixture(scope="session")
def microtus():
    return _bundled("microtus")


@pytest.fixture(scope="session")
def swiss_soldiers():
    return _bundled("swiss_soldiers")
