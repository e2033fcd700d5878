import numpy as np
import pytest

from rbvrisk.data_models import FeatureTable
from rbvrisk.synthetic import generate_synthetic, load_synthetic_spec


def build_table(values, labels, feature_nos=None):
    """Finalized table from plain arrays; columns default to features 1..n."""
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values.reshape(-1, 1)
    if feature_nos is None:
        feature_nos = tuple(range(1, values.shape[1] + 1))
    return FeatureTable(values=values, labels=np.asarray(labels),
                        missing_mask=np.zeros(values.shape, dtype=bool), feature_nos=feature_nos)


@pytest.fixture
def make_table():
    return build_table


@pytest.fixture(scope="session")
def small_cohort():
    """Synthetic cohort from the bundled marginals, reduced in size."""
    spec = load_synthetic_spec(n_survived=300, n_nonsurvived=60, seed=7)
    return generate_synthetic(spec)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
