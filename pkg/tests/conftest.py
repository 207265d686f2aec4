import sys

import numpy as np
import pytest

from sparsepois.dataset import Dataset, GenerationConfig, generate_synthetic


def make_instance(seed, m=8, n=20, k_true=2, rho=0.5, sigma2=0.3, y_max=10):
    return generate_synthetic(GenerationConfig(m=m, n=n, k_true=k_true, rho=rho, sigma2=sigma2,
                                               y_max=y_max, seed=seed))


def random_small(seed, m_range=(4, 12), n_range=(10, 40), k_range=(1, 3), gammas=(0.1, 1.0, 10.0)):
    """Instance drawn like the oracle-equivalence suite: returns (dataset, gamma, k)."""
    r = np.random.default_rng(10_000 + seed)
    m = int(r.integers(m_range[0], m_range[1] + 1))
    n = int(r.integers(n_range[0], n_range[1] + 1))
    k = int(r.integers(k_range[0], k_range[1] + 1))
    gamma = float(r.choice(gammas))
    rho = float(r.choice([0.35, 0.7]))
    sigma2 = float(r.choice([0.01, 0.1, 1.0]))
    d = make_instance(seed, m=m, n=n, k_true=min(k, m), rho=rho, sigma2=sigma2)
    return d, gamma, k


@pytest.fixture
def tiny_dataset():
    x = np.array([[0.5, -1.0], [1.0, 0.2], [-0.3, 0.7]])
    return Dataset(x, np.array([3, 1, 0]))


@pytest.fixture(params=["compiled", "numpy"])
def kernels(request):
    from sparsepois import _kernels

    if request.param == "compiled":
        if _kernels.ckernels is None:
            pytest.skip("compiled extension not built")
        return _kernels.ckernels
    return _kernels.pykernels


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    verdicts = getattr(mod, "VERDICTS", None)
    if verdicts:
        terminalreporter.section("acceptance criteria")
        for key in sorted(verdicts):
            terminalreporter.write_line(verdicts[key])
