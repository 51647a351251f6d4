import functools

import pytest

from herald_sim.protocol import prepare_params, run_cphase


@functools.lru_cache(maxsize=None)
def _cached_run(variant, C, lam, dE2, level="full", n_max=1, process=False):
    p, _ = prepare_params(C, lam, dE2, variant)
    return run_cphase(p, level, n_max=n_max, process=process, samples=20)


@pytest.fixture(scope="session")
def gate_run():
    """Memoized ``run_cphase`` on preset-rule parameters, shared across test modules."""
    return _cached_run
