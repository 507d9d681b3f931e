import os

import pytest
from hypothesis import HealthCheck, settings

from kpochaos.model import FockDimension, ModelParams, build_hamiltonian
from kpochaos.spectral import eigendecompose

settings.register_profile("default", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# acceptance lines collected by tests/test_acceptance.py
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def eigensystems():
    """Eigensystems at the three standard couplings, keyed by xi0."""
    cache = {}

    def get(xi0):
        if xi0 not in cache:
            H = build_hamiltonian(ModelParams.paper(xi0), FockDimension(30))
            cache[xi0] = (H, eigendecompose(H))
        return cache[xi0]

    return get
