import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_domain(rng, S, spread=3.0):
    """Planar stations at distinct random positions."""
    from clmdl.stgrid import SpatialDomain

    coords = rng.uniform(0, spread, size=(S, 2))
    return SpatialDomain(tuple(f"s{i}" for i in range(S)), coords)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
