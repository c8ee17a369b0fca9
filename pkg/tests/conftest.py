import pytest
from hypothesis import HealthCheck, settings

from sparkle_mocap.body import make_default_template

settings.register_profile("repo", deadline=None, derandomize=True, max_examples=100,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


@pytest.fixture(scope="session")
def template():
    return make_default_template(1024, seed=0)


@pytest.fixture(scope="session")
def dense_template():
    return make_default_template(4096, seed=7)


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE

    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE, key=lambda k: int(k[1:])):
            terminalreporter.write_line(ACCEPTANCE[key])
