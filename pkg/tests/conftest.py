import pytest
from hypothesis import HealthCheck, settings

from gpu_sentinel.features import WindowSpec, build_dataset
from gpu_sentinel.simulator import ScenarioConfig, make_corpus, simulate_trace

from .helpers import FIXTURES

settings.register_profile(
    "default", deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def fixtures_dir():
    return FIXTURES


@pytest.fixture(scope="session")
def mixed_trace():
    return simulate_trace(ScenarioConfig(miner_onset_s=300.0, seed=11, name="mixed"))


@pytest.fixture(scope="session")
def benign_trace():
    return simulate_trace(ScenarioConfig(seed=12, name="benign"))


@pytest.fixture(scope="session")
def small_dataset():
    """Two benign and two mixed 300 s traces; about 100 windows."""
    corpus = make_corpus(2, 2, ScenarioConfig(duration_s=300.0), seed=5)
    return build_dataset(corpus, WindowSpec(30, 10))


def pytest_terminal_summary(terminalreporter):
    from .helpers import ACCEPTANCE

    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if passed else 'FAIL'} | {detail}")
