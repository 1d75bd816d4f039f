import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "repo", deadline=None, derandomize=True, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("repo")

# filled by test_acceptance.py; printed at the end of the run
ACCEPTANCE: dict[int, tuple[str, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        name, verdict = ACCEPTANCE[k]
        terminalreporter.write_line(f"{verdict} criterion {k:2d}: {name}")


@pytest.fixture(scope="session")
def ref_tc80():
    from satsched.runner import bundled_scenario, load_scenario

    return load_scenario(bundled_scenario("reference_96h_tc80"))


@pytest.fixture(scope="session")
def ref_both():
    from satsched.runner import bundled_scenario, load_scenario

    return load_scenario(bundled_scenario("reference_96h"))


@pytest.fixture(scope="session")
def ref_geometry(ref_both):
    from satsched.runner import compute_geometry

    return compute_geometry(ref_both)

