import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=25,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def disk_bounds_64():
    """Free-cell bounds of the centered disk of radius 1/4 at h = 1/64."""
    from poincare_homog.geometry import CellGeometry
    from poincare_homog.spectral import free_cell_bounds
    return free_cell_bounds(CellGeometry.disk(0.25), 1 / 64)


@pytest.fixture
def report():
    """Record one acceptance line; printed again in the terminal summary."""
    def _report(line: str) -> None:
        print(line)
        ACCEPTANCE_LINES.append(line)
    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
