import pytest

from gridstress.network import builtin_case, increase_overrides, scale_load


@pytest.fixture(scope="session")
def case118():
    return builtin_case("case118")


@pytest.fixture(scope="session")
def select_bus(case118):
    return scale_load(case118, 1.05, increase_overrides(1.05, {40: 16.0, 41: 105.0}))


@pytest.fixture
def triangle():
    return builtin_case("triangle")


@pytest.fixture(scope="session")
def synthetic_cases():
    return [builtin_case(n) for n in ("triangle", "four_bus", "ladder12", "mesh30")]


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion():
    """Record one acceptance criterion verdict; the line is echoed in the terminal summary."""
    def record(name: str, ok: bool, detail: str) -> bool:
        ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'}  criterion {name}: {detail}")
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
