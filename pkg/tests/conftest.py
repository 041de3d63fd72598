import pytest
from hypothesis import HealthCheck, settings

from wgmtrap.atomdata import load_species, parse_species

settings.register_profile(
    "repo", deadline=None, derandomize=True, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("repo")

# filled by tests/test_acceptance.py; printed once at the end of the session
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])


@pytest.fixture(scope="session")
def rb85():
    return load_species()


TOY_DOC = {
    "species": {
        "name": "toy",
        "nuclear_spin": "1/2",
        "mass": {"value": 7.0, "unit": "u"},
        "saturation_intensity": {"value": 2.0, "unit": "mW/cm^2"},
        "gamma": {"value": 3.0, "unit": "MHz"},
    },
    "level": {
        "g": {"n": 2, "L": 0, "J": "1/2", "energy": {"value": 0, "unit": "cm^-1"}},
        "e": {"n": 2, "L": 1, "J": "3/2", "energy": {"value": 400.0, "unit": "THz"}},
    },
    "line": {"g-e": {"lower": "g", "upper": "e", "reduced_dipole": {"value": 3.7, "unit": "ea0"}}},
    "hfs": {"g": {"A": {"value": 200.0, "unit": "MHz"}}, "e": {"A": {"value": 20.0, "unit": "MHz"}}},
}


@pytest.fixture(scope="session")
def toy():
    """Single-line species: J = 1/2 -> 3/2 with nuclear spin 1/2."""
    return parse_species(TOY_DOC)
