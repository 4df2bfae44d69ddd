import pytest

from benney.families import RationalParams, const_family, family_outputs, rational_family, theta_sigma
from benney.numerics import GridSpec

CONST_DOMAIN = GridSpec.make(t=(1.0, 2.0, 33), x=(-1.0, 1.0, 33), y=(0.0, 0.2, 17))
RATIONAL_DOMAIN = GridSpec.make(t=(0.5, 2.0, 33), x=(-2.0, -1.5, 33), y=(0.0, 0.05, 17))
FREESTREAM_DOMAIN = GridSpec.make(t=(0.0, 1.0, 17), x=(-1.0, 1.0, 17), y=(0.0, 0.2, 9))
# box where every (t, g) slice of the rational family covers a common f range
ODE_BOX = GridSpec.make(t=(1.0, 1.5, 9), x=(-3.0, -1.0, 9), g=(0.4, 0.6, 9))
# f window fixed across the ladder: common range of the coarsest level, inset 5%
ODE_F_RANGE = (-0.4555180016506752, 0.1342204568424006)
ODE_LADDER = (16, 32, 64)

# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])


@pytest.fixture(scope="session")
def const_outputs():
    return const_family(theta_sigma(2.0), CONST_DOMAIN)


@pytest.fixture(scope="session")
def rational():
    return rational_family(RationalParams.from_strings("g", "0"), RATIONAL_DOMAIN)


@pytest.fixture(scope="session")
def rational_flipped():
    return rational_family(RationalParams.from_strings("g", "0", phi_sign=-1), RATIONAL_DOMAIN)


@pytest.fixture(scope="session")
def rational_outputs(rational):
    return family_outputs(rational)


@pytest.fixture(scope="session")
def rational_resolution():
    """(convention, per-combination ladder summary) from the automatic sign search."""
    from benney.reconstruction import resolve_signs

    builds = {
        1: family_outputs(rational_family(RationalParams.from_strings("g", "0"), RATIONAL_DOMAIN)),
        -1: family_outputs(rational_family(RationalParams.from_strings("g", "0", phi_sign=-1), RATIONAL_DOMAIN)),
    }
    report: dict = {}
    conv = resolve_signs(lambda s: builds[s], RATIONAL_DOMAIN, report=report)
    return conv, report
