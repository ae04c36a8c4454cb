import numpy as np
import pytest
from hypothesis import settings

from resonalab.coupling import classify_resonances, separation_check
from resonalab.kg import KGParams, build_kg
from resonalab.resonance import characteristic_phase

settings.register_profile("suite", max_examples=40, deadline=None)
settings.load_profile("suite")

# Independent oracle values (closed-form phase solved with scipy.optimize.brentq
# and fsolve on lambda_1, lambda_2 written out by hand; omega0=1, theta0=1/2, |k|=1).
R12_ROOT_POS = 1.4549856548870301
R12_ROOT_NEG = -4.967759825846231
GAMMA12_AT_POS = 0.03334351977097952
SQRT_GAMMA12_AT_POS = 0.18260208041251752
SQRT_GAMMA12_AT_NEG = 0.14697329232791492
R12_SELF_SHIFT_2D = (-1.2165876484731377, 3.267545685748532)


@pytest.fixture(scope="session")
def kg1():
    spec = build_kg(KGParams(d=1))
    return spec, characteristic_phase(spec, [1.0], branch=1)


@pytest.fixture(scope="session")
def kg2():
    spec = build_kg(KGParams(d=2))
    return spec, characteristic_phase(spec, [1.0, 0.0], branch=1)


@pytest.fixture(scope="session")
def verdict1(kg1):
    spec, beta = kg1
    return classify_resonances(spec, beta)


@pytest.fixture(scope="session")
def verdict2(kg2):
    spec, beta = kg2
    return classify_resonances(spec, beta)


@pytest.fixture(scope="session")
def separation2(kg2, verdict2):
    spec, beta = kg2
    return separation_check(spec, beta, verdict2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# One line per acceptance criterion, echoed in the terminal summary.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
