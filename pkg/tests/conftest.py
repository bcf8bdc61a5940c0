import numpy as np
import pytest

from armada.model import default_armada_model, default_scene


@pytest.fixture(scope="session")
def model():
    return default_armada_model("right")


@pytest.fixture(scope="session")
def left_model():
    return default_armada_model("left")


@pytest.fixture(scope="session")
def scene():
    return default_scene()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion, in criterion order."""
    lines = []
    for outcome in ("passed", "failed"):
        for rep in terminalreporter.stats.get(outcome, []):
            if rep.when != "call":
                continue
            for key, value in rep.user_properties:
                if key == "acceptance":
                    lines.append((value[0], f"{outcome.upper()[:4]:4s} {value[0]:>2d}. {value[1]}"))
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
