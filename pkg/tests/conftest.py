from pathlib import Path

import numpy as np
import pytest

from qtopt.jpeg import load_image

DATA = Path(__file__).parent / "data"
CORPUS = ["astronaut", "camera", "chelsea", "coffee", "synthetic"]
NATURAL = ["astronaut", "camera", "chelsea", "coffee"]

# acceptance lines collected by test_acceptance.py, printed at the end of the run
ACCEPTANCE = {}


@pytest.fixture(scope="session")
def corpus():
    return {name: load_image(DATA / f"{name}.png") for name in CORPUS}


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[key])
