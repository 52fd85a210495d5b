from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

from j2lambert.astro import JUPITER, OrbitalElements, elements_to_state, orbital_period

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")

DATA = Path(__file__).parent / "data"
GUESS_MODEL = DATA / "guess_model.txt"
KEPLER_JUPITER = JUPITER.with_j2(0.0)


@pytest.fixture(scope="session")
def guess_model():
    from j2lambert.mlp import load_model

    if not GUESS_MODEL.exists():
        pytest.skip("trained guess model not present")
    return load_model(GUESS_MODEL)


def random_orbit(rng: np.random.Generator, body=JUPITER, incl=(0.0, 1.0)):
    """State and period of an orbit with pericentre and apocentre in 5..30 body radii."""
    rp = rng.uniform(5, 30)
    ra = rng.uniform(rp, 30)
    a = 0.5 * (ra + rp) * body.radius
    e = (ra - rp) / (ra + rp)
    oe = OrbitalElements(a, e, rng.uniform(*incl), *rng.uniform(0, 2 * np.pi, 3))
    return elements_to_state(oe, body.mu), orbital_period(a, body.mu)


def pytest_terminal_summary(terminalreporter):
    from . import test_acceptance

    if test_acceptance.VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(test_acceptance.VERDICTS):
            terminalreporter.write_line(line)
