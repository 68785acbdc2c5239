import numpy as np
import pytest

from racetraj3d.ggenvelope import synth_gg
from racetraj3d.synthetic import complex_synthetic, flat_circle, helix, oval_banked, straight


@pytest.fixture(scope="session")
def circle():
    return flat_circle(radius=100.0, width=10.0, ds=1.0)


@pytest.fixture(scope="session")
def line():
    return straight(length=1000.0, width=10.0, ds=1.0)


@pytest.fixture(scope="session")
def spiral():
    return helix(radius=100.0, slope=0.1, length=600.0, width=10.0, ds=0.5, banking=-0.15)


@pytest.fixture(scope="session")
def oval():
    return oval_banked()


@pytest.fixture(scope="session")
def complex_track():
    return complex_synthetic()


@pytest.fixture(scope="session")
def gg():
    return synth_gg(1.5, 1.5, 8.0, 1.5, np.linspace(0.0, 100.0, 11), np.linspace(2.0, 30.0, 15))


@pytest.fixture(scope="session")
def unit_gg():
    return synth_gg(1.0, 1.0, 5.0, 2.0, np.linspace(0.0, 100.0, 11), np.linspace(1.0, 30.0, 30))
