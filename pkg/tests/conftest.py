import numpy as np
import pytest

from silhopose.bank import generate_sphere_bank
from silhopose.geometry import DEFAULT_CAMERA
from silhopose.mesh import box, cube, cylinder, icosphere, wedge
from silhopose.symmetry import SymmetryGroup

# The five reference meshes used by the fit and symmetry checks.
TEST_MESHES = {
    "cube": cube(1.0),
    "box": box(0.06, 0.14, 0.10),
    "cylinder": cylinder(0.04, 0.12),
    "sphere": icosphere(0.05, 2),
    "wedge": wedge(0.10, 0.05, 0.08),
}

BOX_GROUP = SymmetryGroup("two_planes", ((1.0, 0.0, 0.0), (0.0, 0.0, 1.0)))
CYLINDER_GROUP = SymmetryGroup("axis_plane", ((0.0, 0.0, 1.0), (1.0, 0.0, 0.0)))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def box_sphere_bank():
    return generate_sphere_bank(TEST_MESHES["box"], DEFAULT_CAMERA, class_id="box")


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
