import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from turnplan.actions import ToolAssembly, ToolInsert, TurnAction  # noqa: E402
from turnplan.fixture import FixtureConfig, GripConfig  # noqa: E402
from turnplan.revolve import HalfSection  # noqa: E402
from turnplan.solids import (Axis, RigidTransform, Raster2D, box_grid, cylinder_mesh,  # noqa: E402
                             voxelize)

# one criterion per line, printed at the end of the session
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def cube_grid():
    return box_grid((-1, -1, 0), (1, 1, 2), 0.1)


@pytest.fixture(scope="session")
def cylinder_grid():
    return voxelize(cylinder_mesh(1.0, 0.0, 2.0, 128), 0.1)


def point_tool(pixel, name="pt", rate=1.0):
    insert = ToolInsert(name, Raster2D((0.0, 0.0), pixel, np.ones((1, 1), dtype=bool)))
    return ToolAssembly.make(name, insert, None, "", 0, rate, 1.0)


def fixture(fid="f0"):
    return FixtureConfig.compose(fid, RigidTransform.identity(), GripConfig(0.0, 0.0, False))


def synthetic_action(aid, stock: HalfSection, mask, rate=1.0, fid="f0"):
    """Action with a hand-made MTV in ``stock``'s frame."""
    return TurnAction(aid, fixture(fid), point_tool(stock.pixel, f"t_{aid}", rate),
                      stock.with_data(np.asarray(mask, dtype=bool)))


def unit_pixel():
    """Pixel size whose annulus unit ``pi * p**3`` is exactly one mm^3."""
    return math.pi ** (-1.0 / 3.0)


def section(nz, nr, pixel, z0=0, data=None):
    s = HalfSection.empty(Axis.z(), z0, nz, nr, pixel)
    return s if data is None else s.with_data(data)
