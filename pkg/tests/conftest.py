import numpy as np
import pytest

from infoscout.world import GridGeometry, GroundTruthMap, generate_structured


def box_world(width=20, height=20, resolution=0.2, walls=()):
    """Bordered empty room; ``walls`` are (ix, iy) cells to mark occupied."""
    occ = np.zeros((height, width), dtype=bool)
    occ[0, :] = occ[-1, :] = True
    occ[:, 0] = occ[:, -1] = True
    for ix, iy in walls:
        occ[iy, ix] = True
    return GroundTruthMap(GridGeometry(width, height, resolution), occ)


@pytest.fixture
def room():
    return box_world()


@pytest.fixture(scope="session")
def maze():
    return generate_structured(24.0, 14.0, 0.2, seed=1)


@pytest.fixture(scope="session")
def snapshot(maze):
    """Partially mapped maze belief plus 240 candidate actions around the robot."""
    from infoscout.crm import BeliefMap
    from infoscout.plan import gen_actions
    from infoscout.sensor import SensorConfig, simulate_scan
    from infoscout.world import Pose

    belief = BeliefMap.for_world(maze)
    sensor = SensorConfig()
    rng = np.random.default_rng(0)
    for x, y, h in [(1.2, 1.2, 0.0), (1.2, 1.2, 1.57), (2.5, 1.4, 0.4), (3.5, 2.0, 0.0)]:
        belief.integrate_scan(simulate_scan(maze, Pose(x, y, h), sensor, rng), sensor)
    cands, complete = gen_actions(Pose(3.5, 2.0, 0.0), belief, np.random.default_rng(1))
    assert complete
    return belief, cands


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
