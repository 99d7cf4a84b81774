import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from infoscout.crm import BeliefMap
from infoscout.sensor import SensorConfig, raycast, simulate_scan, virtual_scan
from infoscout.world import GridGeometry, GroundTruthMap, Pose

from conftest import box_world

GEOM = GridGeometry(30, 30, 0.2)


def sampled_chain(geom, x, y, angle, max_range, step_cells=0.01):
    """Cells visited by dense point sampling along the ray, in order of first visit.

    Samples sit at half steps so an origin on a cell boundary counts only the cell the ray enters.
    """
    res = geom.resolution
    n = int(max_range / (step_cells * res))
    ts = (np.arange(n) + 0.5) * step_cells * res
    px = x + ts * math.cos(angle)
    py = y + ts * math.sin(angle)
    inside = (px >= 0) & (py >= 0) & (px < geom.width * res) & (py < geom.height * res)
    stop = np.argmin(inside) if not inside.all() else len(ts)
    ix = np.floor(px[:stop] / res).astype(int)
    iy = np.floor(py[:stop] / res).astype(int)
    flat = iy * geom.width + ix
    _, first = np.unique(flat, return_index=True)
    return flat[np.sort(first)]


class TestRaycast:
    def test_axis_aligned(self):
        x, y = GEOM.cell_center(5, 5)
        tr = raycast(GEOM, (x, y), 0.0, 3 * 0.2)
        np.testing.assert_array_equal(tr.cells, [5 * 30 + 5, 5 * 30 + 6, 5 * 30 + 7, 5 * 30 + 8])
        np.testing.assert_allclose(tr.entries, [0.0, 0.1, 0.3, 0.5], atol=1e-12)

    def test_first_cell_is_origin(self):
        tr = raycast(GEOM, (1.03, 2.71), 0.7, 2.0)
        assert tr.cells[0] == GEOM.flat_index(*GEOM.cell_of(1.03, 2.71))

    @pytest.mark.parametrize("angle, first", [(2.0, (4, 5)), (0.3, (5, 5)), (math.pi, (4, 5)),
                                              (-math.pi / 2, (5, 4)), (-4.75e-281, (5, 5))])
    def test_origin_on_cell_corner(self, angle, first):
        # the ray starts in the cell whose interior it enters; a grazing ray keeps the origin row
        tr = raycast(GEOM, (1.0, 1.0), angle, 2.0)
        assert tr.cells[0] == GEOM.flat_index(*first)
        assert np.all(np.diff(tr.entries) > 0)

    @settings(max_examples=200, deadline=None)
    @given(st.floats(0.01, 5.99), st.floats(0.01, 5.99), st.floats(-math.pi, math.pi))
    def test_matches_point_sampling(self, x, y, angle):
        rmax = 4.0
        tr = raycast(GEOM, (x, y), angle, rmax)
        oracle = sampled_chain(GEOM, x, y, angle, rmax)
        chain = list(tr.cells)
        # every sampled cell is traversed, in the same order
        pos = [chain.index(c) for c in oracle]
        assert pos == sorted(pos)
        # cells the sampler skipped are corner clips shorter than the sampling step
        exits = np.append(tr.entries[1:], min(rmax, tr.entries[-1] + 1.0))
        for i, c in enumerate(chain):
            if c not in set(oracle):
                assert exits[i] - tr.entries[i] < 0.02 * GEOM.resolution or i == len(chain) - 1

    @settings(max_examples=100, deadline=None)
    @given(st.floats(0.01, 5.99), st.floats(0.01, 5.99), st.floats(-math.pi, math.pi))
    def test_no_duplicates_and_ordered(self, x, y, angle):
        tr = raycast(GEOM, (x, y), angle, 6.0)
        assert len(set(tr.cells)) == len(tr.cells)
        assert np.all(np.diff(tr.entries) > 0)
        assert len(tr.cells) <= 2 * math.ceil(6.0 / 0.2)

    def test_mirror_symmetry(self):
        x, y = GEOM.cell_center(15, 15)
        fwd = raycast(GEOM, (x, y), 0.0, 2.0)
        back = raycast(GEOM, (x, y), math.pi, 2.0)
        w = GEOM.width
        np.testing.assert_array_equal(fwd.cells % w - 15, -(back.cells % w - 15))
        np.testing.assert_array_equal(fwd.cells // w, back.cells // w)
        np.testing.assert_allclose(fwd.entries, back.entries, atol=1e-12)

    def test_origin_outside(self):
        with pytest.raises(ValueError):
            raycast(GEOM, (-0.5, 1.0), 0.0, 1.0)


class TestSensorConfig:
    def test_beam_count(self):
        assert SensorConfig(fov=3.0, angular_resolution=0.05).n_beams == 61

    def test_offsets_span_fov(self):
        off = SensorConfig().beam_offsets()
        assert off[0] == pytest.approx(-1.5)
        assert off[-1] == pytest.approx(1.5)

    @pytest.mark.parametrize("kw", [dict(fov=0.0), dict(fov=7.0), dict(angular_resolution=0.0),
                                    dict(max_range=-1.0), dict(range_noise_sigma=-0.1)])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            SensorConfig(**kw)


class TestSimulateScan:
    def test_empty_space_is_max(self):
        occ = np.zeros((100, 100), dtype=bool)
        world = GroundTruthMap(GridGeometry(100, 100, 0.2), occ)
        scan = simulate_scan(world, Pose(10.0, 10.0, 0.3), SensorConfig(), np.random.default_rng(0))
        assert len(scan.beams) == 61
        assert all(b.is_max for b in scan.beams)

    def test_noise_free_wall(self):
        # wall column at ix = 15 -> x in [3.0, 3.2); robot at x = 1.0
        world = box_world(walls=[(15, iy) for iy in range(20)])
        cfg = SensorConfig(range_noise_sigma=0.0)
        scan = simulate_scan(world, Pose(1.0, 2.1, 0.0), cfg)
        centre = scan.beams[30]
        assert centre.angle == pytest.approx(0.0)
        assert centre.measured_range == pytest.approx(2.0, abs=1e-12)

    def test_seeded_noise_reproducible(self, maze):
        cfg = SensorConfig()
        a = simulate_scan(maze, Pose(1.2, 1.2, 0.4), cfg, np.random.default_rng(3))
        b = simulate_scan(maze, Pose(1.2, 1.2, 0.4), cfg, np.random.default_rng(3))
        assert [x.measured_range for x in a.beams] == [x.measured_range for x in b.beams]

    def test_ranges_in_bounds(self, maze):
        scan = simulate_scan(maze, Pose(1.2, 1.2, 0.9), SensorConfig(), np.random.default_rng(1))
        for b in scan.beams:
            assert b.is_max or 0 < b.measured_range <= 6.0

    def test_occupied_pose(self, maze):
        with pytest.raises(ValueError):
            simulate_scan(maze, Pose(0.1, 0.1), SensorConfig(), np.random.default_rng(0))


class TestVirtualScan:
    def test_unknown_runs_to_max(self, room):
        belief = BeliefMap.for_world(room)
        scan = virtual_scan(belief, Pose(2.0, 2.0, 0.0), SensorConfig())
        assert all(b.is_max for b in scan.beams)

    def test_converged_wall_blocks(self, room):
        belief = BeliefMap.for_world(room)
        wall = np.zeros(11)
        wall[-1] = 1.0
        for iy in range(20):
            belief.set_cell_pmf(15, iy, wall)
        scan = virtual_scan(belief, Pose(1.0, 2.1, 0.0), SensorConfig())
        centre = scan.beams[30]
        assert centre.measured_range == pytest.approx(2.0, abs=1e-12)
        assert centre.cell_chain[-1] == belief.geometry.flat_index(15, 10)

    def test_deterministic(self, room):
        belief = BeliefMap.for_world(room)
        a = virtual_scan(belief, Pose(2.0, 2.0, 1.0), SensorConfig())
        b = virtual_scan(belief, Pose(2.0, 2.0, 1.0), SensorConfig())
        for x, y in zip(a.beams, b.beams):
            np.testing.assert_array_equal(x.cell_chain, y.cell_chain)
            assert x.measured_range == y.measured_range
