import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from infoscout.crm import (BeliefMap, CRMConfig, belief_variance, binary_entropy, coverage, expected_occupancy,
                           load_variance, map_entropy, uniform_pmf)
from infoscout.sensor import Beam, SensorConfig, simulate_scan
from infoscout.world import GridGeometry, Pose, load_map

VALUES = np.linspace(0, 1, 11)


def point_mass(v):
    p = np.zeros(11)
    p[int(round(v * 10))] = 1.0
    return p


def chain_beliefs(n=3, width=10):
    belief = BeliefMap(GridGeometry(width, 1, 0.2))
    cells = np.arange(n)
    entries = 0.2 * cells + 0.05
    return belief, cells, entries


def oracle_update(pmfs, entries, z, is_max, sigma, eps, zmax):
    """Per-cell Bayes update written out cause by cause."""
    n = len(pmfs)
    mhat = [p @ VALUES for p in pmfs]
    out = []
    for k in range(n):
        lik = np.zeros(11)
        for b, v in enumerate(VALUES):
            m = list(mhat)
            m[k] = v
            total = 0.0
            survive = 1.0
            for l in range(n):
                dens = 0.0 if is_max else math.exp(-0.5 * ((z - entries[l]) / sigma) ** 2) / (
                    sigma * math.sqrt(2 * math.pi))
                total += survive * m[l] * dens
                survive *= 1 - m[l]
            if is_max:
                total += survive
            lik[b] = (1 - eps) * total + (0.0 if is_max else eps / zmax)
        post = pmfs[k] * lik
        out.append(post / post.sum())
    return out


class TestCellStatistics:
    def test_expected_occupancy(self):
        assert expected_occupancy(uniform_pmf()) == pytest.approx(0.5)
        assert expected_occupancy(point_mass(1.0)) == 1.0
        p = np.zeros(11)
        p[0] = p[-1] = 0.5
        assert expected_occupancy(p) == pytest.approx(0.5)

    def test_variance(self):
        assert belief_variance(point_mass(0.3)) == pytest.approx(0.0, abs=1e-15)
        direct = sum((1 / 11) * (v - 0.5) ** 2 for v in VALUES)
        assert direct == pytest.approx(0.1, abs=1e-12)
        assert belief_variance(uniform_pmf()) == pytest.approx(direct, abs=1e-12)
        p = np.zeros(11)
        p[0] = p[-1] = 0.5
        assert belief_variance(p) == pytest.approx(0.25)

    def test_binary_entropy(self):
        np.testing.assert_allclose(binary_entropy([0.0, 1.0, 0.5]), [0.0, 0.0, 1.0])
        h = -0.25 * math.log2(0.25) - 0.75 * math.log2(0.75)
        assert binary_entropy(0.25) == pytest.approx(h, abs=1e-12)
        assert h == pytest.approx(0.8113, abs=1e-4)


class TestMapMetrics:
    def test_unknown_map_entropy(self):
        b = BeliefMap(GridGeometry(120, 70, 0.2))
        assert map_entropy(b) == pytest.approx(8400.0, abs=1e-9)
        assert coverage(b) == 0.0

    def test_known_cell_zero_bits(self):
        b = BeliefMap(GridGeometry(2, 1, 0.2))
        b.set_cell_pmf(0, 0, point_mass(1.0))
        assert map_entropy(b) == pytest.approx(1.0)

    def test_converged_coverage(self):
        b = BeliefMap(GridGeometry(4, 4, 0.2))
        for i in range(4):
            for j in range(4):
                b.set_cell_pmf(i, j, point_mass(float((i + j) % 2)))
        assert coverage(b) == 1.0
        assert map_entropy(b) == 0.0

    def test_quarter_coverage(self):
        b = BeliefMap(GridGeometry(4, 4, 0.2))
        p = point_mass(0.9)
        for i in range(4):
            b.set_cell_pmf(i, 0, p)
        assert coverage(b, 0.05) == 0.25

    def test_coverage_epsilon(self):
        with pytest.raises(ValueError):
            coverage(BeliefMap(GridGeometry(2, 2, 0.2)), 0.0)


class TestChainUpdate:
    sensor = SensorConfig(range_noise_sigma=0.0, max_range=6.0)

    def beam(self, cells, entries, z):
        return Beam(0.0, z, cells, entries + 0.1, entries)

    def test_matches_cause_oracle(self):
        belief, cells, entries = chain_beliefs(3)
        rng = np.random.default_rng(5)
        for k in range(3):
            belief.set_cell_pmf(k, 0, rng.dirichlet(np.ones(11)))
        before = [belief.pmf[c].copy() for c in cells]
        z = entries[1] + 0.01
        belief.update_cell_chain(self.beam(cells, entries, z), z, self.sensor)
        sigma = CRMConfig().likelihood_sigma(self.sensor)
        expected = oracle_update(before, entries, z, False, sigma, 1e-3, 6.0)
        for c, e in zip(cells, expected):
            np.testing.assert_allclose(belief.pmf[c], e, rtol=1e-10, atol=1e-14)

    def test_max_matches_cause_oracle(self):
        belief, cells, entries = chain_beliefs(3)
        before = [belief.pmf[c].copy() for c in cells]
        belief.update_cell_chain(self.beam(cells, entries, math.inf), math.inf, self.sensor)
        expected = oracle_update(before, entries, 0.0, True, 0.02, 1e-3, 6.0)
        for c, e in zip(cells, expected):
            np.testing.assert_allclose(belief.pmf[c], e, rtol=1e-10)

    @pytest.mark.parametrize("k", [0, 1, 2])
    def test_repeated_hits_converge(self, k):
        belief, cells, entries = chain_beliefs(3)
        beam = self.beam(cells, entries, entries[k])
        for _ in range(10):
            belief.update_cell_chain(beam, entries[k], self.sensor)
        assert belief.mhat_flat()[k] >= 0.95

    def test_repeated_max_clears_chain(self):
        belief, cells, entries = chain_beliefs(3)
        beam = self.beam(cells, entries, math.inf)
        for _ in range(10):
            belief.update_cell_chain(beam, math.inf, self.sensor)
        assert np.all(belief.mhat_flat()[:3] <= 0.05)

    def test_variance_non_increasing(self):
        belief, cells, entries = chain_beliefs(3)
        beam = self.beam(cells, entries, entries[2])
        var = []
        for _ in range(12):
            belief.update_cell_chain(beam, entries[2], self.sensor)
            var.append(belief_variance(belief.pmf[:3]))
        var = np.array(var)
        assert np.all(np.diff(var[2:], axis=0) <= 1e-12)

    def test_cells_beyond_return_untouched(self):
        belief, cells, entries = chain_beliefs(8)
        belief.update_cell_chain(self.beam(cells, entries, 0.25), 0.25, self.sensor)
        np.testing.assert_array_equal(belief.pmf[3:8], np.full((5, 11), 1 / 11))
        assert not np.allclose(belief.pmf[1], 1 / 11)

    def test_flat_likelihood_is_fixed_point(self):
        # a certain wall in front hides the second cell: its likelihood is flat across bins
        belief, cells, entries = chain_beliefs(2)
        belief.set_cell_pmf(0, 0, point_mass(1.0))
        p = np.random.default_rng(2).dirichlet(np.ones(11))
        belief.set_cell_pmf(1, 0, p)
        belief.update_cell_chain(self.beam(cells, entries, math.inf), math.inf, self.sensor)
        np.testing.assert_allclose(belief.pmf[1], p, rtol=1e-12)

    def test_degenerate_keeps_prior(self, caplog):
        belief = BeliefMap(GridGeometry(4, 1, 0.2), CRMConfig(spurious_rate=0.0))
        belief.set_cell_pmf(0, 0, point_mass(0.0))
        beam = self.beam(np.array([0]), np.array([0.0]), 0.0)
        with caplog.at_level(logging.WARNING):
            belief.update_cell_chain(beam, 0.0, self.sensor)
        np.testing.assert_array_equal(belief.pmf[0], point_mass(0.0))
        assert belief.degenerate_updates == 1
        assert "degenerate" in caplog.text

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2 ** 31), st.floats(0.01, 6.0) | st.just(math.inf))
    def test_normalized(self, seed, z):
        belief, cells, entries = chain_beliefs(6)
        rng = np.random.default_rng(seed)
        belief.set_all(rng.dirichlet(np.ones(11), size=belief.geometry.n_cells))
        belief.update_cell_chain(self.beam(cells, entries, z), z, self.sensor)
        np.testing.assert_allclose(belief.pmf.sum(axis=1), 1.0, atol=1e-9)
        assert np.all(belief.pmf >= 0)


class TestScanIntegration:
    def test_many_updates_stay_normalized(self, maze):
        belief = BeliefMap.for_world(maze)
        rng = np.random.default_rng(0)
        sensor = SensorConfig()
        for x, y in [(1.2, 1.2), (2.0, 1.2), (2.0, 2.0), (1.2, 2.0)]:
            for h in np.linspace(-3, 3, 7):
                belief.integrate_scan(simulate_scan(maze, Pose(x, y, h), sensor, rng), sensor)
        np.testing.assert_allclose(belief.pmf.sum(axis=1), 1.0, atol=1e-9)
        assert coverage(belief) > 0.01
        assert 0 <= map_entropy(belief) < maze.occupied.size

    def test_scan_clears_free_space(self, room):
        belief = BeliefMap.for_world(room)
        sensor = SensorConfig()
        for _ in range(3):
            belief.integrate_scan(simulate_scan(room, Pose(2.0, 2.0, 0.0), sensor, np.random.default_rng(1)),
                                  sensor)
        m = belief.expected_occupancy()
        assert m[10, 12] < 0.2   # free cell in front of the robot
        assert m[10, 19] > 0.65  # right-hand wall


class TestExport:
    def test_gray_and_variance(self, tmp_path):
        b = BeliefMap(GridGeometry(3, 2, 0.5))
        b.set_cell_pmf(0, 0, point_mass(1.0))
        b.set_cell_pmf(2, 1, point_mass(0.0))
        b.export(tmp_path / "m.txt", tmp_path / "v.txt")
        m = load_map(tmp_path / "m.txt")
        assert m.occupied[0, 0] and not m.occupied[1, 2]
        var = load_variance(tmp_path / "v.txt")
        np.testing.assert_allclose(var, b.variance(), atol=0)
        assert var[0, 0] == 0.0 and var[0, 1] == pytest.approx(0.1)
