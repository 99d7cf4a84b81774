"""Confidence-rich map: per-cell occupancy histograms and their measurement update.

Every cell carries a pmf over K occupancy values {0, 1/(K-1), ..., 1}. A beam is
explained by a cause model: chain cell ``l`` produces the return with probability
``m_l * prod_{i<l} (1 - m_i)``; if no chain cell does, the beam reports Max. Range
returns are Gaussian about the entry distance of the causing cell. Because that
model is multilinear in the cell occupancies, the likelihood of one cell's value
with the other cells marginalized is obtained by substituting their expected
occupancies, which gives an O(n) prefix/suffix recursion per beam.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .sensor import Beam, Scan, SensorConfig
from .world import GridGeometry, GroundTruthMap, MAP_MAGIC, write_gray_grid

log = logging.getLogger(__name__)

VARIANCE_MAGIC = "INFOSCOUT-VAR 1"
_SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class CRMConfig:
    """Belief discretization and measurement-model constants.

    ``spurious_rate`` mixes in a uniform range return; ``miss_rate`` is the chance that a
    genuine return is lost and reported as Max; ``sigma_floor`` bounds the likelihood
    width from below so that noise-free simulation still has a proper density.
    """

    n_bins: int = 11
    spurious_rate: float = 1e-3
    miss_rate: float = 0.0
    sigma_floor: float = 0.02

    def __post_init__(self):
        if self.n_bins < 2:
            raise ValueError("n_bins must be at least 2")
        if not 0 <= self.spurious_rate < 1 or not 0 <= self.miss_rate < 1:
            raise ValueError("rates must lie in [0, 1)")
        if not self.sigma_floor > 0:
            raise ValueError("sigma_floor must be positive")

    @classmethod
    def from_bin_width(cls, lambda_m: float, **kw) -> "CRMConfig":
        k = 1.0 / lambda_m
        if abs(k - round(k)) > 1e-9:
            raise ValueError("1/lambda_m must be an integer")
        return cls(n_bins=int(round(k)) + 1, **kw)

    @property
    def bin_width(self) -> float:
        return 1.0 / (self.n_bins - 1)

    def likelihood_sigma(self, sensor: SensorConfig) -> float:
        return max(sensor.range_noise_sigma, self.sigma_floor)


def bin_values(n_bins: int = 11) -> np.ndarray:
    return np.linspace(0.0, 1.0, n_bins)


def uniform_pmf(n_bins: int = 11) -> np.ndarray:
    return np.full(n_bins, 1.0 / n_bins)


def _values_for(pmf: np.ndarray) -> np.ndarray:
    return bin_values(np.shape(pmf)[-1])


def expected_occupancy(pmf) -> np.ndarray | float:
    """Mean of the occupancy histogram(s) along the last axis."""
    pmf = np.asarray(pmf, dtype=float)
    out = pmf @ _values_for(pmf)
    return float(out) if out.ndim == 0 else out


def belief_variance(pmf) -> np.ndarray | float:
    pmf = np.asarray(pmf, dtype=float)
    v = _values_for(pmf)
    m = pmf @ v
    out = pmf @ (v * v) - m * m
    out = np.maximum(out, 0.0)
    return float(out) if np.ndim(out) == 0 else out


def binary_entropy(p) -> np.ndarray:
    """Entropy in bits of Bernoulli(p), with 0 log 0 = 0."""
    p = np.clip(np.asarray(p, dtype=float), 0.0, 1.0)
    q = 1.0 - p
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -np.where(p > 0, p * np.log2(p), 0.0) - np.where(q > 0, q * np.log2(q), 0.0)
    return h


@numba.njit(cache=True)
def _normal_pdf(z, mu, sigma):
    d = (z - mu) / sigma
    return math.exp(-0.5 * d * d) / (sigma * 2.5066282746310002)


@numba.njit(cache=True)
def _update_beam(pmf, mhat, values, cells, entries, n, z, is_max, sigma, eps, miss, zmax):
    """Bayes update of the first ``n`` chain cells for one measurement; returns 1 on a degenerate cell."""
    if n == 0:
        return 0
    k_bins = values.shape[0]
    d = np.empty(n)
    m = np.empty(n)
    for i in range(n):
        m[i] = mhat[cells[i]]
        d[i] = miss if is_max else (1.0 - miss) * _normal_pdf(z, entries[i], sigma)
    u = 0.0 if is_max else eps / zmax
    # suffix recursion R_k = m_{k+1} d_{k+1} + (1 - m_{k+1}) R_{k+1}, R_n = [Max]
    r = np.empty(n)
    r[n - 1] = 1.0 if is_max else 0.0
    for i in range(n - 2, -1, -1):
        r[i] = m[i + 1] * d[i + 1] + (1.0 - m[i + 1]) * r[i + 1]
    degenerate = 0
    a = 0.0
    s = 1.0
    post = np.empty(k_bins)
    for i in range(n):
        c = cells[i]
        tot = 0.0
        for b in range(k_bins):
            v = values[b]
            lik = (1.0 - eps) * (a + s * (v * d[i] + (1.0 - v) * r[i])) + u
            post[b] = pmf[c, b] * lik
            tot += post[b]
        if tot > 1e-300 and math.isfinite(tot):
            for b in range(k_bins):
                pmf[c, b] = post[b] / tot
        else:
            degenerate = 1
        a += m[i] * s * d[i]
        s *= 1.0 - m[i]
    for i in range(n):
        c = cells[i]
        acc = 0.0
        for b in range(k_bins):
            acc += pmf[c, b] * values[b]
        mhat[c] = acc
    return degenerate


@dataclass(eq=False)
class BeliefMap:
    """Dense grid of occupancy histograms matching a world geometry.

    ``pmf`` is stored flat with shape ``(n_cells, n_bins)``; cell ``iy * width + ix``.
    """

    geometry: GridGeometry
    config: CRMConfig = field(default_factory=CRMConfig)
    pmf: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        k = self.config.n_bins
        if self.pmf is None:
            self.pmf = np.full((self.geometry.n_cells, k), 1.0 / k)
        else:
            self.pmf = np.ascontiguousarray(self.pmf, dtype=float).reshape(self.geometry.n_cells, k)
        self.values = bin_values(k)
        self._mhat = self.pmf @ self.values
        self.degenerate_updates = 0

    @classmethod
    def for_world(cls, world: GroundTruthMap, config: CRMConfig | None = None) -> "BeliefMap":
        return cls(world.geometry, config or CRMConfig())

    def copy(self) -> "BeliefMap":
        return BeliefMap(self.geometry, self.config, self.pmf.copy())

    # --- queries -------------------------------------------------------
    def expected_occupancy(self) -> np.ndarray:
        """(height, width) view of the expected occupancy; treat as read-only."""
        return self._mhat.reshape(self.geometry.height, self.geometry.width)

    def mhat_flat(self) -> np.ndarray:
        return self._mhat

    def variance(self) -> np.ndarray:
        return belief_variance(self.pmf).reshape(self.geometry.height, self.geometry.width)

    def cell_pmf(self, ix: int, iy: int) -> np.ndarray:
        return self.pmf[self.geometry.flat_index(ix, iy)]

    def set_cell_pmf(self, ix: int, iy: int, pmf) -> None:
        i = self.geometry.flat_index(ix, iy)
        self.pmf[i] = pmf
        self._mhat[i] = self.pmf[i] @ self.values

    def set_all(self, pmf_grid: np.ndarray) -> None:
        self.pmf[:] = np.asarray(pmf_grid, dtype=float).reshape(self.pmf.shape)
        self._mhat = self.pmf @ self.values

    def snapshot_equal(self, other: "BeliefMap") -> bool:
        return self.geometry == other.geometry and np.array_equal(self.pmf, other.pmf)

    # --- updates -------------------------------------------------------
    def update_cell_chain(self, beam: Beam, measured_range: float, sensor: SensorConfig) -> int:
        """Bayes-update the cells of one beam; returns the number of updated cells.

        For a range return only cells entered before ``measured_range + 4 sigma`` take
        part; cells further out are untouched.
        """
        cfg = self.config
        sigma = cfg.likelihood_sigma(sensor)
        is_max = math.isinf(measured_range)
        entries = np.ascontiguousarray(beam.cell_entries, dtype=float)
        n = len(entries) if is_max else int(np.searchsorted(entries, measured_range + 4.0 * sigma, side="right"))
        if n == 0:
            return 0
        bad = _update_beam(self.pmf, self._mhat, self.values,
                           np.ascontiguousarray(beam.cell_chain, dtype=np.int64), entries, n,
                           0.0 if is_max else float(measured_range), is_max, sigma,
                           cfg.spurious_rate, cfg.miss_rate, sensor.max_range)
        if bad:
            self.degenerate_updates += 1
            log.warning("degenerate posterior on a beam at angle %.3f; prior kept", beam.angle)
        return n

    def integrate_scan(self, scan: Scan, sensor: SensorConfig) -> None:
        """Apply every beam of a scan in angular order."""
        for beam in scan.beams:
            self.update_cell_chain(beam, beam.measured_range, sensor)

    # --- metrics -------------------------------------------------------
    def entropy(self) -> float:
        return map_entropy(self)

    def coverage(self, epsilon: float = 0.05) -> float:
        return coverage(self, epsilon)

    # --- export --------------------------------------------------------
    def export(self, path, variance_path=None) -> None:
        """Write m-hat as a gray map (free cells bright) plus an optional variance sidecar."""
        gray = np.rint(255.0 * (1.0 - self.expected_occupancy())).astype(int)
        write_gray_grid(path, self.geometry, gray)
        if variance_path is not None:
            g = self.geometry
            var = self.variance()
            lines = [VARIANCE_MAGIC, f"{g.width} {g.height}",
                     f"{g.resolution!r} {g.origin[0]!r} {g.origin[1]!r}"]
            lines += [" ".join(repr(float(v)) for v in row) for row in var]
            with open(variance_path, "w") as fh:
                fh.write("\n".join(lines) + "\n")


def update_cell_chain(belief: BeliefMap, beam: Beam, measured_range: float, cfg: SensorConfig) -> int:
    return belief.update_cell_chain(beam, measured_range, cfg)


def map_entropy(belief: BeliefMap) -> float:
    """Sum of per-cell binary entropies of the expected occupancy, in bits."""
    return float(binary_entropy(belief.mhat_flat()).sum())


def coverage(belief: BeliefMap, epsilon: float = 0.05) -> float:
    """Fraction of cells whose expected occupancy deviates from 0.5 by more than ``epsilon``."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    m = belief.mhat_flat()
    return float(np.count_nonzero(np.abs(m - 0.5) > epsilon)) / m.size


def load_variance(path) -> np.ndarray:
    lines = open(path).read().splitlines()
    if lines[0].strip() != VARIANCE_MAGIC:
        raise ValueError("not a variance sidecar")
    w, h = (int(t) for t in lines[1].split())
    return np.array([[float(t) for t in ln.split()] for ln in lines[3:3 + h]]).reshape(h, w)


__all__ = [
    "BeliefMap", "CRMConfig", "MAP_MAGIC", "belief_variance", "bin_values", "binary_entropy",
    "coverage", "expected_occupancy", "load_variance", "map_entropy", "uniform_pmf", "update_cell_chain",
]
