"""Beam range sensor: grid traversal, noisy scans against the truth, virtual scans against a belief."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numba
import numpy as np

from .world import GridGeometry, GroundTruthMap, Pose, is_free

MAX_RANGE = math.inf  # measured_range value for "no return within Z_m"
DEFAULT_OCCUPIED_THRESHOLD = 0.65


@dataclass(frozen=True)
class SensorConfig:
    fov: float = 3.0
    angular_resolution: float = 0.05
    max_range: float = 6.0
    range_noise_sigma: float = 0.03

    def __post_init__(self):
        if not 0 < self.fov <= 2 * math.pi:
            raise ValueError("fov must lie in (0, 2*pi]")
        if not self.angular_resolution > 0:
            raise ValueError("angular_resolution must be positive")
        if not self.max_range > 0:
            raise ValueError("max_range must be positive")
        if self.range_noise_sigma < 0:
            raise ValueError("range_noise_sigma must be non-negative")

    @property
    def n_beams(self) -> int:
        return int(math.floor(self.fov / self.angular_resolution + 1e-9)) + 1

    def beam_offsets(self) -> np.ndarray:
        """Beam angles relative to the heading, spanning [-fov/2, fov/2]."""
        return -0.5 * self.fov + self.angular_resolution * np.arange(self.n_beams)


class RayTrace(NamedTuple):
    cells: np.ndarray    # flat cell indices, sensor outward
    ranges: np.ndarray   # distance to the midpoint of the ray segment inside each cell
    entries: np.ndarray  # distance at which the ray enters each cell


@dataclass
class Beam:
    angle: float
    measured_range: float
    cell_chain: np.ndarray = field(repr=False)
    cell_ranges: np.ndarray = field(repr=False)
    cell_entries: np.ndarray = field(repr=False)

    @property
    def is_max(self) -> bool:
        return math.isinf(self.measured_range)


@dataclass
class Scan:
    pose: Pose
    beams: list[Beam]


@numba.njit(cache=True)
def _cast(gx, gy, dx, dy, rmax, width, height, cells, entries, exits):
    """Amanatides-Woo traversal in cell units. Returns the number of cells written."""
    ix = int(math.floor(gx))
    iy = int(math.floor(gy))
    inf = np.inf
    if abs(dx) < 1e-12:
        dx = 0.0  # grazing along a grid line stays in the row or column the origin lies in
    if abs(dy) < 1e-12:
        dy = 0.0
    if dx > 0.0:
        step_x = 1
        t_max_x = (ix + 1 - gx) / dx
        t_dx = 1.0 / dx
    elif dx < 0.0:
        step_x = -1
        t_max_x = (gx - ix) / -dx
        t_dx = -1.0 / dx
    else:
        step_x = 0
        t_max_x = inf
        t_dx = inf
    if dy > 0.0:
        step_y = 1
        t_max_y = (iy + 1 - gy) / dy
        t_dy = 1.0 / dy
    elif dy < 0.0:
        step_y = -1
        t_max_y = (gy - iy) / -dy
        t_dy = -1.0 / dy
    else:
        step_y = 0
        t_max_y = inf
        t_dy = inf
    n = 0
    t = 0.0
    cap = cells.shape[0]
    while n < cap:
        if ix < 0 or iy < 0 or ix >= width or iy >= height or t >= rmax:
            break
        t_next = min(t_max_x, t_max_y)
        if t_next > t:
            cells[n] = iy * width + ix
            entries[n] = t
            exits[n] = min(t_next, rmax)
            n += 1
        if abs(t_max_x - t_max_y) <= 1e-12:
            # exact corner crossing: the diagonal cell is the only one entered
            ix += step_x
            iy += step_y
            t_max_x += t_dx
            t_max_y += t_dy
        elif t_max_x < t_max_y:
            ix += step_x
            t_max_x += t_dx
        else:
            iy += step_y
            t_max_y += t_dy
        t = t_next
    return n


@numba.njit(cache=True)
def _cast_fan(ox, oy, heading, offsets, rmax, res, x0, y0, width, height):
    """Trace every beam of a scan; returns padded (cells, entries, exits) plus per-beam counts."""
    nb = offsets.shape[0]
    cap = 2 * int(math.ceil(rmax / res)) + 4
    cells = np.full((nb, cap), -1, dtype=np.int64)
    entries = np.zeros((nb, cap))
    exits = np.zeros((nb, cap))
    counts = np.zeros(nb, dtype=np.int64)
    gx = (ox - x0) / res
    gy = (oy - y0) / res
    for j in range(nb):
        a = heading + offsets[j]
        counts[j] = _cast(gx, gy, math.cos(a), math.sin(a), rmax / res, width, height,
                          cells[j], entries[j], exits[j])
    for j in range(nb):
        for i in range(counts[j]):
            entries[j, i] *= res
            exits[j, i] *= res
    return cells, entries, exits, counts


def _check_origin(geometry: GridGeometry, x: float, y: float):
    if not geometry.contains(x, y):
        raise ValueError(f"ray origin ({x:.3f}, {y:.3f}) lies outside the map extent")


def cast_fan(geometry: GridGeometry, pose: Pose, offsets: np.ndarray, max_range: float):
    _check_origin(geometry, pose.x, pose.y)
    return _cast_fan(pose.x, pose.y, pose.heading, np.asarray(offsets, dtype=float), float(max_range),
                     geometry.resolution, geometry.origin[0], geometry.origin[1],
                     geometry.width, geometry.height)


def raycast(geometry: GridGeometry, origin, angle: float, max_range: float) -> RayTrace:
    """Every cell whose interior the ray crosses, ordered by entry distance, up to ``max_range``."""
    x, y = (origin.x, origin.y) if isinstance(origin, Pose) else origin
    _check_origin(geometry, x, y)
    cells, entries, exits, counts = _cast_fan(
        float(x), float(y), float(angle), np.zeros(1), float(max_range), geometry.resolution,
        geometry.origin[0], geometry.origin[1], geometry.width, geometry.height)
    n = counts[0]
    return RayTrace(cells[0, :n].copy(), 0.5 * (entries[0, :n] + exits[0, :n]), entries[0, :n].copy())


def _beams(angles, cells, entries, exits, counts, measured):
    beams = []
    for j in range(len(angles)):
        n = counts[j]
        beams.append(Beam(float(angles[j]), float(measured[j]), cells[j, :n].copy(),
                          0.5 * (entries[j, :n] + exits[j, :n]), entries[j, :n].copy()))
    return beams


def simulate_scan(truth: GroundTruthMap, pose: Pose, cfg: SensorConfig, rng=None) -> Scan:
    """Noisy scan against the ground truth; each beam returns at the first occupied cell boundary."""
    if not is_free(truth, pose):
        raise ValueError(f"scan pose {pose} is not free in the ground truth")
    offsets = cfg.beam_offsets()
    cells, entries, exits, counts = cast_fan(truth.geometry, pose, offsets, cfg.max_range)
    occ_flat = truth.occupied.ravel()
    valid = np.arange(cells.shape[1])[None, :] < counts[:, None]
    hit = np.where(valid, occ_flat[np.where(valid, cells, 0)], False)
    has_hit = hit.any(axis=1)
    first = np.argmax(hit, axis=1)
    measured = np.where(has_hit, entries[np.arange(len(offsets)), first], MAX_RANGE)
    if cfg.range_noise_sigma > 0 and has_hit.any():
        if rng is None:
            raise ValueError("a random generator is required when range_noise_sigma > 0")
        noise = rng.normal(0.0, cfg.range_noise_sigma, size=len(offsets))
        noisy = np.clip(measured + noise, 1e-6, cfg.max_range)
        measured = np.where(has_hit, noisy, MAX_RANGE)
    # cells beyond the return stay in the chain; the map update truncates at the measured range
    return Scan(pose, _beams(pose.heading + offsets, cells, entries, exits, counts, measured))


def virtual_scan(belief, pose: Pose, cfg: SensorConfig,
                 occupied_threshold: float = DEFAULT_OCCUPIED_THRESHOLD) -> Scan:
    """Noise-free scan against a belief map.

    A beam stops at (and includes) the first cell whose expected occupancy exceeds
    ``occupied_threshold``; otherwise it runs to the maximum range and reports Max.
    """
    offsets = cfg.beam_offsets()
    cells, entries, exits, counts = cast_fan(belief.geometry, pose, offsets, cfg.max_range)
    mhat = belief.expected_occupancy().ravel()
    measured = np.full(len(offsets), MAX_RANGE)
    counts = counts.copy()
    for j in range(len(offsets)):
        n = counts[j]
        blocked = np.nonzero(mhat[cells[j, :n]] > occupied_threshold)[0]
        if blocked.size:
            k = blocked[0]
            counts[j] = k + 1
            measured[j] = entries[j, k]
    return Scan(pose, _beams(pose.heading + offsets, cells, entries, exits, counts, measured))
