"""Candidate actions around the robot and A* paths between consecutive actions."""

from __future__ import annotations

import heapq
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .crm import BeliefMap
from .sensor import raycast
from .world import Pose, wrap_angle

log = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)
_MOVES = [(1, 0, 1.0), (-1, 0, 1.0), (0, 1, 1.0), (0, -1, 1.0),
          (1, 1, SQRT2), (1, -1, SQRT2), (-1, 1, SQRT2), (-1, -1, SQRT2)]


class PlanningError(RuntimeError):
    """No collision-free path exists between two poses."""


@dataclass(frozen=True)
class PlanConfig:
    n_points: int = 30
    n_headings: int = 8
    n_explicit: int = 80
    radius: float = 6.0
    free_threshold: float = 0.35
    occupied_threshold: float = 0.65
    tail_fraction: float = 0.25  # share of the path, at the goal end, that may cross unknown cells
    max_tries_per_point: int = 50

    def __post_init__(self):
        if self.n_points < 1 or self.n_headings < 1:
            raise ValueError("n_points and n_headings must be positive")
        if self.n_explicit < 1:
            raise ValueError("n_explicit must be positive")
        if not self.radius > 0:
            raise ValueError("radius must be positive")
        if not 0 <= self.free_threshold <= self.occupied_threshold <= 1:
            raise ValueError("need 0 <= free_threshold <= occupied_threshold <= 1")
        if not 0 <= self.tail_fraction <= 1:
            raise ValueError("tail_fraction must lie in [0, 1]")


@dataclass
class ActionSet:
    explicit: list = field(default_factory=list)
    query: list = field(default_factory=list)


@dataclass
class LocalPath:
    waypoints: list
    length: float


class Traversability:
    """Which cells a path between ``start`` and ``goal`` may cross.

    Known-free cells always; unknown cells only close to the goal, within
    ``tail_fraction`` of the straight-line start-goal distance (plus half a cell).
    """

    def __init__(self, belief: BeliefMap, start: Pose, goal: Pose, cfg: PlanConfig = PlanConfig()):
        g = belief.geometry
        m = belief.expected_occupancy()
        self.geometry = g
        ys, xs = np.mgrid[0:g.height, 0:g.width]
        cx = g.origin[0] + (xs + 0.5) * g.resolution
        cy = g.origin[1] + (ys + 0.5) * g.resolution
        reach = cfg.tail_fraction * math.hypot(goal.x - start.x, goal.y - start.y) + 0.5 * g.resolution
        near_goal = np.hypot(cx - goal.x, cy - goal.y) <= reach
        self.mask = (m < cfg.free_threshold) | ((m < cfg.occupied_threshold) & near_goal)
        for p in (start, goal):
            ix, iy = g.cell_of(p.x, p.y)
            if g.in_bounds(ix, iy) and m[iy, ix] < cfg.occupied_threshold:
                self.mask[iy, ix] = True

    def __call__(self, ix: int, iy: int) -> bool:
        return self.geometry.in_bounds(ix, iy) and bool(self.mask[iy, ix])


def heading_set(n_headings: int) -> np.ndarray:
    return np.array([wrap_angle(2.0 * math.pi * j / n_headings) for j in range(n_headings)])


def is_pose_free(belief: BeliefMap, pose: Pose, occupied_threshold: float = 0.65) -> bool:
    g = belief.geometry
    if not g.contains(pose.x, pose.y):
        return False
    ix, iy = g.cell_of(pose.x, pose.y)
    return bool(belief.expected_occupancy()[iy, ix] < occupied_threshold)


def line_reachable(belief: BeliefMap, start: Pose, goal: Pose, cfg: PlanConfig = PlanConfig(),
                   passable: Traversability | None = None) -> bool:
    """Every cell the straight segment crosses is traversable (a 4-connected corridor exists)."""
    passable = passable or Traversability(belief, start, goal, cfg)
    dist = math.hypot(goal.x - start.x, goal.y - start.y)
    if dist == 0:
        return passable(*belief.geometry.cell_of(start.x, start.y))
    trace = raycast(belief.geometry, start, math.atan2(goal.y - start.y, goal.x - start.x), dist)
    w = belief.geometry.width
    cells = list(trace.cells) + [belief.geometry.flat_index(*belief.geometry.cell_of(goal.x, goal.y))]
    return all(passable(int(c) % w, int(c) // w) for c in cells)


def gen_actions(current: Pose, belief: BeliefMap, rng, cfg: PlanConfig = PlanConfig()):
    """Sample reachable free positions in a disk around ``current``, each with every heading.

    Returns ``(candidates, complete)``; ``complete`` is False when the rejection budget ran
    out before ``n_points`` positions were found.
    """
    if not is_pose_free(belief, current, cfg.occupied_threshold):
        raise ValueError(f"current pose {current} is not free on the belief")
    headings = heading_set(cfg.n_headings)
    points = []
    tries = 0
    budget = cfg.max_tries_per_point * cfg.n_points
    while len(points) < cfg.n_points and tries < budget:
        tries += 1
        r = cfg.radius * math.sqrt(rng.random())
        t = 2.0 * math.pi * rng.random()
        p = Pose(current.x + r * math.cos(t), current.y + r * math.sin(t), 0.0)
        if math.hypot(p.x - current.x, p.y - current.y) > cfg.radius:
            continue
        if not is_pose_free(belief, p, cfg.occupied_threshold):
            continue
        if not line_reachable(belief, current, p, cfg):
            continue
        points.append(p)
    complete = len(points) == cfg.n_points
    if not complete:
        log.warning("only %d of %d candidate positions found", len(points), cfg.n_points)
    cands = [Pose(p.x, p.y, float(h)) for p in points for h in headings]
    return cands, complete


def split_actions(candidates: list, n_explicit: int, rng) -> ActionSet:
    """Uniformly random ``n_explicit``-subset for explicit evaluation; the rest become queries."""
    if n_explicit > len(candidates) or n_explicit < 0:
        raise ValueError(f"cannot pick {n_explicit} of {len(candidates)} candidates")
    order = rng.permutation(len(candidates))
    chosen = np.sort(order[:n_explicit])
    rest = np.sort(order[n_explicit:])
    return ActionSet([candidates[i] for i in chosen], [candidates[i] for i in rest])


def octile(dx: int, dy: int) -> float:
    dx, dy = abs(dx), abs(dy)
    return max(dx, dy) + (SQRT2 - 1.0) * min(dx, dy)


def _neighbors(ix, iy, passable):
    for mx, my, cost in _MOVES:
        nx, ny = ix + mx, iy + my
        if not passable(nx, ny):
            continue
        if mx and my and not (passable(ix + mx, iy) and passable(ix, iy + my)):
            continue  # no corner cutting
        yield nx, ny, cost


def grid_search(passable, start_cell, goal_cell, heuristic=True):
    """A* (or Dijkstra without the heuristic) over 8-connected cells; returns (cells, cost in cells)."""
    if not (passable(*start_cell) and passable(*goal_cell)):
        return None, math.inf
    h = (lambda c: octile(c[0] - goal_cell[0], c[1] - goal_cell[1])) if heuristic else (lambda c: 0.0)
    best = {start_cell: 0.0}
    parent = {start_cell: None}
    heap = [(h(start_cell), 0.0, start_cell)]
    closed = set()
    while heap:
        _, g, c = heapq.heappop(heap)
        if c in closed:
            continue
        if c == goal_cell:
            path = [c]
            while parent[path[-1]] is not None:
                path.append(parent[path[-1]])
            return path[::-1], g
        closed.add(c)
        for nx, ny, cost in _neighbors(c[0], c[1], passable):
            n = (nx, ny)
            ng = g + cost
            if ng < best.get(n, math.inf) - 1e-12:
                best[n] = ng
                parent[n] = c
                heapq.heappush(heap, (ng + h(n), ng, n))
    return None, math.inf


def astar(belief: BeliefMap, start: Pose, goal: Pose, cfg: PlanConfig = PlanConfig()) -> LocalPath:
    """Shortest 8-connected path; intermediate waypoints sit at cell centers and face the next one."""
    g = belief.geometry
    for p in (start, goal):
        if not is_pose_free(belief, p, cfg.occupied_threshold):
            raise PlanningError(f"pose {p} is not free on the belief")
    s = g.cell_of(start.x, start.y)
    t = g.cell_of(goal.x, goal.y)
    cells, cost = grid_search(Traversability(belief, start, goal, cfg), s, t)
    if cells is None:
        raise PlanningError(f"no path from {start} to {goal}")
    pts = [(start.x, start.y)] + [g.cell_center(*c) for c in cells[1:-1]]
    if len(cells) > 1:
        pts.append((goal.x, goal.y))
    waypoints = []
    for i, (x, y) in enumerate(pts):
        if i + 1 < len(pts):
            nx, ny = pts[i + 1]
            psi = math.atan2(ny - y, nx - x) if (nx, ny) != (x, y) else goal.heading
        else:
            psi = goal.heading
        waypoints.append(Pose(x, y, psi))
    if len(cells) == 1:
        waypoints = [Pose(start.x, start.y, goal.heading)]
    return LocalPath(waypoints, cost * g.resolution)
