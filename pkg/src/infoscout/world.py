"""Ground-truth 2D worlds: generators, the plain-text map format and geometric queries."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

MAP_MAGIC = "INFOSCOUT-MAP 1"
FREE_GRAY_THRESHOLD = 128
DEFAULT_START = (1.2, 1.2)


class MapParseError(ValueError):
    """Raised for malformed map files; carries the 1-based line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


def wrap_angle(angle: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    return math.pi - (math.pi - angle) % (2.0 * math.pi)


def wrap_angles(angles: np.ndarray) -> np.ndarray:
    return np.pi - np.mod(np.pi - np.asarray(angles, dtype=float), 2.0 * np.pi)


@dataclass(frozen=True)
class Pose:
    """SE(2) robot configuration; the heading is normalized to (-pi, pi]."""

    x: float
    y: float
    heading: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "heading", wrap_angle(float(self.heading)))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.heading])

    @classmethod
    def from_array(cls, a) -> "Pose":
        return cls(float(a[0]), float(a[1]), float(a[2]))

    def distance_to(self, other: "Pose") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


@dataclass(frozen=True)
class GridGeometry:
    width: int
    height: int
    resolution: float
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("grid dimensions must be positive")
        if not self.resolution > 0:
            raise ValueError("resolution must be positive")

    @property
    def n_cells(self) -> int:
        return self.width * self.height

    @property
    def extent(self) -> tuple[float, float, float, float]:
        """(xmin, ymin, xmax, ymax) in meters."""
        ox, oy = self.origin
        return ox, oy, ox + self.width * self.resolution, oy + self.height * self.resolution

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        """(ix, iy) of the cell containing a point; may be out of bounds."""
        ox, oy = self.origin
        return math.floor((x - ox) / self.resolution), math.floor((y - oy) / self.resolution)

    def in_bounds(self, ix: int, iy: int) -> bool:
        return 0 <= ix < self.width and 0 <= iy < self.height

    def contains(self, x: float, y: float) -> bool:
        return self.in_bounds(*self.cell_of(x, y))

    def cell_center(self, ix: int, iy: int) -> tuple[float, float]:
        ox, oy = self.origin
        return ox + (ix + 0.5) * self.resolution, oy + (iy + 0.5) * self.resolution

    def flat_index(self, ix: int, iy: int) -> int:
        return iy * self.width + ix


@dataclass(frozen=True, eq=False)
class GroundTruthMap:
    """Binary world; ``occupied`` is indexed ``[iy, ix]`` (row-major, row 0 at the origin)."""

    geometry: GridGeometry
    occupied: np.ndarray = field(repr=False)

    def __post_init__(self):
        occ = np.array(self.occupied, dtype=bool)
        if occ.shape != (self.geometry.height, self.geometry.width):
            raise ValueError(
                f"cells shape {occ.shape} does not match "
                f"{self.geometry.height}x{self.geometry.width}"
            )
        occ.setflags(write=False)
        object.__setattr__(self, "occupied", occ)

    @property
    def width_cells(self) -> int:
        return self.geometry.width

    @property
    def height_cells(self) -> int:
        return self.geometry.height

    @property
    def resolution(self) -> float:
        return self.geometry.resolution

    @property
    def origin(self) -> tuple[float, float]:
        return self.geometry.origin

    def __eq__(self, other):
        if not isinstance(other, GroundTruthMap):
            return NotImplemented
        return self.geometry == other.geometry and np.array_equal(self.occupied, other.occupied)

    __hash__ = None


def is_free(world: GroundTruthMap, p: Pose) -> bool:
    ix, iy = world.geometry.cell_of(p.x, p.y)
    if not world.geometry.in_bounds(ix, iy):
        return False
    return not bool(world.occupied[iy, ix])


def _check_dims(width_m: float, height_m: float, resolution: float) -> None:
    if not (width_m > 0 and height_m > 0 and resolution > 0):
        raise ValueError("map dimensions and resolution must be positive")


def _blank(width_m: float, height_m: float, resolution: float) -> np.ndarray:
    w = int(round(width_m / resolution))
    h = int(round(height_m / resolution))
    if w < 3 or h < 3:
        raise ValueError("map must be at least 3 cells in each direction")
    occ = np.zeros((h, w), dtype=bool)
    occ[0, :] = occ[-1, :] = True
    occ[:, 0] = occ[:, -1] = True
    return occ


def _clear_disk(occ: np.ndarray, center: tuple[float, float], radius: float, resolution: float):
    h, w = occ.shape
    cy, cx = np.mgrid[0:h, 0:w]
    d2 = ((cx + 0.5) * resolution - center[0]) ** 2 + ((cy + 0.5) * resolution - center[1]) ** 2
    interior = np.zeros_like(occ)
    interior[1:-1, 1:-1] = True
    occ[(d2 <= radius * radius) & interior] = False


def _connect_free_space(occ: np.ndarray, anchor: tuple[int, int] | None = None) -> None:
    """Carve the fewest interior cells needed to join every free component (4-connectivity)."""
    h, w = occ.shape
    while True:
        labels, n = ndimage.label(~occ)
        if n <= 1:
            return
        if anchor is not None and labels[anchor[1], anchor[0]] > 0:
            main = labels[anchor[1], anchor[0]]
        else:
            main = int(np.argmax(np.bincount(labels.ravel())[1:])) + 1
        # 0-1 BFS from the main component; entering an interior wall cell costs 1
        dist = np.full((h, w), np.iinfo(np.int64).max, dtype=np.int64)
        parent = np.full((h, w, 2), -1, dtype=np.int64)
        dq = deque()
        for iy, ix in zip(*np.nonzero(labels == main)):
            dist[iy, ix] = 0
            dq.append((iy, ix))
        target = None
        while dq:
            iy, ix = dq.popleft()
            if labels[iy, ix] not in (0, main):
                target = (iy, ix)
                break
            for dy, dx in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                ny, nx = iy + dy, ix + dx
                if not (0 < ny < h - 1 and 0 < nx < w - 1):
                    continue
                cost = 1 if occ[ny, nx] else 0
                nd = dist[iy, ix] + cost
                if nd < dist[ny, nx]:
                    dist[ny, nx] = nd
                    parent[ny, nx] = (iy, ix)
                    if cost:
                        dq.append((ny, nx))
                    else:
                        dq.appendleft((ny, nx))
        if target is None:
            return
        iy, ix = target
        while parent[iy, ix, 0] >= 0:
            occ[iy, ix] = False
            iy, ix = parent[iy, ix]


def generate_structured(
    width_m: float,
    height_m: float,
    resolution: float,
    seed: int,
    min_room_m: float = 4.0,
    door_m: float = 1.0,
    start: tuple[float, float] = DEFAULT_START,
    start_clearance_m: float = 0.5,
) -> GroundTruthMap:
    """Bordered maze built by recursive division with door gaps of at least 3 cells."""
    _check_dims(width_m, height_m, resolution)
    occ = _blank(width_m, height_m, resolution)
    rng = np.random.default_rng(seed)
    h, w = occ.shape
    min_room = max(2, int(round(min_room_m / resolution)))
    door = max(3, int(round(door_m / resolution)))

    def divide(x0, y0, x1, y1):
        # chamber is the inclusive interior cell box [x0, x1] x [y0, y1]
        cw, ch = x1 - x0 + 1, y1 - y0 + 1
        can_v = cw >= 2 * min_room + 1
        can_h = ch >= 2 * min_room + 1
        if not (can_v or can_h):
            return
        vertical = can_v and (not can_h or cw > ch or (cw == ch and rng.random() < 0.5))
        if vertical:
            wx = int(rng.integers(x0 + min_room, x1 - min_room + 1))
            occ[y0:y1 + 1, wx] = True
            gap = min(door, ch)
            gy = int(rng.integers(y0, y1 - gap + 2))
            occ[gy:gy + gap, wx] = False
            divide(x0, y0, wx - 1, y1)
            divide(wx + 1, y0, x1, y1)
        else:
            wy = int(rng.integers(y0 + min_room, y1 - min_room + 1))
            occ[wy, x0:x1 + 1] = True
            gap = min(door, cw)
            gx = int(rng.integers(x0, x1 - gap + 2))
            occ[wy, gx:gx + gap] = False
            divide(x0, y0, x1, wy - 1)
            divide(x0, wy + 1, x1, y1)

    divide(1, 1, w - 2, h - 2)
    _clear_disk(occ, start, start_clearance_m, resolution)
    anchor = (min(max(int(start[0] / resolution), 1), w - 2), min(max(int(start[1] / resolution), 1), h - 2))
    _connect_free_space(occ, anchor)
    return GroundTruthMap(GridGeometry(w, h, resolution), occ)


def _rasterize_ellipse(occ, resolution, cx, cy, a, b, theta):
    h, w = occ.shape
    r = max(a, b)
    ix0 = max(1, int((cx - r) / resolution) - 1)
    ix1 = min(w - 2, int((cx + r) / resolution) + 1)
    iy0 = max(1, int((cy - r) / resolution) - 1)
    iy1 = min(h - 2, int((cy + r) / resolution) + 1)
    if ix0 > ix1 or iy0 > iy1:
        return
    ys, xs = np.mgrid[iy0:iy1 + 1, ix0:ix1 + 1]
    px = (xs + 0.5) * resolution - cx
    py = (ys + 0.5) * resolution - cy
    c, s = math.cos(theta), math.sin(theta)
    u = c * px + s * py
    v = -s * px + c * py
    inside = (u / a) ** 2 + (v / b) ** 2 <= 1.0
    occ[iy0:iy1 + 1, ix0:ix1 + 1] |= inside


def generate_unstructured(
    width_m: float,
    height_m: float,
    resolution: float,
    n_obstacles: int,
    seed: int,
    axis_range_m: tuple[float, float] = (0.3, 1.2),
    start: tuple[float, float] = DEFAULT_START,
    start_clearance_m: float = 0.6,
) -> GroundTruthMap:
    """Bordered forest-like map of randomly placed circles and ellipses."""
    _check_dims(width_m, height_m, resolution)
    if n_obstacles < 0:
        raise ValueError("n_obstacles must be non-negative")
    occ = _blank(width_m, height_m, resolution)
    rng = np.random.default_rng(seed)
    h, w = occ.shape
    placed = 0
    attempts = 0
    while placed < n_obstacles and attempts < 1000 * max(1, n_obstacles):
        attempts += 1
        a = rng.uniform(*axis_range_m)
        b = a if rng.random() < 0.5 else rng.uniform(*axis_range_m)
        cx = rng.uniform(0.0, w * resolution)
        cy = rng.uniform(0.0, h * resolution)
        if math.hypot(cx - start[0], cy - start[1]) < max(a, b) + start_clearance_m:
            continue
        _rasterize_ellipse(occ, resolution, cx, cy, a, b, rng.uniform(0.0, math.pi))
        placed += 1
    _clear_disk(occ, start, start_clearance_m, resolution)
    anchor = (min(max(int(start[0] / resolution), 1), w - 2), min(max(int(start[1] / resolution), 1), h - 2))
    _connect_free_space(occ, anchor)
    return GroundTruthMap(GridGeometry(w, h, resolution), occ)


def write_gray_grid(path, geometry: GridGeometry, gray: np.ndarray) -> None:
    """Write a gray-level grid (values 0-255, ``[iy, ix]``) in the map file format."""
    gray = np.asarray(gray)
    lines = [
        MAP_MAGIC,
        f"{geometry.width} {geometry.height}",
        f"{geometry.resolution!r} {geometry.origin[0]!r} {geometry.origin[1]!r}",
    ]
    lines += [" ".join(str(int(v)) for v in row) for row in gray]
    Path(path).write_text("\n".join(lines) + "\n")


def save_map(world: GroundTruthMap, path) -> None:
    write_gray_grid(path, world.geometry, np.where(world.occupied, 0, 255))


def load_map(path) -> GroundTruthMap:
    """Parse a map file; gray values >= 128 are Free, below are Occupied.

    Layout: magic line, ``width height``, ``resolution [origin_x origin_y]``, then
    ``height`` rows of ``width`` integers, row 0 being the row at the origin.
    """
    text = Path(path).read_text()
    lines = text.splitlines()
    if not lines or lines[0].strip() != MAP_MAGIC:
        raise MapParseError(f"expected magic line {MAP_MAGIC!r}", 1)
    try:
        w, h = (int(t) for t in lines[1].split())
    except (IndexError, ValueError):
        raise MapParseError("expected '<width> <height>'", 2) from None
    try:
        head = [float(t) for t in lines[2].split()]
        if len(head) not in (1, 3):
            raise ValueError
    except (IndexError, ValueError):
        raise MapParseError("expected '<resolution> [<origin_x> <origin_y>]'", 3) from None
    resolution = head[0]
    origin = (head[1], head[2]) if len(head) == 3 else (0.0, 0.0)
    if w <= 0 or h <= 0:
        raise MapParseError("dimensions must be positive", 2)
    if not resolution > 0:
        raise MapParseError("resolution must be positive", 3)
    rows = []
    for lineno, line in enumerate(lines[3:], start=4):
        if not line.strip():
            continue
        try:
            vals = [int(t) for t in line.split()]
        except ValueError:
            raise MapParseError("non-integer gray value", lineno) from None
        if len(vals) != w:
            raise MapParseError(f"expected {w} values, found {len(vals)}", lineno)
        if any(v < 0 or v > 255 for v in vals):
            raise MapParseError("gray values must lie in 0..255", lineno)
        rows.append(vals)
        if len(rows) > h:
            raise MapParseError(f"more than the declared {h} rows", lineno)
    if len(rows) != h:
        raise MapParseError(f"declared {h} rows, found {len(rows)}", len(lines))
    gray = np.array(rows, dtype=np.int64).reshape(h, w)
    return GroundTruthMap(GridGeometry(w, h, resolution, origin), gray < FREE_GRAY_THRESHOLD)
