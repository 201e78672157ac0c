"""Ground-truth maze world: grid model, generation, coordinates, ray casting.

Frame convention: x grows east (columns), y grows north (rows), theta turns
counter-clockwise from +x and is kept in (-pi, pi].  Grid row 0 sits at y=0.
"""

from __future__ import annotations

import math
import random
from collections import deque
from dataclasses import InitVar, dataclass
from enum import Enum

TWO_PI = 2.0 * math.pi


class InvalidDimensions(ValueError):
    pass


class OutOfBounds(ValueError):
    pass


class InvalidGoal(ValueError):
    pass


class InvalidMaze(ValueError):
    pass


class PoseInWall(ValueError):
    pass


def wrap_angle(a: float) -> float:
    """Normalize an angle in radians to the half-open interval (-pi, pi]."""
    w = (a + math.pi) % TWO_PI - math.pi
    return math.pi if w <= -math.pi else w


class CellState(Enum):
    WALL = "#"
    FREE = "."


@dataclass(frozen=True)
class GridIndex:
    col: int
    row: int

    def __post_init__(self) -> None:
        if self.col < 0 or self.row < 0:
            raise OutOfBounds(f"negative grid index ({self.col}, {self.row})")


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self) -> None:
        # keep the normalization invariant without trusting callers
        object.__setattr__(self, "theta", wrap_angle(float(self.theta)))


@dataclass(frozen=True)
class MazeSpec:
    """Immutable maze description.

    ``cells[row][col]`` holds the cell state; ``unchecked=True`` skips the
    structural validation and is reserved for internal, already-vetted grids
    (for example a map recovered from imagery that may be slightly wrong).
    """

    width_cells: int
    height_cells: int
    cell_size: float
    cells: tuple[tuple[CellState, ...], ...]
    start: Pose
    goal: GridIndex
    unchecked: InitVar[bool] = False

    def __post_init__(self, unchecked: bool) -> None:
        if unchecked:
            return
        if self.width_cells < 1 or self.height_cells < 1:
            raise InvalidMaze(
                f"maze must be at least 1x1, got {self.width_cells}x{self.height_cells}"
            )
        if not (self.cell_size > 0.0 and math.isfinite(self.cell_size)):
            raise InvalidMaze(f"cell_size must be positive and finite, got {self.cell_size}")
        if len(self.cells) != self.height_cells:
            raise InvalidMaze(
                f"expected {self.height_cells} rows, got {len(self.cells)}"
            )
        for r, row in enumerate(self.cells):
            if len(row) != self.width_cells:
                raise InvalidMaze(
                    f"row {r} has {len(row)} cells, expected {self.width_cells}"
                )
        for r, row in enumerate(self.cells):
            for c, cell in enumerate(row):
                on_border = (
                    r == 0
                    or r == self.height_cells - 1
                    or c == 0
                    or c == self.width_cells - 1
                )
                if on_border and cell is not CellState.WALL:
                    raise InvalidMaze(f"border cell (col {c}, row {r}) is not a wall")
        start_cell = world_to_grid(self.start, self)
        if not self.is_free(start_cell.col, start_cell.row):
            raise InvalidMaze(
                f"start pose lies in wall cell (col {start_cell.col}, row {start_cell.row})"
            )
        if not self.in_bounds(self.goal.col, self.goal.row):
            raise InvalidMaze(f"goal (col {self.goal.col}, row {self.goal.row}) out of bounds")
        if not self.is_free(self.goal.col, self.goal.row):
            raise InvalidMaze(f"goal (col {self.goal.col}, row {self.goal.row}) is a wall")
        if not self._connected(start_cell, self.goal):
            raise InvalidMaze("no free path from start to goal")

    def in_bounds(self, col: int, row: int) -> bool:
        return 0 <= col < self.width_cells and 0 <= row < self.height_cells

    def is_free(self, col: int, row: int) -> bool:
        """True for in-bounds Free cells; anything out of bounds reads as blocked."""
        return self.in_bounds(col, row) and self.cells[row][col] is CellState.FREE

    def is_wall(self, col: int, row: int) -> bool:
        return not self.is_free(col, row)

    @property
    def start_cell(self) -> GridIndex:
        return world_to_grid(self.start, self)

    def rows_as_text(self) -> tuple[str, ...]:
        return tuple("".join(cell.value for cell in row) for row in self.cells)

    def _connected(self, a: GridIndex, b: GridIndex) -> bool:
        seen = {(a.col, a.row)}
        queue = deque([(a.col, a.row)])
        while queue:
            col, row = queue.popleft()
            if (col, row) == (b.col, b.row):
                return True
            for dc, dr in ((1, 0), (0, 1), (-1, 0), (0, -1)):
                nxt = (col + dc, row + dr)
                if nxt not in seen and self.is_free(*nxt):
                    seen.add(nxt)
                    queue.append(nxt)
        return False


def cells_from_text(rows: list[str] | tuple[str, ...]) -> tuple[tuple[CellState, ...], ...]:
    """Parse '#'/'.' row strings (row 0 at y=0) into a cell grid."""
    grid: list[tuple[CellState, ...]] = []
    for r, row in enumerate(rows):
        parsed = []
        for ch in row:
            if ch == "#":
                parsed.append(CellState.WALL)
            elif ch == ".":
                parsed.append(CellState.FREE)
            else:
                raise InvalidMaze(f"row {r} contains invalid cell character {ch!r}")
        grid.append(tuple(parsed))
    return tuple(grid)


_CARVE_DIRS = ((2, 0), (0, 2), (-2, 0), (0, -2))


def generate_maze(width_cells: int, height_cells: int, cell_size: float, seed: int) -> MazeSpec:
    """Carve a perfect maze with seeded depth-first search on the odd lattice.

    Start is the first carved cell; the goal is the Free cell farthest from
    it by BFS (first in row-major order on ties).  Pure function of its
    arguments.
    """
    if width_cells < 5 or height_cells < 5 or width_cells % 2 == 0 or height_cells % 2 == 0:
        raise InvalidDimensions(
            f"maze dims must be odd and >= 5, got {width_cells}x{height_cells}"
        )
    if not (cell_size > 0.0 and math.isfinite(cell_size)):
        raise InvalidDimensions(f"cell_size must be positive and finite, got {cell_size}")

    rng = random.Random(seed)
    grid = [[CellState.WALL] * width_cells for _ in range(height_cells)]
    grid[1][1] = CellState.FREE
    stack: list[tuple[int, int]] = [(1, 1)]
    while stack:
        col, row = stack[-1]
        options = [
            (dc, dr)
            for dc, dr in _CARVE_DIRS
            if 0 < col + dc < width_cells - 1
            and 0 < row + dr < height_cells - 1
            and grid[row + dr][col + dc] is CellState.WALL
        ]
        if not options:
            stack.pop()
            continue
        dc, dr = options[rng.randrange(len(options))]
        grid[row + dr // 2][col + dc // 2] = CellState.FREE
        grid[row + dr][col + dc] = CellState.FREE
        stack.append((col + dc, row + dr))

    dist = _bfs_distances(grid, width_cells, height_cells, (1, 1))
    far_cell = (1, 1)
    far_dist = -1
    for row in range(height_cells):
        for col in range(width_cells):
            d = dist.get((col, row), -1)
            if d > far_dist:
                far_dist = d
                far_cell = (col, row)

    theta = 0.0 if grid[1][2] is CellState.FREE else math.pi / 2.0
    start = Pose(1.5 * cell_size, 1.5 * cell_size, theta)
    return MazeSpec(
        width_cells=width_cells,
        height_cells=height_cells,
        cell_size=cell_size,
        cells=tuple(tuple(row) for row in grid),
        start=start,
        goal=GridIndex(*far_cell),
    )


def _bfs_distances(
    grid: list[list[CellState]] | tuple[tuple[CellState, ...], ...],
    width: int,
    height: int,
    origin: tuple[int, int],
) -> dict[tuple[int, int], int]:
    dist = {origin: 0}
    queue = deque([origin])
    while queue:
        col, row = queue.popleft()
        for dc, dr in ((1, 0), (0, 1), (-1, 0), (0, -1)):
            nc, nr = col + dc, row + dr
            if (
                0 <= nc < width
                and 0 <= nr < height
                and (nc, nr) not in dist
                and grid[nr][nc] is CellState.FREE
            ):
                dist[(nc, nr)] = dist[(col, row)] + 1
                queue.append((nc, nr))
    return dist


def world_to_grid(p: Pose | tuple[float, float], maze: MazeSpec) -> GridIndex:
    """Map a continuous point to the cell containing it."""
    x, y = (p.x, p.y) if isinstance(p, Pose) else (float(p[0]), float(p[1]))
    col = math.floor(x / maze.cell_size)
    row = math.floor(y / maze.cell_size)
    if col < 0 or row < 0 or col >= maze.width_cells or row >= maze.height_cells:
        raise OutOfBounds(f"point ({x}, {y}) outside maze")
    return GridIndex(col, row)


def grid_to_world(g: GridIndex, maze: MazeSpec) -> tuple[float, float]:
    """Center point of a cell."""
    if not maze.in_bounds(g.col, g.row):
        raise OutOfBounds(f"grid index (col {g.col}, row {g.row}) outside maze")
    return ((g.col + 0.5) * maze.cell_size, (g.row + 0.5) * maze.cell_size)


@dataclass(frozen=True)
class DistanceField:
    """Per-cell BFS distance-in-cells to a goal; None marks unreachable cells."""

    goal: GridIndex
    cells: tuple[tuple[int | None, ...], ...]

    def distance(self, col: int, row: int) -> int | None:
        return self.cells[row][col]


def distance_field(maze: MazeSpec, goal: GridIndex) -> DistanceField:
    """Flood-fill distances over 4-connected Free cells."""
    if not maze.in_bounds(goal.col, goal.row):
        raise OutOfBounds(f"goal (col {goal.col}, row {goal.row}) outside maze")
    if maze.is_wall(goal.col, goal.row):
        raise InvalidGoal(f"goal (col {goal.col}, row {goal.row}) is a wall")
    dist = _bfs_distances(maze.cells, maze.width_cells, maze.height_cells, (goal.col, goal.row))
    rows = tuple(
        tuple(dist.get((col, row)) for col in range(maze.width_cells))
        for row in range(maze.height_cells)
    )
    return DistanceField(goal=goal, cells=rows)


def maze_area_m2(maze: MazeSpec) -> float:
    return maze.width_cells * maze.height_cells * maze.cell_size**2


@dataclass(frozen=True)
class MotionInput:
    """Commanded unicycle twist (v forward m/s, omega ccw rad/s) held for dt seconds."""

    v: float
    omega: float
    dt: float


@dataclass(frozen=True)
class RayHit:
    """First wall struck by a ray.

    ``normal`` is the outward face normal of the struck wall cell, one of
    "E", "N", "W", "S"; ``offset`` is the hit position along that face in
    meters from the face's low corner.
    """

    distance: float
    x: float
    y: float
    cell: GridIndex
    normal: str
    offset: float


def cast_ray(maze: MazeSpec, x: float, y: float, theta: float) -> RayHit:
    """March a ray through the grid until it strikes a wall cell.

    Uses the standard voxel-traversal walk; the walled border guarantees
    termination.  Grid-corner ties advance along x first.
    """
    cs = maze.cell_size
    col = math.floor(x / cs)
    row = math.floor(y / cs)
    if not maze.in_bounds(col, row):
        raise OutOfBounds(f"ray origin ({x}, {y}) outside maze")
    if maze.cells[row][col] is CellState.WALL:
        raise PoseInWall(f"ray origin ({x}, {y}) inside wall cell (col {col}, row {row})")

    dx = math.cos(theta)
    dy = math.sin(theta)
    step_c = 1 if dx > 0 else -1
    step_r = 1 if dy > 0 else -1
    if dx != 0.0:
        next_x = (col + (1 if dx > 0 else 0)) * cs
        t_max_x = (next_x - x) / dx
        t_delta_x = cs / abs(dx)
    else:
        t_max_x = math.inf
        t_delta_x = math.inf
    if dy != 0.0:
        next_y = (row + (1 if dy > 0 else 0)) * cs
        t_max_y = (next_y - y) / dy
        t_delta_y = cs / abs(dy)
    else:
        t_max_y = math.inf
        t_delta_y = math.inf

    while True:
        if t_max_x <= t_max_y:
            t = t_max_x
            col += step_c
            normal = "W" if step_c > 0 else "E"
            t_max_x += t_delta_x
        else:
            t = t_max_y
            row += step_r
            normal = "S" if step_r > 0 else "N"
            t_max_y += t_delta_y
        if not maze.in_bounds(col, row):
            raise InvalidMaze("ray escaped the maze; border must be fully walled")
        if maze.cells[row][col] is CellState.WALL:
            hx = x + t * dx
            hy = y + t * dy
            raw = (hy - row * cs) if normal in ("E", "W") else (hx - col * cs)
            offset = min(max(raw, 0.0), cs)
            return RayHit(
                distance=t,
                x=hx,
                y=hy,
                cell=GridIndex(col, row),
                normal=normal,
                offset=offset,
            )
