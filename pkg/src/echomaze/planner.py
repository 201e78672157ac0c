"""Maze-solving walks and compilation of cell paths into movement primitives."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from enum import Enum

from .world import GridIndex, MazeSpec, MotionInput


class NoPath(ValueError):
    pass


class StepCapExceeded(RuntimeError):
    pass


class InvalidPath(ValueError):
    pass


class Direction(Enum):
    NORTH = "N"
    EAST = "E"
    SOUTH = "S"
    WEST = "W"

    @property
    def vector(self) -> tuple[int, int]:
        return _VECTORS[self]

    @property
    def theta(self) -> float:
        return _THETAS[self]

    def left(self) -> "Direction":
        return _CCW[(_CCW.index(self) + 1) % 4]

    def right(self) -> "Direction":
        return _CCW[(_CCW.index(self) - 1) % 4]

    def back(self) -> "Direction":
        return _CCW[(_CCW.index(self) + 2) % 4]

    @staticmethod
    def from_theta(theta: float) -> "Direction":
        """Nearest compass direction to a heading angle."""
        return _CCW[round(theta / (math.pi / 2.0)) % 4]


_CCW = (Direction.EAST, Direction.NORTH, Direction.WEST, Direction.SOUTH)
_VECTORS = {
    Direction.NORTH: (0, 1),
    Direction.EAST: (1, 0),
    Direction.SOUTH: (0, -1),
    Direction.WEST: (-1, 0),
}
_THETAS = {
    Direction.EAST: 0.0,
    Direction.NORTH: math.pi / 2.0,
    Direction.WEST: math.pi,
    Direction.SOUTH: -math.pi / 2.0,
}

# deterministic tie-break everywhere a cell's neighbors are enumerated
NEIGHBOR_ORDER = (Direction.NORTH, Direction.EAST, Direction.SOUTH, Direction.WEST)


class Hand(Enum):
    LEFT = "left"
    RIGHT = "right"


@dataclass(frozen=True)
class Forward:
    cells: int

    def __post_init__(self) -> None:
        if self.cells < 1:
            raise ValueError(f"Forward needs at least one cell, got {self.cells}")


@dataclass(frozen=True)
class TurnLeft:
    pass


@dataclass(frozen=True)
class TurnRight:
    pass


MovePrimitive = Forward | TurnLeft | TurnRight


class Provenance(Enum):
    BFS = "bfs"
    WALL_FOLLOWER = "wall_follower"
    MANUAL = "manual"


@dataclass(frozen=True)
class Plan:
    primitives: tuple[MovePrimitive, ...]
    provenance: Provenance


def solve_bfs(maze: MazeSpec, start: GridIndex, goal: GridIndex) -> list[GridIndex]:
    """Shortest 4-connected path, endpoints included.

    Ties between equal-length paths resolve by expanding neighbors in
    N, E, S, W order, so the result is deterministic.
    """
    if not maze.is_free(start.col, start.row):
        raise NoPath(f"start cell (col {start.col}, row {start.row}) is not free")
    if not maze.is_free(goal.col, goal.row):
        raise NoPath(f"goal cell (col {goal.col}, row {goal.row}) is not free")
    if start == goal:
        return [start]
    parent: dict[tuple[int, int], tuple[int, int]] = {(start.col, start.row): (-1, -1)}
    queue = deque([(start.col, start.row)])
    target = (goal.col, goal.row)
    while queue:
        cur = queue.popleft()
        if cur == target:
            break
        for d in NEIGHBOR_ORDER:
            dc, dr = d.vector
            nxt = (cur[0] + dc, cur[1] + dr)
            if nxt not in parent and maze.is_free(*nxt):
                parent[nxt] = cur
                queue.append(nxt)
    if target not in parent:
        raise NoPath(
            f"no free path from (col {start.col}, row {start.row}) "
            f"to (col {goal.col}, row {goal.row})"
        )
    path = [target]
    while path[-1] != (start.col, start.row):
        path.append(parent[path[-1]])
    path.reverse()
    return [GridIndex(c, r) for c, r in path]


def wall_follower(
    maze: MazeSpec,
    start: GridIndex,
    heading: Direction,
    goal: GridIndex,
    hand: Hand,
    step_cap: int | None = None,
) -> list[GridIndex]:
    """Classic hand-on-wall walk; complete on perfect mazes, capped otherwise."""
    if not maze.is_free(start.col, start.row):
        raise NoPath(f"start cell (col {start.col}, row {start.row}) is not free")
    if not maze.is_free(goal.col, goal.row):
        raise NoPath(f"goal cell (col {goal.col}, row {goal.row}) is not free")
    if step_cap is None:
        step_cap = 4 * maze.width_cells * maze.height_cells
    path = [start]
    pos = start
    facing = heading
    steps = 0
    while pos != goal:
        if steps >= step_cap:
            raise StepCapExceeded(f"no goal within {step_cap} steps")
        if hand is Hand.LEFT:
            order = (facing.left(), facing, facing.right(), facing.back())
        else:
            order = (facing.right(), facing, facing.left(), facing.back())
        for d in order:
            dc, dr = d.vector
            if maze.is_free(pos.col + dc, pos.row + dr):
                pos = GridIndex(pos.col + dc, pos.row + dr)
                facing = d
                break
        else:
            raise StepCapExceeded("start cell has no free neighbor")
        path.append(pos)
        steps += 1
    return path


def path_to_plan(
    path: list[GridIndex],
    start_heading: Direction,
    provenance: Provenance = Provenance.MANUAL,
) -> Plan:
    """Compile a cell path into minimal turns plus merged Forward runs.

    A 180-degree reversal compiles to two TurnLeft.
    """
    if not path:
        raise InvalidPath("empty path")
    directions: list[Direction] = []
    for i in range(len(path) - 1):
        delta = (path[i + 1].col - path[i].col, path[i + 1].row - path[i].row)
        for d in NEIGHBOR_ORDER:
            if d.vector == delta:
                directions.append(d)
                break
        else:
            raise InvalidPath(f"cells {i} and {i + 1} are not 4-adjacent (delta {delta})")
    primitives: list[MovePrimitive] = []
    facing = start_heading
    run = 0
    for d in directions:
        if d is facing:
            run += 1
            continue
        if run:
            primitives.append(Forward(run))
            run = 0
        quarter = (_CCW.index(d) - _CCW.index(facing)) % 4
        if quarter == 1:
            primitives.append(TurnLeft())
        elif quarter == 3:
            primitives.append(TurnRight())
        else:
            primitives.append(TurnLeft())
            primitives.append(TurnLeft())
        facing = d
        run = 1
    if run:
        primitives.append(Forward(run))
    return Plan(tuple(primitives), provenance)


def plan_to_motions(
    plan: Plan, v_cruise: float, omega_cruise: float, cell_size: float
) -> list[MotionInput]:
    """Expand primitives into commanded twists: drive Forward runs, turn in place."""
    if v_cruise <= 0 or omega_cruise <= 0:
        raise ValueError("cruise speeds must be positive")
    motions: list[MotionInput] = []
    for prim in plan.primitives:
        if isinstance(prim, Forward):
            motions.append(MotionInput(v_cruise, 0.0, prim.cells * cell_size / v_cruise))
        elif isinstance(prim, TurnLeft):
            motions.append(MotionInput(0.0, omega_cruise, (math.pi / 2.0) / omega_cruise))
        else:
            motions.append(MotionInput(0.0, -omega_cruise, (math.pi / 2.0) / omega_cruise))
    return motions


def plan_to_text(plan: Plan) -> str:
    """Whitespace-separated log form, e.g. ``F2 L F1 R F3``."""
    parts = []
    for prim in plan.primitives:
        if isinstance(prim, Forward):
            parts.append(f"F{prim.cells}")
        elif isinstance(prim, TurnLeft):
            parts.append("L")
        else:
            parts.append("R")
    return " ".join(parts)


def plan_from_text(text: str, provenance: Provenance = Provenance.MANUAL) -> Plan:
    primitives: list[MovePrimitive] = []
    for token in text.split():
        if token == "L":
            primitives.append(TurnLeft())
        elif token == "R":
            primitives.append(TurnRight())
        elif token.startswith("F") and token[1:].isdigit():
            primitives.append(Forward(int(token[1:])))
        else:
            raise InvalidPath(f"unknown plan token {token!r}")
    return Plan(tuple(primitives), provenance)
