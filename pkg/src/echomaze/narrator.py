"""Template narration of the robot's surroundings plus spatial-audio cues.

Bearing convention used everywhere downstream (including the web console's
stereo panner): degrees in (-180, 180], 0 dead ahead, positive to the
robot's left (counter-clockwise).  Narration is a pure function of its
inputs; the same scene and pose always produce byte-identical text.

The pose fed in is normally the EKF estimate, so the student hears what
the system believes rather than what a debugger could see.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from .world import (
    CellState,
    GridIndex,
    MazeSpec,
    Pose,
    PoseInWall,
    world_to_grid,
    wrap_angle,
)


class Undefined(ValueError):
    """Bearing to a point coincident with the observer has no value."""


class EntityKind(Enum):
    WALL = "Wall"
    OPENING = "Opening"
    GOAL = "Goal"
    ROBOT_SELF = "RobotSelf"


@dataclass(frozen=True)
class SceneEntity:
    kind: EntityKind
    bearing_deg: float
    distance_m: float
    cell_dir: str


@dataclass(frozen=True)
class PoseReport:
    """Estimated position phrased relative to the session's start."""

    x: float
    y: float
    heading: str
    cells_east: int
    cells_north: int


@dataclass(frozen=True)
class SceneDescription:
    text: str
    entities: tuple[SceneEntity, ...]
    pose_report: PoseReport


@dataclass(frozen=True)
class AudioCue:
    azimuth_deg: float
    gain: float
    duration_ms: int
    text: str

    def __post_init__(self) -> None:
        if not -180.0 < self.azimuth_deg <= 180.0:
            raise ValueError("azimuth_deg must lie in (-180, 180]")
        if not 0.0 < self.gain <= 1.0:
            raise ValueError("gain must lie in (0, 1]")
        if self.duration_ms <= 0:
            raise ValueError("duration_ms must be positive")


@dataclass(frozen=True)
class LocalPatch:
    """Square occupancy window around the robot's cell, absolute orientation.

    ``cells[dr][dc]`` covers grid row ``center.row - radius + dr`` and
    column ``center.col - radius + dc``; anything beyond the maze border
    reads as Wall.
    """

    cells: tuple[tuple[CellState, ...], ...]
    center: GridIndex
    cell_size: float

    @property
    def radius_cells(self) -> int:
        return (len(self.cells) - 1) // 2


def sense_local(maze: MazeSpec, true_pose: Pose, radius_cells: int) -> LocalPatch:
    """Copy the (2r+1)-square occupancy around the robot's cell."""
    if radius_cells < 1:
        raise ValueError("radius_cells must be at least 1")
    cell = world_to_grid(true_pose, maze)
    if maze.is_wall(cell.col, cell.row):
        raise PoseInWall(f"pose ({true_pose.x}, {true_pose.y}) inside a wall cell")
    rows = []
    for dr in range(-radius_cells, radius_cells + 1):
        row = []
        for dc in range(-radius_cells, radius_cells + 1):
            c, r = cell.col + dc, cell.row + dr
            if maze.in_bounds(c, r):
                row.append(maze.cells[r][c])
            else:
                row.append(CellState.WALL)
        rows.append(tuple(row))
    return LocalPatch(tuple(rows), cell, maze.cell_size)


def relative_bearing(pose: Pose, target: tuple[float, float]) -> float:
    """Bearing from the pose to a point, degrees in (-180, 180], left positive."""
    dx = target[0] - pose.x
    dy = target[1] - pose.y
    if math.hypot(dx, dy) < 1e-12:
        raise Undefined("bearing to the robot's own position")
    return math.degrees(wrap_angle(math.atan2(dy, dx) - pose.theta))


# direction words quantize the bearing into four 90-degree sectors; the
# boundaries 45/135 fall toward ahead/left-right so the mapping is total
def _direction_word(bearing_deg: float) -> str:
    if abs(bearing_deg) <= 45.0:
        return "ahead"
    if 45.0 < bearing_deg <= 135.0:
        return "left"
    if -135.0 <= bearing_deg < -45.0:
        return "right"
    return "behind"


def _compass_word(angle_deg: float) -> str:
    if abs(angle_deg) <= 45.0:
        return "east"
    if 45.0 < angle_deg <= 135.0:
        return "north"
    if -135.0 <= angle_deg < -45.0:
        return "south"
    return "west"


_PHRASES = {
    "ahead": "ahead",
    "left": "to your left",
    "right": "to your right",
    "behind": "behind you",
}

# absolute neighbor offsets: (dcol, drow) with row index growing northward
_ADJACENT = (("N", 0, 1), ("E", 1, 0), ("S", 0, -1), ("W", -1, 0))


def _clause(entity: SceneEntity) -> str:
    phrase = _PHRASES[_direction_word(entity.bearing_deg)]
    if entity.kind is EntityKind.GOAL:
        return f"Goal {phrase}, {entity.distance_m:.1f} meters away."
    return f"{entity.kind.value} {phrase}."


def describe_scene(
    patch: LocalPatch,
    est_pose: Pose,
    start: Pose,
    goal_point: tuple[float, float] | None = None,
) -> SceneDescription:
    """Narrate the four adjacent cells, the goal when in radius, and the pose.

    Entities come out sorted by ascending |bearing|, then distance, then
    left before right, and the text carries one clause per entity in that
    order followed by the start-relative position sentence.
    """
    cs = patch.cell_size
    r = patch.radius_cells
    entities = []
    for name, dc, dr in _ADJACENT:
        state = patch.cells[r + dr][r + dc]
        kind = EntityKind.WALL if state is CellState.WALL else EntityKind.OPENING
        center = (
            (patch.center.col + dc + 0.5) * cs,
            (patch.center.row + dr + 0.5) * cs,
        )
        entities.append(
            SceneEntity(
                kind=kind,
                bearing_deg=relative_bearing(est_pose, center),
                distance_m=math.hypot(center[0] - est_pose.x, center[1] - est_pose.y),
                cell_dir=name,
            )
        )
    if goal_point is not None:
        dist = math.hypot(goal_point[0] - est_pose.x, goal_point[1] - est_pose.y)
        # a robot standing on the goal gets the Completed event, not a cue
        if 1e-9 < dist <= r * cs:
            world_deg = math.degrees(
                math.atan2(goal_point[1] - est_pose.y, goal_point[0] - est_pose.x)
            )
            entities.append(
                SceneEntity(
                    kind=EntityKind.GOAL,
                    bearing_deg=relative_bearing(est_pose, goal_point),
                    distance_m=dist,
                    cell_dir=_compass_word(world_deg).upper()[0],
                )
            )
    # keys are rounded to a microdegree/nanometer grain so grid-aligned
    # scenes tie exactly and the left-before-right rule decides them
    entities.sort(
        key=lambda e: (
            round(abs(e.bearing_deg), 6),
            round(e.distance_m, 9),
            -e.bearing_deg,
        )
    )

    cells_east = math.floor(est_pose.x / cs) - math.floor(start.x / cs)
    cells_north = math.floor(est_pose.y / cs) - math.floor(start.y / cs)
    report = PoseReport(
        x=est_pose.x,
        y=est_pose.y,
        heading=_compass_word(math.degrees(est_pose.theta)),
        cells_east=cells_east,
        cells_north=cells_north,
    )
    text = " ".join([_clause(e) for e in entities] + [position_sentence(report)])
    return SceneDescription(text=text, entities=tuple(entities), pose_report=report)


def position_sentence(report: PoseReport) -> str:
    """Start-relative position phrased in whole cells."""
    ew = "east" if report.cells_east >= 0 else "west"
    ns = "north" if report.cells_north >= 0 else "south"
    return (
        f"You are {abs(report.cells_east)} cells {ew} and {abs(report.cells_north)} cells "
        f"{ns} of start, facing {report.heading}."
    )


_DURATION_MS = {
    EntityKind.WALL: 120,
    EntityKind.OPENING: 180,
    EntityKind.GOAL: 400,
}

# rough speech pacing for the synthesized closing cue
_MS_PER_WORD = 300


def to_audio_cues(desc: SceneDescription) -> list[AudioCue]:
    """One cue per entity plus a front-and-center cue with the full text."""
    cues = [
        AudioCue(
            azimuth_deg=e.bearing_deg,
            gain=1.0 / (1.0 + e.distance_m),
            duration_ms=_DURATION_MS[e.kind],
            text=_clause(e),
        )
        for e in desc.entities
    ]
    cues.append(
        AudioCue(
            azimuth_deg=0.0,
            gain=1.0,
            duration_ms=_MS_PER_WORD * len(desc.text.split()),
            text=desc.text,
        )
    )
    return cues
