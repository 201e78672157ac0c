"""Named, serializable run configurations.

A scenario bundles everything a session needs to start: the maze, the
simulation noise levels, scripted dynamic obstacles, and the safety and
narration tuning.  Scenarios round-trip through JSON so they can live in
files, travel over HTTP, and reproduce runs exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .slam import NoiseParams
from .world import (
    CellState,
    GridIndex,
    InvalidMaze,
    MazeSpec,
    Pose,
    cells_from_text,
    maze_area_m2,
)

AREA_MIN_M2 = 25.0
AREA_MAX_M2 = 50.0


class MalformedScenario(ValueError):
    """Scenario data that cannot be turned into a runnable configuration."""


@dataclass(frozen=True)
class SimNoise:
    """Noise injected by the simulation, distinct from what the filter assumes.

    The scale factors multiply the filter's assumed sigmas when generating
    true actuation and range-bearing noise: 1.0 keeps the filter consistent,
    0.0 gives a noiseless world, anything else is a deliberate mismatch.
    """

    overhead_sigma: float = 10.0
    stereo_sigma: float = 2.0
    actuation_scale: float = 1.0
    measurement_scale: float = 1.0

    def __post_init__(self) -> None:
        for name in ("overhead_sigma", "stereo_sigma", "actuation_scale", "measurement_scale"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or v < 0:
                raise MalformedScenario(f"noise field {name} must be >= 0, got {v!r}")


@dataclass(frozen=True)
class ObstacleScript:
    """A cell that becomes blocked once the session reaches ``step``.

    Step 0 means the obstacle is present from the first move.  The initial
    overhead survey never sees scripted obstacles, which is what makes them
    anomalies rather than walls.
    """

    step: int
    cell: GridIndex

    def __post_init__(self) -> None:
        if self.step < 0:
            raise MalformedScenario(f"obstacle step must be >= 0, got {self.step}")


@dataclass(frozen=True)
class Scenario:
    name: str
    maze: MazeSpec
    noise: SimNoise = field(default_factory=SimNoise)
    filter_noise: NoiseParams = field(default_factory=NoiseParams)
    obstacles: tuple[ObstacleScript, ...] = ()
    safety_threshold_m: float = 0.25
    deviation_pos_tol_m: float | None = None  # None: half a cell
    deviation_heading_tol_deg: float = 30.0
    narrate_every_move: bool = True
    halt_on_deviation: bool = False
    narration_radius_cells: int = 2
    initial_sigma_m: float = 0.05
    initial_sigma_rad: float = 0.05

    def __post_init__(self) -> None:
        if not self.name or not isinstance(self.name, str):
            raise MalformedScenario("scenario name must be a non-empty string")
        if self.safety_threshold_m <= 0:
            raise MalformedScenario("safety_threshold_m must be positive")
        if self.deviation_pos_tol_m is not None and self.deviation_pos_tol_m <= 0:
            raise MalformedScenario("deviation_pos_tol_m must be positive")
        if self.deviation_heading_tol_deg <= 0:
            raise MalformedScenario("deviation_heading_tol_deg must be positive")
        if self.narration_radius_cells < 1:
            raise MalformedScenario("narration_radius_cells must be at least 1")
        if self.initial_sigma_m < 0 or self.initial_sigma_rad < 0:
            raise MalformedScenario("initial sigmas must be >= 0")
        for ob in self.obstacles:
            if not self.maze.in_bounds(ob.cell.col, ob.cell.row):
                raise MalformedScenario(
                    f"obstacle cell (col {ob.cell.col}, row {ob.cell.row}) outside maze"
                )
            if self.maze.is_wall(ob.cell.col, ob.cell.row):
                raise MalformedScenario(
                    f"obstacle cell (col {ob.cell.col}, row {ob.cell.row}) is already a wall"
                )

    @property
    def pos_tol_m(self) -> float:
        if self.deviation_pos_tol_m is not None:
            return self.deviation_pos_tol_m
        return 0.5 * self.maze.cell_size


def grid_rows(maze: MazeSpec) -> list[str]:
    """Render cells back to '#'/'.' strings, row 0 at y=0."""
    return [
        "".join("#" if cell is CellState.WALL else "." for cell in row)
        for row in maze.cells
    ]


def scenario_to_dict(sc: Scenario) -> dict:
    d: dict = {
        "name": sc.name,
        "cell_size": sc.maze.cell_size,
        "grid": grid_rows(sc.maze),
        "start": [sc.maze.start.x, sc.maze.start.y, sc.maze.start.theta],
        "goal": [sc.maze.goal.col, sc.maze.goal.row],
        "noise": {
            "overhead_sigma": sc.noise.overhead_sigma,
            "stereo_sigma": sc.noise.stereo_sigma,
            "actuation_scale": sc.noise.actuation_scale,
            "measurement_scale": sc.noise.measurement_scale,
        },
        "filter": {
            "sigma_v": sc.filter_noise.sigma_v,
            "sigma_omega": sc.filter_noise.sigma_omega,
            "sigma_r": sc.filter_noise.sigma_r,
            "sigma_phi": sc.filter_noise.sigma_phi,
            "gate_chi2": sc.filter_noise.gate_chi2,
        },
        "obstacles": [
            {"step": ob.step, "cell": [ob.cell.col, ob.cell.row]} for ob in sc.obstacles
        ],
        "safety_threshold_m": sc.safety_threshold_m,
        "deviation_heading_tol_deg": sc.deviation_heading_tol_deg,
        "narrate_every_move": sc.narrate_every_move,
        "halt_on_deviation": sc.halt_on_deviation,
        "narration_radius_cells": sc.narration_radius_cells,
        "initial_sigma_m": sc.initial_sigma_m,
        "initial_sigma_rad": sc.initial_sigma_rad,
    }
    if sc.deviation_pos_tol_m is not None:
        d["deviation_pos_tol_m"] = sc.deviation_pos_tol_m
    return d


def _require(d: dict, key: str, kind: type | tuple[type, ...]) -> object:
    if key not in d:
        raise MalformedScenario(f"missing required field {key!r}")
    v = d[key]
    if not isinstance(v, kind):
        raise MalformedScenario(f"field {key!r} has wrong type {type(v).__name__}")
    return v


def scenario_from_dict(d: dict) -> Scenario:
    if not isinstance(d, dict):
        raise MalformedScenario("scenario must be a JSON object")
    name = _require(d, "name", str)
    cell_size = _require(d, "cell_size", (int, float))
    grid = _require(d, "grid", list)
    if not grid or not all(isinstance(r, str) for r in grid):
        raise MalformedScenario("grid must be a non-empty list of row strings")
    start = _require(d, "start", list)
    if len(start) != 3 or not all(isinstance(v, (int, float)) for v in start):
        raise MalformedScenario("start must be [x, y, theta]")
    goal = _require(d, "goal", list)
    if len(goal) != 2 or not all(isinstance(v, int) for v in goal):
        raise MalformedScenario("goal must be [col, row] integers")
    try:
        cells = cells_from_text(grid)
        maze = MazeSpec(
            width_cells=len(grid[0]),
            height_cells=len(grid),
            cell_size=float(cell_size),
            cells=cells,
            start=Pose(float(start[0]), float(start[1]), float(start[2])),
            goal=GridIndex(int(goal[0]), int(goal[1])),
        )
    except InvalidMaze as exc:
        raise MalformedScenario(str(exc)) from exc

    noise_d = d.get("noise", {})
    if not isinstance(noise_d, dict):
        raise MalformedScenario("noise must be an object")
    noise = SimNoise(
        overhead_sigma=float(noise_d.get("overhead_sigma", 10.0)),
        stereo_sigma=float(noise_d.get("stereo_sigma", 2.0)),
        actuation_scale=float(noise_d.get("actuation_scale", 1.0)),
        measurement_scale=float(noise_d.get("measurement_scale", 1.0)),
    )

    filter_d = d.get("filter", {})
    if not isinstance(filter_d, dict):
        raise MalformedScenario("filter must be an object")
    base = NoiseParams()
    try:
        filter_noise = NoiseParams(
            sigma_v=float(filter_d.get("sigma_v", base.sigma_v)),
            sigma_omega=float(filter_d.get("sigma_omega", base.sigma_omega)),
            sigma_r=float(filter_d.get("sigma_r", base.sigma_r)),
            sigma_phi=float(filter_d.get("sigma_phi", base.sigma_phi)),
            gate_chi2=float(filter_d.get("gate_chi2", base.gate_chi2)),
        )
    except ValueError as exc:
        raise MalformedScenario(f"bad filter noise: {exc}") from exc

    obstacles = []
    for i, ob in enumerate(d.get("obstacles", [])):
        if (
            not isinstance(ob, dict)
            or not isinstance(ob.get("step"), int)
            or not isinstance(ob.get("cell"), list)
            or len(ob["cell"]) != 2
            or not all(isinstance(v, int) for v in ob["cell"])
        ):
            raise MalformedScenario(f"obstacle {i} must be {{step: int, cell: [col, row]}}")
        obstacles.append(ObstacleScript(ob["step"], GridIndex(ob["cell"][0], ob["cell"][1])))

    kwargs: dict = {}
    if "deviation_pos_tol_m" in d:
        kwargs["deviation_pos_tol_m"] = float(d["deviation_pos_tol_m"])
    for key, conv in (
        ("safety_threshold_m", float),
        ("deviation_heading_tol_deg", float),
        ("narrate_every_move", bool),
        ("halt_on_deviation", bool),
        ("narration_radius_cells", int),
        ("initial_sigma_m", float),
        ("initial_sigma_rad", float),
    ):
        if key in d:
            kwargs[key] = conv(d[key])

    return Scenario(
        name=name,
        maze=maze,
        noise=noise,
        filter_noise=filter_noise,
        obstacles=tuple(obstacles),
        **kwargs,
    )


def load_scenario(path: str | Path) -> Scenario:
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedScenario(f"invalid JSON: {exc}") from exc
    return scenario_from_dict(data)


def save_scenario(sc: Scenario, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(scenario_to_dict(sc), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )


def bundled_scenario_names() -> list[str]:
    root = resources.files("echomaze").joinpath("data")
    return sorted(
        p.name.removesuffix(".json") for p in root.iterdir() if p.name.endswith(".json")
    )


def load_bundled(name: str) -> Scenario:
    if "/" in name or "\\" in name or name.startswith("."):
        raise MalformedScenario(f"invalid scenario name {name!r}")
    res = resources.files("echomaze").joinpath("data").joinpath(f"{name}.json")
    if not res.is_file():
        raise MalformedScenario(
            f"unknown bundled scenario {name!r}; have {bundled_scenario_names()}"
        )
    return scenario_from_dict(json.loads(res.read_text(encoding="utf-8")))


def area_warning(maze: MazeSpec) -> str | None:
    """Advisory when a maze leaves the desk-scale band, or None inside it."""
    area = maze_area_m2(maze)
    if AREA_MIN_M2 <= area <= AREA_MAX_M2:
        return None
    return f"area {area:.1f} m^2 outside {AREA_MIN_M2:.0f}-{AREA_MAX_M2:.0f} m^2"
