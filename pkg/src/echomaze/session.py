"""Event-sourced run loop tying perception, planning, and narration together.

A session owns the ground-truth pose, the filter belief, the command queue,
and an append-only event log with gapless sequence numbers.  All randomness
flows from the session seed, so the same scenario, seed, and utterances
reproduce the same event log byte for byte.

Scripted dynamic obstacles are planning-level hazards: the initial overhead
survey does not see them, the stereo safety check watches walls only, and
the anomaly rule fires when the next planned cell turns out to be blocked.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import command_lang as cl
from .narrator import describe_scene, position_sentence, sense_local, to_audio_cues
from .overhead_vision import (
    DegenerateHistogram,
    MarkerNotFound,
    MarkerSpec,
    OverheadCamera,
    ResolutionTooLow,
    locate_robot,
    render_overhead,
    segment_grid,
)
from .planner import (
    Direction,
    Forward,
    MovePrimitive,
    NoPath,
    Provenance,
    TurnLeft,
    TurnRight,
    path_to_plan,
    solve_bfs,
)
from .scenario import Scenario
from .slam import (
    Match,
    NoiseParams,
    associate,
    augment,
    estimate_pose,
    extract_landmarks,
    initial_belief,
    motion_step,
    observe,
    predict,
    update,
)
from .stereo_vision import StereoRig, front_clearance
from .world import (
    CellState,
    GridIndex,
    MazeSpec,
    MotionInput,
    Pose,
    grid_to_world,
    world_to_grid,
    wrap_angle,
)


class SessionError(RuntimeError):
    pass


class SessionInitFailure(SessionError):
    """The overhead survey could not produce a map and a robot pose."""


class SessionOver(SessionError):
    """Utterance submitted to a completed session."""


class NothingToExecute(SessionError):
    """step() called without an executing plan."""


class NoPendingQuery(SessionError):
    """Answer given while no guidance question is open."""


class Mode(Enum):
    IDLE = "Idle"
    EXECUTING = "Executing"
    AWAITING_GUIDANCE = "AwaitingGuidance"
    SAFETY_HALT = "SafetyHalt"
    COMPLETED = "Completed"


@dataclass(frozen=True)
class SessionEvent:
    seq: int
    t: float
    kind: str
    payload: dict


@dataclass(frozen=True)
class Metrics:
    localization_rmse_m: float
    command_recognition_rate: float
    task_completion_steps: int
    task_completion_sim_time_s: float
    path_efficiency: float
    safety_violations: int
    guidance_requests: int

    def as_dict(self) -> dict:
        return {
            "localization_rmse_m": self.localization_rmse_m,
            "command_recognition_rate": self.command_recognition_rate,
            "task_completion_steps": self.task_completion_steps,
            "task_completion_sim_time_s": self.task_completion_sim_time_s,
            "path_efficiency": self.path_efficiency,
            "safety_violations": self.safety_violations,
            "guidance_requests": self.guidance_requests,
        }


GUIDANCE_QUESTION = "What should I do? Should I move {word}?"

SENSE_RANGE_M = 2.0
SENSE_FOV_RAD = math.pi / 2.0
_MS_PER_WORD = 300

# closed-loop pacing: re-aim at the next cell center from the freshest
# overhead fix, so steering error does not accumulate across steps
_DT_ALIGN_S = 0.5
_DT_MOVE_S = 1.0
_V_CAP = 0.8
_OMEGA_CAP = math.pi / 2.0
_TRAVEL_MARGIN_M = 0.05
_ALIGN_CLAMP_RAD = math.radians(10.0)

_COMPASS = {
    Direction.EAST: "east",
    Direction.NORTH: "north",
    Direction.WEST: "west",
    Direction.SOUTH: "south",
}


def _derive(seed: int, k: int, salt: int) -> int:
    """Independent child seed per (step, purpose); stable across platforms."""
    return (seed * 1_000_003 + k * 9_176 + salt) % (2**62)


def _pose_dict(p: Pose) -> dict:
    return {"x": p.x, "y": p.y, "theta": p.theta}


def _voice_cue(text: str) -> dict:
    words = max(1, len(text.split()))
    return {"azimuth_deg": 0.0, "gain": 1.0, "duration_ms": _MS_PER_WORD * words, "text": text}


def _cue_dicts(cues) -> list[dict]:
    return [
        {
            "azimuth_deg": c.azimuth_deg,
            "gain": c.gain,
            "duration_ms": c.duration_ms,
            "text": c.text,
        }
        for c in cues
    ]


class SessionState:
    """Mutable session; use the module functions to drive it."""

    def __init__(self, scenario: Scenario, seed: int) -> None:
        self.scenario = scenario
        self.seed = seed
        self.maze = scenario.maze
        self.rig = StereoRig()
        self.marker = MarkerSpec()
        self.cam = OverheadCamera(noise_sigma=scenario.noise.overhead_sigma)
        self.filter_noise = scenario.filter_noise
        self.gen_noise = NoiseParams(
            sigma_v=self.filter_noise.sigma_v * scenario.noise.actuation_scale,
            sigma_omega=self.filter_noise.sigma_omega * scenario.noise.actuation_scale,
            sigma_r=self.filter_noise.sigma_r * scenario.noise.measurement_scale,
            sigma_phi=self.filter_noise.sigma_phi * scenario.noise.measurement_scale,
        )
        self.landmarks = extract_landmarks(self.maze)
        self.rng = np.random.default_rng(_derive(seed, 0, 4))

        self.mode = Mode.IDLE
        self.true_pose = self.maze.start
        # ground truth stays off the wire; this in-process trace exists for
        # diagnostics and tests (consecutive poses bound each swept segment)
        self.true_trace: list[Pose] = [self.true_pose]
        self.queue: deque[MovePrimitive] = deque()
        self.pending: dict | None = None
        self.log: list[SessionEvent] = []
        self.seq = 0
        self.sim_time = 0.0
        self.steps_done = 0

        self.pending_obstacles = sorted(
            scenario.obstacles, key=lambda ob: (ob.step, ob.cell.col, ob.cell.row)
        )
        self.active_obstacles: set[GridIndex] = set()
        self._eff_maze: MazeSpec | None = None

        # metrics accumulators
        self.sq_err_sum = 0.0
        self.err_n = 0
        self.utt_total = 0
        self.utt_ok = 0
        self.guidance_count = 0
        self.safety_violations = 0
        self.forward_cells = 0
        self.completed = False

        # filled by create_session after the overhead survey
        self.plan_map: MazeSpec | None = None
        self.belief = None
        self.planned_cell: GridIndex | None = None
        self.planned_heading: Direction | None = None
        self.bfs_optimal: int | None = None
        # freshest overhead fix; steering feedback comes from here, not from
        # the filter, so a confused belief cannot steer the robot into a wall
        self.last_detected: Pose | None = None

    def emit(self, kind: str, payload: dict) -> SessionEvent:
        self.seq += 1
        e = SessionEvent(self.seq, self.sim_time, kind, payload)
        self.log.append(e)
        return e


def _walled(maze: MazeSpec, cells: set[GridIndex]) -> MazeSpec:
    """Copy of the maze with the given cells turned into walls."""
    if not cells:
        return maze
    grid = [list(row) for row in maze.cells]
    for g in cells:
        grid[g.row][g.col] = CellState.WALL
    return MazeSpec(
        maze.width_cells,
        maze.height_cells,
        maze.cell_size,
        tuple(tuple(row) for row in grid),
        start=maze.start,
        goal=maze.goal,
        unchecked=True,
    )


def _effective_maze(state: SessionState) -> MazeSpec:
    if state._eff_maze is None:
        state._eff_maze = _walled(state.maze, state.active_obstacles)
    return state._eff_maze


def _activate_obstacles(state: SessionState) -> None:
    """Obstacles appear at their scripted step, never under the robot."""
    here = world_to_grid(state.true_pose, state.maze)
    still_waiting = []
    changed = False
    for ob in state.pending_obstacles:
        if ob.step <= state.steps_done and ob.cell != here:
            state.active_obstacles.add(ob.cell)
            changed = True
        else:
            still_waiting.append(ob)
    state.pending_obstacles = still_waiting
    if changed:
        state._eff_maze = None


def _plan_free(state: SessionState, cell: GridIndex) -> bool:
    pm = state.plan_map
    return pm.in_bounds(cell.col, cell.row) and pm.is_free(cell.col, cell.row)


def create_session(scenario: Scenario, seed: int) -> SessionState:
    """Survey the maze from overhead, localize the robot, and open the log."""
    state = SessionState(scenario, seed)
    maze = state.maze
    try:
        img = render_overhead(maze, maze.start, state.cam, state.marker, _derive(seed, 0, 1))
        recovered = segment_grid(
            img, state.cam, (maze.width_cells, maze.height_cells, maze.cell_size), state.marker
        )
        rec_pose = locate_robot(img, state.cam, state.marker)
    except (MarkerNotFound, DegenerateHistogram, ResolutionTooLow) as exc:
        raise SessionInitFailure(str(exc)) from exc

    state.plan_map = MazeSpec(
        maze.width_cells,
        maze.height_cells,
        maze.cell_size,
        recovered.cells,
        start=rec_pose,
        goal=maze.goal,
        unchecked=True,
    )
    sig_m, sig_rad = scenario.initial_sigma_m, scenario.initial_sigma_rad
    state.belief = initial_belief(rec_pose, np.diag([sig_m**2, sig_m**2, sig_rad**2]))
    state.last_detected = rec_pose
    state.planned_cell = world_to_grid(rec_pose, maze)
    state.planned_heading = Direction.from_theta(rec_pose.theta)
    try:
        state.bfs_optimal = (
            len(solve_bfs(state.plan_map, state.planned_cell, maze.goal)) - 1
        )
    except NoPath:
        state.bfs_optimal = None

    _activate_obstacles(state)

    text = (
        f"Recovered a {maze.width_cells} by {maze.height_cells} cell map, "
        f"cell size {maze.cell_size:g} meters. "
        f"You start in cell ({state.planned_cell.col}, {state.planned_cell.row}) "
        f"facing {_COMPASS[state.planned_heading]}. "
        f"The goal is cell ({maze.goal.col}, {maze.goal.row})."
    )
    state.emit("Narration", {"text": text})
    state.emit("Cue", {"cues": [_voice_cue(text)]})
    return state


def _explain_parse_failure(exc: Exception) -> str:
    return f"I did not understand. {exc}"


def _reask_cue(state: SessionState) -> SessionEvent:
    question = GUIDANCE_QUESTION.format(word=state.pending["proposed"])
    return state.emit("Cue", {"cues": [_voice_cue(question)]})


def submit_utterance(state: SessionState, text: str) -> list[SessionEvent]:
    """Parse one utterance and enqueue, answer, execute, or reject it."""
    if state.mode is Mode.COMPLETED:
        raise SessionOver("the session is over; no more utterances are accepted")
    state.utt_total += 1
    try:
        ast = cl.parse_utterance(text)
    except (cl.ParseError, cl.EmptyUtterance, cl.LimitExceeded) as exc:
        events = [state.emit("Rejected", {"utterance": text, "error": str(exc)})]
        events.append(state.emit("Cue", {"cues": [_voice_cue(_explain_parse_failure(exc))]}))
        if state.mode is Mode.AWAITING_GUIDANCE:
            events.append(_reask_cue(state))
        return events
    state.utt_ok += 1
    events = [
        state.emit(
            "Parsed",
            {"utterance": text, "commands": cl.render(ast), "count": len(ast)},
        )
    ]
    if state.mode is Mode.AWAITING_GUIDANCE:
        if len(ast) == 1 and isinstance(ast[0], cl.Answer):
            events.extend(answer_guidance(state, ast[0]))
        else:
            events.append(
                state.emit(
                    "Rejected",
                    {"utterance": text, "error": "a guidance question is waiting for an answer"},
                )
            )
            events.append(_reask_cue(state))
        return events
    if state.mode is Mode.SAFETY_HALT:
        # fresh commands stand the robot back up
        state.mode = Mode.IDLE
    for node in ast:
        events.extend(_dispatch(state, node))
    return events


def _enqueue(state: SessionState, prim: MovePrimitive) -> None:
    # single-cell granularity so every entered cell gets its own safety check
    if isinstance(prim, Forward):
        for _ in range(prim.cells):
            state.queue.append(Forward(1))
    else:
        state.queue.append(prim)


def _dispatch(state: SessionState, node: cl.CommandAst) -> list[SessionEvent]:
    if isinstance(node, cl.Move):
        _enqueue(state, Forward(node.cells))
        return []
    if isinstance(node, cl.Turn):
        if node.direction is cl.TurnWord.LEFT:
            _enqueue(state, TurnLeft())
        elif node.direction is cl.TurnWord.RIGHT:
            _enqueue(state, TurnRight())
        else:
            _enqueue(state, TurnLeft())
            _enqueue(state, TurnLeft())
        return []
    if isinstance(node, cl.Repeat):
        events: list[SessionEvent] = []
        for _ in range(node.count):
            for child in node.body:
                events.extend(_dispatch(state, child))
        return events
    if isinstance(node, cl.QuerySurroundings):
        desc = _scene(state)
        return [
            state.emit("Narration", {"text": desc.text}),
            state.emit("Cue", {"cues": _cue_dicts(to_audio_cues(desc))}),
        ]
    if isinstance(node, cl.QueryPosition):
        sentence = position_sentence(_scene(state).pose_report)
        return [
            state.emit("Narration", {"text": sentence}),
            state.emit("Cue", {"cues": [_voice_cue(sentence)]}),
        ]
    if isinstance(node, cl.Answer):
        return [
            state.emit(
                "Rejected",
                {"utterance": node.word.value, "error": "no question is pending"},
            )
        ]
    if isinstance(node, cl.Go):
        if state.queue:
            state.mode = Mode.EXECUTING
            return []
        return [state.emit("Rejected", {"utterance": "go", "error": "nothing queued to execute"})]
    if isinstance(node, cl.Stop):
        state.queue.clear()
        state.mode = Mode.IDLE
        return []
    raise TypeError(f"unhandled command node {node!r}")


def _scene(state: SessionState):
    patch = sense_local(
        _effective_maze(state), state.true_pose, state.scenario.narration_radius_cells
    )
    return describe_scene(
        patch,
        estimate_pose(state.belief)[0],
        state.maze.start,
        goal_point=grid_to_world(state.maze.goal, state.maze),
    )


def _propose_direction(state: SessionState, exclude: tuple[str, ...] = ()) -> str:
    """Right if free, else left, else back."""
    h = state.planned_heading
    options = (("right", h.right()), ("left", h.left()), ("back", h.back()))
    for word, d in options:
        if word in exclude:
            continue
        cell = GridIndex(state.planned_cell.col + d.vector[0], state.planned_cell.row + d.vector[1])
        if _plan_free(state, cell) and cell not in state.active_obstacles:
            return word
    return "back"


def step(state: SessionState) -> list[SessionEvent]:
    """Execute the head primitive: safety, anomaly, move, monitor, narrate."""
    if state.mode is not Mode.EXECUTING or not state.queue:
        raise NothingToExecute(f"mode {state.mode.value} with {len(state.queue)} queued")
    _activate_obstacles(state)
    scenario = state.scenario
    maze = state.maze
    cs = maze.cell_size
    events: list[SessionEvent] = []
    prim = state.queue[0]
    clearance_m: float | None = None

    if isinstance(prim, Forward):
        nav = state.last_detected
        h = state.planned_heading
        target = GridIndex(
            state.planned_cell.col + h.vector[0], state.planned_cell.row + h.vector[1]
        )
        tx, ty = grid_to_world(target, maze)
        travel = math.hypot(tx - nav.x, ty - nav.y)
        clearance = front_clearance(
            maze,
            state.true_pose,
            state.rig,
            _derive(state.seed, state.steps_done, 2),
            noise_sigma=scenario.noise.stereo_sigma,
        )
        # halt when already inside the threshold or when the commanded travel
        # does not fit into the measured clearance; stopping at a cell center
        # that faces a wall is allowed, driving at one is not
        if clearance.distance_m < max(
            scenario.safety_threshold_m, travel + _TRAVEL_MARGIN_M
        ):
            events.append(
                state.emit(
                    "SafetyHalt",
                    {
                        "reason": "clearance",
                        "clearance_m": clearance.distance_m,
                        "threshold_m": scenario.safety_threshold_m,
                        "degraded": clearance.degraded,
                    },
                )
            )
            state.queue.clear()
            state.mode = Mode.SAFETY_HALT
            return events

        if target in state.active_obstacles and _plan_free(state, target):
            word = _propose_direction(state)
            question = GUIDANCE_QUESTION.format(word=word)
            state.pending = {"blocked": target, "proposed": word, "declined": []}
            state.guidance_count += 1
            events.append(
                state.emit(
                    "GuidanceRequest",
                    {
                        "question": question,
                        "blocked_cell": [target.col, target.row],
                        "proposed": word,
                    },
                )
            )
            events.append(state.emit("Cue", {"cues": [_voice_cue(question)]}))
            state.mode = Mode.AWAITING_GUIDANCE
            return events
        clearance_m = clearance.distance_m

    # MOVE: steer from the overhead fix toward the planned cell center
    state.queue.popleft()
    nav = state.last_detected
    motions: list[MotionInput] = []
    if isinstance(prim, Forward):
        target = GridIndex(
            state.planned_cell.col + state.planned_heading.vector[0],
            state.planned_cell.row + state.planned_heading.vector[1],
        )
        tx, ty = grid_to_world(target, maze)
        dth = wrap_angle(math.atan2(ty - nav.y, tx - nav.x) - nav.theta)
        # the clearance cone only vouches for +/-10 degrees around the
        # current heading, so one step never steers beyond it
        dth = max(-_ALIGN_CLAMP_RAD, min(_ALIGN_CLAMP_RAD, dth))
        dt_a = max(_DT_ALIGN_S, abs(dth) / _OMEGA_CAP)
        motions.append(MotionInput(0.0, dth / dt_a, dt_a))
        dist = math.hypot(tx - nav.x, ty - nav.y)
        dt_m = max(_DT_MOVE_S, dist / _V_CAP)
        motions.append(MotionInput(dist / dt_m, 0.0, dt_m))
        state.planned_cell = target
        state.forward_cells += 1
        token = "F1"
    else:
        if isinstance(prim, TurnLeft):
            new_heading = state.planned_heading.left()
            token = "L"
        else:
            new_heading = state.planned_heading.right()
            token = "R"
        dth = wrap_angle(new_heading.theta - nav.theta)
        dt_t = max(_DT_MOVE_S, abs(dth) / _OMEGA_CAP)
        motions.append(MotionInput(0.0, dth / dt_t, dt_t))
        state.planned_heading = new_heading

    for u in motions:
        noise = state.rng.standard_normal(2)
        actual = MotionInput(
            u.v + noise[0] * state.gen_noise.sigma_v,
            u.omega + noise[1] * state.gen_noise.sigma_omega,
            u.dt,
        )
        state.true_pose = motion_step(state.true_pose, actual)
        state.true_trace.append(state.true_pose)
        state.belief = predict(state.belief, u, state.filter_noise)
        state.sim_time += u.dt
    state.steps_done += 1

    for z, _hidden in observe(
        state.true_pose,
        state.landmarks,
        state.gen_noise,
        SENSE_RANGE_M,
        SENSE_FOV_RAD,
        maze,
        _derive(state.seed, state.steps_done, 3),
    ):
        decision = associate(state.belief, z, state.filter_noise)
        if isinstance(decision, Match):
            state.belief = update(state.belief, z, decision.index, state.filter_noise)
        else:
            state.belief = augment(state.belief, z, state.filter_noise)

    est, _ = estimate_pose(state.belief)
    err = math.hypot(est.x - state.true_pose.x, est.y - state.true_pose.y)
    state.sq_err_sum += err * err
    state.err_n += 1
    payload = {
        "primitive": token,
        "motions": [{"v": u.v, "omega": u.omega, "dt": u.dt} for u in motions],
        "estimated_pose": _pose_dict(est),
    }
    if clearance_m is not None:
        payload["clearance_m"] = clearance_m
    events.append(state.emit("Step", payload))

    # MONITOR: the overhead camera cross-checks the filter
    img = render_overhead(
        maze, state.true_pose, state.cam, state.marker, _derive(state.seed, state.steps_done, 1)
    )
    try:
        detected = locate_robot(img, state.cam, state.marker)
    except MarkerNotFound:
        detected = None
    if detected is not None:
        state.last_detected = detected
        dpos = math.hypot(detected.x - est.x, detected.y - est.y)
        dhead = abs(math.degrees(wrap_angle(detected.theta - est.theta)))
        if dpos > scenario.pos_tol_m or dhead > scenario.deviation_heading_tol_deg:
            events.append(
                state.emit(
                    "Deviation",
                    {
                        "detected": _pose_dict(detected),
                        "estimated": _pose_dict(est),
                        "position_error_m": dpos,
                        "heading_error_deg": dhead,
                    },
                )
            )
            if scenario.halt_on_deviation:
                events.append(state.emit("SafetyHalt", {"reason": "deviation"}))
                state.queue.clear()
                state.mode = Mode.SAFETY_HALT
                return events

    if scenario.narrate_every_move:
        desc = _scene(state)
        events.append(state.emit("Narration", {"text": desc.text}))
        events.append(state.emit("Cue", {"cues": _cue_dicts(to_audio_cues(desc))}))

    if world_to_grid(state.true_pose, maze) == maze.goal:
        state.completed = True
        state.queue.clear()
        events.append(
            state.emit(
                "Completed",
                {"steps": state.steps_done, "sim_time_s": state.sim_time},
            )
        )
        events.append(state.emit("MetricsSnapshot", compute_metrics(state).as_dict()))
        state.mode = Mode.COMPLETED
    elif not state.queue:
        state.mode = Mode.IDLE
    return events


def run_queue(state: SessionState) -> list[SessionEvent]:
    """Step until the plan drains, halts, completes, or asks for help."""
    events: list[SessionEvent] = []
    while state.mode is Mode.EXECUTING and state.queue:
        events.extend(step(state))
    return events


def drive(state: SessionState, text: str) -> list[SessionEvent]:
    """Submit one utterance and run any resulting plan to quiescence.

    This is the unit of interaction every front end shares, so scripted,
    HTTP, and replayed runs produce identical logs for identical input.
    """
    events = submit_utterance(state, text)
    if state.mode is Mode.EXECUTING and state.queue:
        events.extend(run_queue(state))
    return events


_ANSWER_DIRECTIONS = {
    cl.AnswerWord.LEFT: "left",
    cl.AnswerWord.RIGHT: "right",
    cl.AnswerWord.FORWARD: "forward",
}


def answer_guidance(state: SessionState, answer: cl.Answer) -> list[SessionEvent]:
    """Resolve a pending guidance question with yes, no, or a direction."""
    if state.mode is not Mode.AWAITING_GUIDANCE or state.pending is None:
        raise NoPendingQuery("no guidance question is pending")
    pend = state.pending
    if answer.word is cl.AnswerWord.NO:
        # declining cycles the proposal through right, left, back
        declined = pend["declined"] + [pend["proposed"]]
        if len(declined) >= 3:
            declined = []
        pend["declined"] = declined
        pend["proposed"] = _propose_direction(state, exclude=tuple(declined))
        return [_reask_cue(state)]

    if answer.word is cl.AnswerWord.YES:
        word = pend["proposed"]
    else:
        word = _ANSWER_DIRECTIONS[answer.word]

    h = state.planned_heading
    direction = {"right": h.right(), "left": h.left(), "back": h.back(), "forward": h}[word]
    first = GridIndex(
        state.planned_cell.col + direction.vector[0],
        state.planned_cell.row + direction.vector[1],
    )
    if (
        not _plan_free(state, first)
        or first in state.active_obstacles
    ):
        events = [
            state.emit(
                "Rejected",
                {"utterance": answer.word.value, "error": f"cannot move {word} from here"},
            )
        ]
        events.append(_reask_cue(state))
        return events

    aug = _walled(state.plan_map, state.active_obstacles)
    try:
        onward = solve_bfs(aug, first, state.maze.goal)
        path = [state.planned_cell] + onward
    except NoPath:
        events = [
            state.emit(
                "Rejected",
                {"utterance": answer.word.value, "error": f"no route to the goal via {word}"},
            )
        ]
        events.append(_reask_cue(state))
        return events

    plan = path_to_plan(path, state.planned_heading, Provenance.BFS)
    state.queue.clear()
    for prim in plan.primitives:
        _enqueue(state, prim)
    state.pending = None
    state.mode = Mode.EXECUTING
    confirmation = f"Okay, moving {word}."
    return [
        state.emit(
            "GuidanceResolved",
            {"answer": answer.word.value, "direction": word, "path_cells": len(path) - 1},
        ),
        state.emit("Cue", {"cues": [_voice_cue(confirmation)]}),
    ]


def compute_metrics(state: SessionState) -> Metrics:
    rmse = math.sqrt(state.sq_err_sum / state.err_n) if state.err_n else 0.0
    rate = state.utt_ok / state.utt_total if state.utt_total else 1.0
    if state.completed and state.bfs_optimal:
        efficiency = state.forward_cells / state.bfs_optimal
    else:
        efficiency = 0.0
    return Metrics(
        localization_rmse_m=rmse,
        command_recognition_rate=rate,
        task_completion_steps=state.steps_done,
        task_completion_sim_time_s=state.sim_time,
        path_efficiency=efficiency,
        safety_violations=state.safety_violations,
        guidance_requests=state.guidance_count,
    )
