"""EKF-SLAM over range-bearing sightings of maze wall corners.

The belief tracks (x, y, theta) plus a growing list of landmark positions.
Prediction applies a unicycle motion model; updates fuse range-bearing
measurements of wall corners.  The simulator truth and the filter share
``motion_step``, so with all noise at zero the filter reproduces the true
trajectory exactly and any residual error is a bug, not modeling slack.

All operations are pure: they take a belief and return a new one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .world import (
    MazeSpec,
    MotionInput,
    Pose,
    PoseInWall,
    cast_ray,
    world_to_grid,
    wrap_angle,
)


class InvalidInput(ValueError):
    pass


class UnknownLandmark(ValueError):
    pass


class NumericalFailure(ArithmeticError):
    pass


# commanded twists beyond these are treated as typos, not physics
V_MAX = 1.0
OMEGA_MAX = math.pi


@dataclass(frozen=True)
class NoiseParams:
    """Motion/measurement standard deviations and the association gate.

    Sigmas of zero are accepted so noiseless regression runs can share the
    type; the filter itself should be driven with positive values or the
    innovation covariance may go singular.
    """

    sigma_v: float = 0.01
    sigma_omega: float = 0.01
    sigma_r: float = 0.02
    sigma_phi: float = 0.017
    gate_chi2: float = 9.21

    def __post_init__(self) -> None:
        for name in ("sigma_v", "sigma_omega", "sigma_r", "sigma_phi"):
            if getattr(self, name) < 0:
                raise InvalidInput(f"{name} must be >= 0")
        if self.gate_chi2 <= 0:
            raise InvalidInput("gate_chi2 must be positive")


@dataclass(frozen=True)
class RangeBearing:
    """One sighting: range in meters, bearing ccw from the heading."""

    r: float
    phi: float

    def __post_init__(self) -> None:
        if self.r <= 0:
            raise InvalidInput("range must be positive")
        object.__setattr__(self, "phi", wrap_angle(float(self.phi)))


@dataclass(frozen=True)
class BeliefState:
    """Gaussian belief over pose and landmarks.

    ``mean`` is (x, y, theta, l0x, l0y, l1x, ...); ``covariance`` is the
    matching square matrix.  The constructor wraps theta and symmetrizes
    the covariance so every operation output satisfies the invariants.
    """

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self) -> None:
        mean = np.array(self.mean, dtype=np.float64)
        cov = np.array(self.covariance, dtype=np.float64)
        if mean.ndim != 1 or mean.size < 3 or (mean.size - 3) % 2:
            raise InvalidInput("mean must be a pose plus (x, y) landmark pairs")
        if cov.shape != (mean.size, mean.size):
            raise InvalidInput("covariance shape must match the mean")
        mean[2] = wrap_angle(mean[2])
        cov = (cov + cov.T) / 2.0
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)

    @property
    def landmark_count(self) -> int:
        return (self.mean.size - 3) // 2


def initial_belief(pose: Pose, pose_cov: np.ndarray | None = None) -> BeliefState:
    """Belief with no landmarks; default covariance is zero (known start)."""
    cov = np.zeros((3, 3)) if pose_cov is None else np.array(pose_cov, dtype=np.float64)
    if cov.shape != (3, 3):
        raise InvalidInput("pose_cov must be 3x3")
    return BeliefState(np.array([pose.x, pose.y, pose.theta]), cov)


def motion_step(pose: Pose, u: MotionInput) -> Pose:
    """One Euler step of the unicycle model."""
    if u.dt <= 0:
        raise InvalidInput("dt must be positive")
    return Pose(
        pose.x + u.v * u.dt * math.cos(pose.theta),
        pose.y + u.v * u.dt * math.sin(pose.theta),
        pose.theta + u.omega * u.dt,
    )


def motion_jacobians(theta: float, u: MotionInput) -> tuple[np.ndarray, np.ndarray]:
    """Pose-block Jacobians of one motion step, wrt pose and wrt (v, omega)."""
    f3 = np.array(
        [
            [1.0, 0.0, -u.v * u.dt * math.sin(theta)],
            [0.0, 1.0, u.v * u.dt * math.cos(theta)],
            [0.0, 0.0, 1.0],
        ]
    )
    g3 = np.array(
        [
            [u.dt * math.cos(theta), 0.0],
            [u.dt * math.sin(theta), 0.0],
            [0.0, u.dt],
        ]
    )
    return f3, g3


def predict(b: BeliefState, u: MotionInput, q: NoiseParams) -> BeliefState:
    """Advance the pose by the motion model and inflate its covariance."""
    if u.dt <= 0:
        raise InvalidInput("dt must be positive")
    if abs(u.v) > V_MAX or abs(u.omega) > OMEGA_MAX:
        raise InvalidInput("commanded twist exceeds actuator limits")
    n = b.mean.size
    th = b.mean[2]
    stepped = motion_step(Pose(b.mean[0], b.mean[1], th), u)
    mean = np.array(b.mean)
    mean[:3] = (stepped.x, stepped.y, stepped.theta)

    # Jacobians at the prior heading; identity outside the pose block
    f3, g3 = motion_jacobians(th, u)
    f = np.eye(n)
    f[:3, :3] = f3
    g = np.zeros((n, 2))
    g[:3, :] = g3
    m = np.diag([q.sigma_v**2, q.sigma_omega**2])
    return BeliefState(mean, f @ b.covariance @ f.T + g @ m @ g.T)


def extract_landmarks(maze: MazeSpec) -> list[tuple[float, float]]:
    """Wall-corner points in meters, row-major over grid vertices.

    A vertex is a corner when its four incident cells are neither all Wall
    nor all Free; cells beyond the border count as Wall.
    """

    def wallish(col: int, row: int) -> bool:
        return not maze.in_bounds(col, row) or maze.is_wall(col, row)

    points: list[tuple[float, float]] = []
    for r in range(maze.height_cells + 1):
        for c in range(maze.width_cells + 1):
            walls = sum(
                wallish(cc, rr) for cc in (c - 1, c) for rr in (r - 1, r)
            )
            if 0 < walls < 4:
                points.append((c * maze.cell_size, r * maze.cell_size))
    return points


def observe(
    true_pose: Pose,
    landmarks: list[tuple[float, float]],
    noise: NoiseParams,
    max_range: float,
    fov: float,
    maze: MazeSpec,
    seed: int,
) -> list[tuple[RangeBearing, int]]:
    """Simulated sightings: (measurement, hidden true id) pairs.

    A landmark is seen when it is within range, inside the field of view,
    and the ray to it is not blocked by a nearer wall.  The hidden id is
    for test oracles only; the filter must never receive it.
    """
    cell = world_to_grid(true_pose, maze)
    if maze.is_wall(cell.col, cell.row):
        raise PoseInWall(f"pose ({true_pose.x}, {true_pose.y}) inside a wall cell")
    rng = np.random.default_rng(seed)
    seen: list[tuple[RangeBearing, int]] = []
    for idx, (lx, ly) in enumerate(landmarks):
        dx = lx - true_pose.x
        dy = ly - true_pose.y
        r = math.hypot(dx, dy)
        if r < 1e-9 or r > max_range:
            continue
        phi = wrap_angle(math.atan2(dy, dx) - true_pose.theta)
        if abs(phi) > fov / 2.0:
            continue
        hit = cast_ray(maze, true_pose.x, true_pose.y, math.atan2(dy, dx))
        # corners sit on wall faces, so the ray ends exactly at a visible
        # corner; anything shorter means a wall in between
        if hit.distance < r - 1e-7:
            continue
        r_meas = r + rng.normal(0.0, noise.sigma_r)
        phi_meas = phi + rng.normal(0.0, noise.sigma_phi)
        if r_meas <= 0:
            continue
        seen.append((RangeBearing(r_meas, wrap_angle(phi_meas)), idx))
    return seen


def measurement_model(b: BeliefState, j: int) -> tuple[np.ndarray, np.ndarray]:
    """Predicted (r, phi) of landmark j and the Jacobian wrt the full state."""
    if not 0 <= j < b.landmark_count:
        raise UnknownLandmark(f"landmark {j} not in map of {b.landmark_count}")
    n = b.mean.size
    x, y, th = b.mean[:3]
    off = 3 + 2 * j
    dx = b.mean[off] - x
    dy = b.mean[off + 1] - y
    q = dx * dx + dy * dy
    if q < 1e-12:
        raise NumericalFailure("landmark coincides with the pose estimate")
    r = math.sqrt(q)
    predicted = np.array([r, wrap_angle(math.atan2(dy, dx) - th)])
    h = np.zeros((2, n))
    h[0, 0:3] = (-dx / r, -dy / r, 0.0)
    h[1, 0:3] = (dy / q, -dx / q, -1.0)
    h[0, off : off + 2] = (dx / r, dy / r)
    h[1, off : off + 2] = (-dy / q, dx / q)
    return predicted, h


def _innovation(
    b: BeliefState, z: RangeBearing, j: int
) -> tuple[np.ndarray, np.ndarray]:
    """Innovation vector (bearing wrapped) and Jacobian for landmark j."""
    predicted, h = measurement_model(b, j)
    nu = np.array([z.r - predicted[0], wrap_angle(z.phi - predicted[1])])
    return nu, h


def _measurement_cov(noise: NoiseParams) -> np.ndarray:
    return np.diag([noise.sigma_r**2, noise.sigma_phi**2])


@dataclass(frozen=True)
class Match:
    index: int


@dataclass(frozen=True)
class NewLandmark:
    pass


def associate(
    b: BeliefState, z: RangeBearing, noise: NoiseParams
) -> Match | NewLandmark:
    """Nearest mapped landmark by Mahalanobis distance, gated by chi-square.

    Ties keep the lowest index; anything beyond the gate starts a new
    landmark.
    """
    r_cov = _measurement_cov(noise)
    best_j = -1
    best_m = math.inf
    for j in range(b.landmark_count):
        nu, h = _innovation(b, z, j)
        s = h @ b.covariance @ h.T + r_cov
        try:
            m = float(nu @ np.linalg.solve(s, nu))
        except np.linalg.LinAlgError as exc:
            raise NumericalFailure("singular innovation covariance") from exc
        if m < best_m:
            best_m = m
            best_j = j
    if best_j >= 0 and best_m <= noise.gate_chi2:
        return Match(best_j)
    return NewLandmark()


def update(
    b: BeliefState, z: RangeBearing, j: int, noise: NoiseParams
) -> BeliefState:
    """Fuse one range-bearing measurement of mapped landmark j."""
    nu, h = _innovation(b, z, j)
    p = b.covariance
    s = h @ p @ h.T + _measurement_cov(noise)
    try:
        # K = P Hᵀ S⁻¹, via the symmetric solve
        k = np.linalg.solve(s, h @ p).T
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure("singular innovation covariance") from exc
    mean = b.mean + k @ nu
    cov = (np.eye(b.mean.size) - k @ h) @ p
    return BeliefState(mean, cov)


def augment(b: BeliefState, z: RangeBearing, noise: NoiseParams) -> BeliefState:
    """Append a new landmark initialized from the pose and one sighting."""
    n = b.mean.size
    x, y, th = b.mean[:3]
    a = th + z.phi
    mean = np.concatenate([b.mean, [x + z.r * math.cos(a), y + z.r * math.sin(a)]])

    # Jacobians of the inverse measurement wrt pose and wrt (r, phi)
    gp = np.array([[1.0, 0.0, -z.r * math.sin(a)], [0.0, 1.0, z.r * math.cos(a)]])
    gz = np.array(
        [[math.cos(a), -z.r * math.sin(a)], [math.sin(a), z.r * math.cos(a)]]
    )
    p = b.covariance
    cov = np.zeros((n + 2, n + 2))
    cov[:n, :n] = p
    cross = gp @ p[:3, :]
    cov[n:, :n] = cross
    cov[:n, n:] = cross.T
    cov[n:, n:] = gp @ p[:3, :3] @ gp.T + gz @ _measurement_cov(noise) @ gz.T
    return BeliefState(mean, cov)


def estimate_pose(b: BeliefState) -> tuple[Pose, np.ndarray]:
    """Pose block of the belief: (mean pose, 3x3 covariance)."""
    return Pose(*b.mean[:3]), np.array(b.covariance[:3, :3])


def pose_nees(b: BeliefState, true_pose: Pose) -> float:
    """Normalized estimation error squared of the pose block."""
    err = np.array(
        [
            b.mean[0] - true_pose.x,
            b.mean[1] - true_pose.y,
            wrap_angle(b.mean[2] - true_pose.theta),
        ]
    )
    try:
        return float(err @ np.linalg.solve(b.covariance[:3, :3], err))
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure("singular pose covariance") from exc
