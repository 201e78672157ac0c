"""Simulated stereo rig and classical disparity-based depth recovery.

The renderer ray-casts one ray per image column from each eye and fills the
column with a procedural texture keyed to the struck wall face and the hit
offset along it.  Because both eyes sample the same world texture through
rectified pinhole geometry, matching features land at disparity
d = focal_px * baseline_m / Z with Z the perpendicular depth, so the block
matcher can be validated against ray-cast ground truth.

Depth sentinel: out-of-range measurements are reported as ``math.inf``
rather than a wrapper type, which makes column minima and comparisons
against thresholds direct.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .overhead_vision import GrayImage
from .world import (
    CellState,
    GridIndex,
    MazeSpec,
    Pose,
    PoseInWall,
    cast_ray,
    world_to_grid,
)


class ShapeMismatch(ValueError):
    pass


class InvalidDisparity(ValueError):
    pass


OUT_OF_RANGE = math.inf

_FACE_INDEX = {"E": 0, "N": 1, "W": 2, "S": 3}

_MASK64 = (1 << 64) - 1


def _mix(h: int) -> int:
    # splitmix64 finalizer; cheap, stable across platforms and runs
    h &= _MASK64
    h = ((h ^ (h >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    h = ((h ^ (h >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (h ^ (h >> 31)) & _MASK64


def _lattice(face_key: int, i: int, j: int, salt: int) -> float:
    return _mix(face_key ^ _mix((i << 20) ^ (j << 4) ^ salt)) / float(1 << 64)


def _face_key(cell: GridIndex, normal: str) -> int:
    return _mix(
        (cell.col & 0xFFFFF) << 24 | (cell.row & 0xFFFFF) << 4 | _FACE_INDEX[normal]
    )


_TWO_PI = 2.0 * math.pi


@lru_cache(maxsize=4096)
def _row_waves(
    face_key: int, height_px: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Per-row base level and two (phase, rate) pairs for a face's pattern.

    Each row sums two sinusoids drawn from well-separated wavelength bands.
    A single sinusoid is periodic, and once perspective shrinks its period
    to a few pixels every row of a window realigns at a one-period shift,
    which reads as a confident wrong depth.  The second band breaks that:
    a shift of one short period leaves the long component almost half a
    cycle out, and no shift inside the search band realigns both.
    """
    bases = np.array(
        [2.0 * _lattice(face_key, 0, j, 101) - 1.0 for j in range(height_px)]
    )
    phases_a = np.array(
        [_TWO_PI * _lattice(face_key, 0, j, 3) for j in range(height_px)]
    )
    waves_a = np.array(
        [
            _WAVE_VERT_T * (1.0 + 0.5 * _lattice(face_key, 0, j, 4))
            for j in range(height_px)
        ]
    )
    phases_b = np.array(
        [_TWO_PI * _lattice(face_key, 0, j, 5) for j in range(height_px)]
    )
    waves_b = np.array(
        [
            _WAVE_VERT_L * (1.0 + 0.5 * _lattice(face_key, 0, j, 6))
            for j in range(height_px)
        ]
    )
    rates_a = _TWO_PI / waves_a
    rates_b = _TWO_PI / waves_b
    for arr in (bases, phases_a, rates_a, phases_b, rates_b):
        arr.setflags(write=False)
    return bases, phases_a, rates_a, phases_b, rates_b


# texture component amplitudes in intensity counts; the per-row face base
# makes windows from different faces expensive to confuse, the two row
# sinusoids carry the matchable detail; their amplitude is blurred over the
# pixel footprint so distant walls fade to smooth columns instead of
# aliasing into false matches
_AMP_BASE = 40.0
_AMP_VERT = 30.0
_WAVE_VERT_T = 0.14
_WAVE_VERT_L = 0.34


def _column_texture(
    face_key: int, offset: float, height_px: int, footprint: float
) -> np.ndarray:
    """Texture column (intensity counts) for a vertical slice of a face.

    Smooth in ``offset`` so subpixel image shifts change the column
    gradually; varied down the rows so false matches cannot survive on a
    lucky horizontal agreement.
    """
    # per-row random-phase sinusoids in offset: every row shifts smoothly
    # and at a comparable rate as the window slides, so one-pixel
    # misalignment costs about the same at every row and the row-minimum
    # stays honest.  A pixel blurs the wall over ``footprint`` metres
    # (Gaussian optics, sigma of half the footprint), scaling each sinusoid
    # by the kernel's transform; far walls therefore lose their fine detail
    # the way a real camera defocuses them instead of aliasing into false
    # matches.
    bases, phases_a, rates_a, phases_b, rates_b = _row_waves(face_key, height_px)
    fade_a = np.exp(-0.5 * np.square(rates_a * footprint / 2.0))
    fade_b = np.exp(-0.5 * np.square(rates_b * footprint / 2.0))
    vert = np.cos(phases_a + rates_a * offset) * fade_a
    vert = vert + np.cos(phases_b + rates_b * offset) * fade_b

    return 128.0 + _AMP_BASE * bases + _AMP_VERT * vert


@dataclass(frozen=True)
class StereoRig:
    """Rectified stereo pair riding the robot, looking along its heading."""

    focal_px: float = 90.0
    baseline_m: float = 0.06
    width_px: int = 96
    height_px: int = 64
    d_max: int = 48
    hfov_deg: float = 60.0

    def __post_init__(self) -> None:
        if self.focal_px <= 0 or self.baseline_m <= 0:
            raise ValueError("focal_px and baseline_m must be positive")
        if self.width_px <= 0 or self.height_px <= 0:
            raise ValueError("image dimensions must be positive")
        if not 0 < self.d_max < self.width_px:
            raise ValueError("d_max must lie in (0, width_px)")
        # the pinhole must not see wider than its advertised field of view
        span = 2.0 * math.degrees(math.atan2((self.width_px - 1) / 2.0, self.focal_px))
        if span > self.hfov_deg + 1e-9:
            raise ValueError(
                f"width/focal cover {span:.1f} deg, beyond hfov_deg={self.hfov_deg}"
            )

    @property
    def min_depth_m(self) -> float:
        return self.focal_px * self.baseline_m / self.d_max


@dataclass(frozen=True)
class DisparityMap:
    """Subpixel disparities with NaN marking invalid pixels.

    ``raw`` holds the integer SAD argmin stage (-1 where invalid) so the
    matcher can be checked against an exhaustive scan.
    """

    values: np.ndarray
    raw: np.ndarray
    d_max: int

    @property
    def valid_mask(self) -> np.ndarray:
        return ~np.isnan(self.values)


@dataclass(frozen=True)
class DepthProfile:
    """Per-column forward depth (min over rows; inf = out of range)."""

    depths_m: tuple[float, ...]
    bearings_deg: tuple[float, ...]


@dataclass(frozen=True)
class Clearance:
    distance_m: float
    degraded: bool = False


def _column_angles(rig: StereoRig) -> np.ndarray:
    cx = (rig.width_px - 1) / 2.0
    # positive image x is to the right of heading, so right of center
    # means a clockwise (negative) bearing
    return np.arctan2(np.arange(rig.width_px) - cx, rig.focal_px)


def render_stereo(
    maze: MazeSpec,
    pose: Pose,
    rig: StereoRig,
    seed: int,
    noise_sigma: float = 2.0,
) -> tuple[GrayImage, GrayImage]:
    """Render the left/right column-textured views from the robot's pose."""
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be >= 0")
    cell = world_to_grid(pose, maze)
    if maze.cells[cell.row][cell.col] is CellState.WALL:
        raise PoseInWall(f"pose ({pose.x}, {pose.y}) inside a wall cell")
    angles = _column_angles(rig)
    half = rig.baseline_m / 2.0
    lx = pose.x - half * math.sin(pose.theta)
    ly = pose.y + half * math.cos(pose.theta)
    rx = pose.x + half * math.sin(pose.theta)
    ry = pose.y - half * math.cos(pose.theta)

    rng = np.random.default_rng(seed)
    images = []
    for ex, ey in ((lx, ly), (rx, ry)):
        plane = np.empty((rig.height_px, rig.width_px), dtype=np.float64)
        for u, beta in enumerate(angles):
            hit = cast_ray(maze, ex, ey, pose.theta - beta)
            key = _face_key(hit.cell, hit.normal)
            plane[:, u] = _column_texture(
                key, hit.offset, rig.height_px, hit.distance / rig.focal_px
            )
        plane += rng.normal(0.0, noise_sigma, size=plane.shape)
        images.append(GrayImage(np.clip(np.rint(plane), 0, 255).astype(np.uint8)))
    return images[0], images[1]


def _sad_volumes(
    left: np.ndarray, right: np.ndarray, window: int, d_max: int
) -> tuple[np.ndarray, np.ndarray]:
    """Window SAD cost volumes for the left and right images.

    vol_l[d, y, x] is the cost of matching left pixel x against right pixel
    x - d; vol_r[d, y, x] matches right pixel x against left pixel x + d.
    Infeasible entries are +inf.
    """
    h, w = left.shape
    w2 = window // 2
    vol_l = np.full((d_max + 1, h, w), np.inf, dtype=np.float64)
    vol_r = np.full((d_max + 1, h, w), np.inf, dtype=np.float64)
    li = left.astype(np.int64)
    ri = right.astype(np.int64)
    for d in range(min(d_max, w - window) + 1):
        diff = np.abs(li[:, d:] - ri[:, : w - d])
        ii = np.zeros((h + 1, w - d + 1), dtype=np.int64)
        np.cumsum(np.cumsum(diff, axis=0), axis=1, out=ii[1:, 1:])
        sums = (
            ii[window:, window:]
            - ii[:-window, window:]
            - ii[window:, :-window]
            + ii[:-window, :-window]
        )
        vol_l[d, w2 : h - w2, d + w2 : w - w2] = sums
        vol_r[d, w2 : h - w2, w2 : w - d - w2] = sums
    return vol_l, vol_r


# a match is ambiguous when some disparity well outside the winning valley
# costs nearly as little as the winner; such pixels (occlusions, walls seen
# nearly edge-on) are dropped rather than reported with junk depth
_UNIQ_RATIO = 1.25
_UNIQ_EXCLUDE = 3


def block_match(
    left: GrayImage, right: GrayImage, window: int = 5, d_max: int = 48
) -> DisparityMap:
    """Dense SAD block matching with parabolic subpixel refinement.

    Integer disparities minimize the window SAD over d in [0, d_max] (ties
    to the smaller d); survivors of the 1 px left-right consistency check
    and the uniqueness screen are refined on the (d-1, d, d+1) costs.
    """
    if left.pixels.shape != right.pixels.shape:
        raise ShapeMismatch(
            f"left {left.pixels.shape} vs right {right.pixels.shape}"
        )
    h, w = left.pixels.shape
    if window % 2 == 0 or window < 1:
        raise ValueError("window must be odd and positive")
    if window > min(w, h):
        raise ValueError("window larger than image")

    vol_l, vol_r = _sad_volumes(left.pixels, right.pixels, window, d_max)
    d_l = np.argmin(vol_l, axis=0)
    c0 = np.take_along_axis(vol_l, d_l[None], axis=0)[0]
    d_r = np.argmin(vol_r, axis=0)
    valid = np.isfinite(c0)
    finite_r = np.isfinite(np.take_along_axis(vol_r, d_r[None], axis=0)[0])

    xs = np.arange(w)[None, :]
    xr = np.clip(xs - d_l, 0, w - 1)
    d_r_at = np.take_along_axis(d_r, xr, axis=1)
    ok_r = np.take_along_axis(finite_r, xr, axis=1)
    valid &= (xs - d_l >= 0) & ok_r & (np.abs(d_l - d_r_at) <= 1)

    masked = vol_l.copy()
    for off in range(-_UNIQ_EXCLUDE, _UNIQ_EXCLUDE + 1):
        idx = np.clip(d_l + off, 0, d_max)
        np.put_along_axis(masked, idx[None], np.inf, axis=0)
    c_rival = masked.min(axis=0)
    eps = float(window * window)
    # a winner with no feasible rival outside the band is unverifiable,
    # not unique, so an infinite rival cost does not count in its favour
    valid &= np.isfinite(c_rival) & (c_rival >= _UNIQ_RATIO * c0 + eps)

    # parabolic refinement where both neighbor costs exist
    lo = np.clip(d_l - 1, 0, d_max)
    hi = np.clip(d_l + 1, 0, d_max)
    cm = np.take_along_axis(vol_l, lo[None], axis=0)[0]
    cp = np.take_along_axis(vol_l, hi[None], axis=0)[0]
    refinable = valid & (d_l > 0) & (d_l < d_max) & np.isfinite(cm) & np.isfinite(cp)
    with np.errstate(invalid="ignore"):
        denom = cm - 2.0 * c0 + cp
        delta = np.where(denom > 0, (cm - cp) / (2.0 * denom), 0.0)
    delta = np.clip(np.nan_to_num(delta, nan=0.0), -0.5, 0.5)

    values = d_l.astype(np.float64)
    values[refinable] += delta[refinable]
    values[~valid] = np.nan
    raw = np.where(valid, d_l, -1).astype(np.int32)
    values.setflags(write=False)
    raw.setflags(write=False)
    return DisparityMap(values=values, raw=raw, d_max=d_max)


def depth_from_disparity(d: float, rig: StereoRig) -> float:
    if d < 0:
        raise InvalidDisparity(f"negative disparity {d}")
    if d <= 0.5:
        return OUT_OF_RANGE
    return rig.focal_px * rig.baseline_m / d


def depth_profile(dmap: DisparityMap, rig: StereoRig) -> DepthProfile:
    """Collapse a disparity map to per-column forward depth."""
    fb = rig.focal_px * rig.baseline_m
    with np.errstate(divide="ignore", invalid="ignore"):
        depths = np.where(dmap.values > 0.5, fb / dmap.values, np.inf)
    depths = np.where(np.isnan(depths), np.inf, depths)
    col_min = depths.min(axis=0)
    bearings = -np.degrees(_column_angles(rig))
    return DepthProfile(
        depths_m=tuple(float(v) for v in col_min),
        bearings_deg=tuple(float(b) for b in bearings),
    )


# a column's depth only counts when enough of its rows matched; columns
# carried by a couple of lucky pixels are left to the fallback instead
_MIN_COLUMN_SUPPORT = 8

# below ~1.5 px the half-pixel quantisation is a third of the reading, so
# the column only says "far", not how far; such columns are unusable and
# clearance falls back to the ray cast rather than guess
_MIN_RELIABLE_DISPARITY = 1.5


def front_clearance(
    maze: MazeSpec,
    pose: Pose,
    rig: StereoRig,
    seed: int,
    noise_sigma: float = 2.0,
    window: int = 5,
) -> Clearance:
    """Minimum stereo depth within 10 degrees of heading.

    Falls back to the ray-cast distance (flagged degraded) when no column
    in the cone produced a usable depth, so the safety rule always has a
    number to compare against its threshold.
    """
    left, right = render_stereo(maze, pose, rig, seed, noise_sigma=noise_sigma)
    dmap = block_match(left, right, window=window, d_max=rig.d_max)
    matched = np.isfinite(dmap.values)
    in_cone = np.abs(np.degrees(_column_angles(rig))) <= 10.0
    supported = matched.sum(axis=0) >= _MIN_COLUMN_SUPPORT
    best = math.inf
    for col in np.nonzero(in_cone & supported)[0]:
        # walls run floor to ceiling, so spread down a column is matcher
        # noise; the median row carries the column's disparity
        med = float(np.median(dmap.values[matched[:, col], col]))
        if med >= _MIN_RELIABLE_DISPARITY:
            best = min(best, rig.focal_px * rig.baseline_m / med)
    if math.isfinite(best):
        return Clearance(distance_m=best, degraded=False)
    hit = cast_ray(maze, pose.x, pose.y, pose.theta)
    return Clearance(distance_m=hit.distance, degraded=True)
