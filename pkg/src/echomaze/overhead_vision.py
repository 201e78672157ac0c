"""Simulated overhead camera plus classical recovery of grid and robot pose.

The renderer draws walls and floor as flat intensity levels and the robot as
two anti-aliased fiducial disks (bright front, dark rear).  Recovery goes the
other way: Otsu threshold -> per-cell occupancy vote -> marker centroids.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .world import CellState, MazeSpec, Pose, wrap_angle


class ResolutionTooLow(ValueError):
    pass


class DegenerateHistogram(ValueError):
    pass


class ImageTooSmall(ValueError):
    pass


class MarkerNotFound(ValueError):
    pass


MARKER_MATCH_BAND = 20  # candidate pixels sit within +/- this of a marker level
_SUPERSAMPLE = 8  # sub-pixel grid for disk edge coverage
_PAD_MARGIN_M = 0.02  # chassis pad extends this far beyond each fiducial disk


@dataclass(frozen=True, eq=False)
class GrayImage:
    """Row-major 8-bit image; row i spans y in [i, i+1) / px_per_m."""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.pixels)
        if arr.ndim != 2 or arr.size == 0:
            raise ValueError(f"image must be 2-D and nonempty, got shape {arr.shape}")
        if arr.dtype != np.uint8:
            raise ValueError(f"image must be uint8, got {arr.dtype}")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "pixels", arr)

    @property
    def width_px(self) -> int:
        return self.pixels.shape[1]

    @property
    def height_px(self) -> int:
        return self.pixels.shape[0]

    def to_pgm(self) -> bytes:
        header = f"P5\n{self.width_px} {self.height_px}\n255\n".encode("ascii")
        return header + self.pixels.tobytes()


@dataclass(frozen=True)
class OverheadCamera:
    px_per_m: float = 50.0
    noise_sigma: float = 0.0
    floor_level: int = 200
    wall_level: int = 40

    def __post_init__(self) -> None:
        if self.px_per_m <= 0:
            raise ValueError(f"px_per_m must be positive, got {self.px_per_m}")
        if self.noise_sigma < 0:
            raise ValueError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if not self.wall_level < self.floor_level:
            raise ValueError("wall_level must be darker than floor_level")


@dataclass(frozen=True)
class MarkerSpec:
    front_intensity: int = 250
    rear_intensity: int = 10
    disk_radius: float = 0.08
    marker_separation: float = 0.24

    def __post_init__(self) -> None:
        if self.disk_radius <= 0 or self.marker_separation <= 0:
            raise ValueError("disk_radius and marker_separation must be positive")

    def check_against(self, cam: OverheadCamera) -> None:
        """Marker levels must sit outside the wall/floor band, separated by
        at least 3 noise sigmas from either level."""
        for name, level in (("front", self.front_intensity), ("rear", self.rear_intensity)):
            if cam.wall_level <= level <= cam.floor_level:
                raise ValueError(
                    f"{name} marker intensity {level} inside "
                    f"[wall {cam.wall_level}, floor {cam.floor_level}]"
                )
            margin = min(abs(level - cam.wall_level), abs(level - cam.floor_level))
            if margin + 1e-9 < 3.0 * cam.noise_sigma:
                raise ValueError(
                    f"{name} marker intensity {level} within 3 noise sigmas of scenery"
                )


@dataclass(frozen=True)
class RecoveredMap:
    cells: tuple[tuple[CellState, ...], ...]
    fractions: tuple[tuple[float, ...], ...]

    @property
    def width_cells(self) -> int:
        return len(self.cells[0])

    @property
    def height_cells(self) -> int:
        return len(self.cells)


def _image_shape(maze: MazeSpec, cam: OverheadCamera) -> tuple[int, int]:
    w = round(cam.px_per_m * maze.cell_size * maze.width_cells)
    h = round(cam.px_per_m * maze.cell_size * maze.height_cells)
    return h, w


def _paint_disk(
    img: np.ndarray, cx: float, cy: float, radius: float, level: float, ppm: float
) -> None:
    """Alpha-composite one disk; coverage from a sub-pixel sample grid."""
    h, w = img.shape
    x0 = max(0, math.floor((cx - radius) * ppm) - 1)
    x1 = min(w, math.ceil((cx + radius) * ppm) + 1)
    y0 = max(0, math.floor((cy - radius) * ppm) - 1)
    y1 = min(h, math.ceil((cy + radius) * ppm) + 1)
    if x0 >= x1 or y0 >= y1:
        return
    s = _SUPERSAMPLE
    sub = (np.arange(s) + 0.5) / s
    xs = (np.arange(x0, x1)[:, None] + sub[None, :]).reshape(-1) / ppm
    ys = (np.arange(y0, y1)[:, None] + sub[None, :]).reshape(-1) / ppm
    dx2 = (xs - cx) ** 2
    dy2 = (ys - cy) ** 2
    inside = dy2[:, None] + dx2[None, :] <= radius * radius
    cover = inside.reshape(y1 - y0, s, x1 - x0, s).mean(axis=(1, 3))
    patch = img[y0:y1, x0:x1]
    patch[:] = patch * (1.0 - cover) + level * cover


def render_overhead(
    maze: MazeSpec, robot: Pose, cam: OverheadCamera, marker: MarkerSpec, seed: int
) -> GrayImage:
    """Top-down view: flat wall/floor levels, two marker disks, optional noise."""
    if cam.px_per_m * maze.cell_size < 8:
        raise ResolutionTooLow(
            f"{cam.px_per_m * maze.cell_size:.2f} px per cell; need at least 8"
        )
    marker.check_against(cam)
    h, w = _image_shape(maze, cam)
    px_per_cell = cam.px_per_m * maze.cell_size
    rows = np.minimum(
        ((np.arange(h) + 0.5) / px_per_cell).astype(int), maze.height_cells - 1
    )
    cols = np.minimum(
        ((np.arange(w) + 0.5) / px_per_cell).astype(int), maze.width_cells - 1
    )
    wall_mask = np.array(
        [[cell is CellState.WALL for cell in row] for row in maze.cells], dtype=bool
    )
    img = np.where(
        wall_mask[rows[:, None], cols[None, :]],
        float(cam.wall_level),
        float(cam.floor_level),
    )

    half = marker.marker_separation / 2.0
    fx = robot.x + half * math.cos(robot.theta)
    fy = robot.y + half * math.sin(robot.theta)
    rx = robot.x - half * math.cos(robot.theta)
    ry = robot.y - half * math.sin(robot.theta)
    # chassis pad: a backing disk under each fiducial so its rim always blends
    # against one level, offset 50 from the fiducial so the rim ramp enters
    # the +/-20 candidate band at 60% coverage for bright and dark alike
    pad = marker.disk_radius + _PAD_MARGIN_M
    for cx, cy, level in (
        (fx, fy, marker.front_intensity),
        (rx, ry, marker.rear_intensity),
    ):
        pad_level = level - 50 if level >= 128 else level + 50
        _paint_disk(img, cx, cy, pad, float(pad_level), cam.px_per_m)
    _paint_disk(img, rx, ry, marker.disk_radius, marker.rear_intensity, cam.px_per_m)
    _paint_disk(img, fx, fy, marker.disk_radius, marker.front_intensity, cam.px_per_m)

    if cam.noise_sigma > 0:
        rng = np.random.default_rng(seed)
        img = img + rng.normal(0.0, cam.noise_sigma, img.shape)
    return GrayImage(np.clip(np.rint(img), 0, 255).astype(np.uint8))


def otsu_threshold(img: GrayImage) -> int:
    """Threshold maximizing between-class variance; low class is v <= t.

    Ties resolve toward the lower threshold.
    """
    hist = np.bincount(img.pixels.ravel(), minlength=256).astype(np.float64)
    total = hist.sum()
    values = np.arange(256, dtype=np.float64)
    if np.count_nonzero(hist) < 2:
        raise DegenerateHistogram("image is constant")
    w0 = np.cumsum(hist)
    w1 = total - w0
    sum0 = np.cumsum(hist * values)
    mu_total = sum0[-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        mu0 = sum0 / w0
        mu1 = (mu_total - sum0) / w1
        between = w0 * w1 * (mu0 - mu1) ** 2
    between[~np.isfinite(between)] = 0.0
    return int(np.argmax(between))


_SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float64)
_SOBEL_Y = _SOBEL_X.T


def detect_edges(img: GrayImage) -> GrayImage:
    """Sobel gradient magnitude, max-normalized to [0, 255], zero border."""
    if img.width_px < 3 or img.height_px < 3:
        raise ImageTooSmall(f"need at least 3x3, got {img.width_px}x{img.height_px}")
    p = img.pixels.astype(np.float64)
    gx = np.zeros_like(p)
    gy = np.zeros_like(p)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            kx = _SOBEL_X[dy + 1, dx + 1]
            ky = _SOBEL_Y[dy + 1, dx + 1]
            if kx == 0 and ky == 0:
                continue
            shifted = p[1 + dy : p.shape[0] - 1 + dy, 1 + dx : p.shape[1] - 1 + dx]
            if kx:
                gx[1:-1, 1:-1] += kx * shifted
            if ky:
                gy[1:-1, 1:-1] += ky * shifted
    mag = np.hypot(gx, gy)
    peak = mag.max()
    if peak > 0:
        mag = mag * (255.0 / peak)
    return GrayImage(np.rint(mag).astype(np.uint8))


def _candidate_mask(pixels: np.ndarray, level: int) -> np.ndarray:
    return np.abs(pixels.astype(np.int16) - level) <= MARKER_MATCH_BAND


def _largest_component(mask: np.ndarray) -> np.ndarray | None:
    """Largest 4-connected True component, or None if the mask is empty."""
    coords = np.argwhere(mask)
    if coords.size == 0:
        return None
    remaining = {(int(r), int(c)) for r, c in coords}
    best: list[tuple[int, int]] = []
    while remaining:
        seed_px = remaining.pop()
        blob = [seed_px]
        queue = deque([seed_px])
        while queue:
            r, c = queue.popleft()
            for nr, nc in ((r + 1, c), (r - 1, c), (r, c + 1), (r, c - 1)):
                if (nr, nc) in remaining:
                    remaining.remove((nr, nc))
                    blob.append((nr, nc))
                    queue.append((nr, nc))
        if len(blob) > len(best):
            best = blob
    out = np.zeros_like(mask)
    rows, cols = zip(*best)
    out[list(rows), list(cols)] = True
    return out


def _marker_centroid_px(img: GrayImage, level: int) -> tuple[float, float]:
    """Intensity-weighted centroid (x_px, y_px) of the marker blob.

    A bright marker weights by pixel value; a dark marker weights by the
    complement, so that in both cases more-marker-like pixels count more.
    """
    mask = _candidate_mask(img.pixels, level)
    if int(mask.sum()) < 5:
        raise MarkerNotFound(f"fewer than 5 pixels near intensity {level}")
    blob = _largest_component(mask)
    if blob is None or int(blob.sum()) < 5:
        raise MarkerNotFound(f"no blob of 5+ pixels near intensity {level}")
    ys, xs = np.nonzero(blob)
    wsel = img.pixels[ys, xs].astype(np.float64)
    if level < 128:
        wsel = 255.0 - wsel
    total = wsel.sum()
    cx = float(((xs + 0.5) * wsel).sum() / total)
    cy = float(((ys + 0.5) * wsel).sum() / total)
    return cx, cy


def locate_robot(img: GrayImage, cam: OverheadCamera, marker: MarkerSpec) -> Pose:
    """Pose from the two marker blobs: midpoint position, front-rear heading."""
    fx_px, fy_px = _marker_centroid_px(img, marker.front_intensity)
    rx_px, ry_px = _marker_centroid_px(img, marker.rear_intensity)
    fx, fy = fx_px / cam.px_per_m, fy_px / cam.px_per_m
    rx, ry = rx_px / cam.px_per_m, ry_px / cam.px_per_m
    theta = wrap_angle(math.atan2(fy - ry, fx - rx))
    return Pose((fx + rx) / 2.0, (fy + ry) / 2.0, theta)


def segment_grid(
    img: GrayImage,
    cam: OverheadCamera,
    maze_dims: tuple[int, int, float],
    marker: MarkerSpec | None = None,
) -> RecoveredMap:
    """Per-cell occupancy vote against the Otsu threshold.

    When a marker spec is given, pixels within disk_radius + 2 px of each
    detected marker centroid do not vote (the robot is not a wall).
    """
    width_cells, height_cells, cell_size = maze_dims
    px_per_cell = cam.px_per_m * cell_size
    exp_w = px_per_cell * width_cells
    exp_h = px_per_cell * height_cells
    if abs(img.width_px - exp_w) > px_per_cell or abs(img.height_px - exp_h) > px_per_cell:
        raise ValueError(
            f"image {img.width_px}x{img.height_px} inconsistent with "
            f"{width_cells}x{height_cells} cells at {px_per_cell:.1f} px/cell"
        )
    t = otsu_threshold(img)
    dark = img.pixels <= t

    votes = np.ones(img.pixels.shape, dtype=bool)
    if marker is not None:
        for level in (marker.front_intensity, marker.rear_intensity):
            try:
                cx, cy = _marker_centroid_px(img, level)
            except MarkerNotFound:
                continue
            radius_px = marker.disk_radius * cam.px_per_m + 2.0
            ys = np.arange(img.height_px) + 0.5
            xs = np.arange(img.width_px) + 0.5
            near = (ys[:, None] - cy) ** 2 + (xs[None, :] - cx) ** 2 <= radius_px**2
            votes &= ~near

    rows = np.minimum(
        ((np.arange(img.height_px) + 0.5) / px_per_cell).astype(int), height_cells - 1
    )
    cols = np.minimum(
        ((np.arange(img.width_px) + 0.5) / px_per_cell).astype(int), width_cells - 1
    )
    cell_ids = rows[:, None] * width_cells + cols[None, :]
    n_cells = width_cells * height_cells
    denom = np.bincount(cell_ids[votes], minlength=n_cells).astype(np.float64)
    num = np.bincount(cell_ids[votes & dark], minlength=n_cells).astype(np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        frac = np.where(denom > 0, num / np.maximum(denom, 1.0), 0.0)
    frac = frac.reshape(height_cells, width_cells)
    cells = tuple(
        tuple(CellState.WALL if f > 0.5 else CellState.FREE for f in row) for row in frac
    )
    fractions = tuple(tuple(float(f) for f in row) for row in frac)
    return RecoveredMap(cells=cells, fractions=fractions)
