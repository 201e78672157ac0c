"""Shared construction helpers for the test suite."""

from echomaze.world import GridIndex, MazeSpec, Pose, cells_from_text

OPEN_5X5 = [
    "#####",
    "#...#",
    "#...#",
    "#...#",
    "#####",
]


def make_maze(rows, cell_size=0.5, start=None, goal=None, unchecked=False):
    cells = cells_from_text(rows)
    h = len(rows)
    w = len(rows[0])
    if start is None:
        start = Pose(1.5 * cell_size, 1.5 * cell_size, 0.0)
    if goal is None:
        goal = GridIndex(w - 2, h - 2)
    return MazeSpec(w, h, cell_size, cells, start, goal, unchecked=unchecked)
