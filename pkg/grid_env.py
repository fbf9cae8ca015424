"""
Deterministic gridworlds for goal-conditioned experiments.

Cells are addressed as (x, y) with (0, 0) at the top-left corner; "up"
decreases y. Free (non-wall) cells are numbered in row-major order and each
free cell is both a state and the goal it achieves.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import FrozenSet, Tuple

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from gc_core import TabularEnv

UP, DOWN, LEFT, RIGHT = 0, 1, 2, 3
ACTION_NAMES = ("up", "down", "left", "right")
ACTION_DELTAS = {
    UP: (0, -1),
    DOWN: (0, 1),
    LEFT: (-1, 0),
    RIGHT: (1, 0),
}

VARIANTS = ("open", "four_rooms", "islands")
DEFAULT_H_MAX = 50


def four_rooms_walls(width, height):
    """
    Four rooms separated by a wall column and two half-wall rows, each with
    one doorway. On 11x11 this is the classic layout with 104 free cells.
    """
    mid_x = width // 2
    left_row = height // 2
    right_row = left_row + 1
    doors = {
        (mid_x, height // 5),
        (mid_x, height - 2),
        (1, left_row),
        (min(width - 2, mid_x + 3), right_row),
    }
    walls = {(mid_x, y) for y in range(height)}
    walls |= {(x, left_row) for x in range(mid_x)}
    walls |= {(x, right_row) for x in range(mid_x + 1, width)}
    return frozenset(walls - doors)


def islands_walls(width, height):
    """A single full wall column splitting the grid in two."""
    mid_x = width // 2
    return frozenset((mid_x, y) for y in range(height))


def default_walls(variant, width, height):
    if variant == "open":
        return frozenset()
    if variant == "four_rooms":
        return four_rooms_walls(width, height)
    if variant == "islands":
        return islands_walls(width, height)
    raise ValueError(f"Unknown grid variant: {variant}")


@dataclass(frozen=True)
class GridSpec:
    """
    Layout of a gridworld.

    Args:
        width (int): Number of columns
        height (int): Number of rows
        variant (str): One of "open", "four_rooms", "islands"
        walls (frozenset): Wall cells as (x, y); None picks the variant's standard layout
    """
    width: int
    height: int
    variant: str = "open"
    walls: FrozenSet[Tuple[int, int]] = field(default=None)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"Unknown grid variant: {self.variant}")
        walls = self.walls
        if walls is None:
            walls = default_walls(self.variant, self.width, self.height)
        object.__setattr__(self, "walls", frozenset((int(x), int(y)) for x, y in walls))

    def to_dict(self):
        return {
            "width": self.width,
            "height": self.height,
            "variant": self.variant,
            "walls": [list(c) for c in sorted(self.walls, key=lambda c: (c[1], c[0]))],
        }

    @classmethod
    def from_dict(cls, data):
        walls = data.get("walls")
        if walls is not None:
            walls = frozenset(tuple(c) for c in walls)
        return cls(width=int(data["width"]), height=int(data["height"]),
                   variant=data.get("variant", "open"), walls=walls)


class GridEnv(TabularEnv):
    """
    Four-action gridworld; moving into a wall or off the grid leaves the
    agent where it is.
    """
    def __init__(self, spec, H_max=DEFAULT_H_MAX):
        self.spec = spec
        cells = [(x, y) for y in range(spec.height) for x in range(spec.width)
                 if (x, y) not in spec.walls]
        self.cells = np.asarray(cells, dtype=np.int64).reshape(-1, 2)
        self._index = {cell: i for i, cell in enumerate(cells)}

        table = np.empty((len(cells), len(ACTION_DELTAS)), dtype=np.int64)
        for i, (x, y) in enumerate(cells):
            for a, (dx, dy) in ACTION_DELTAS.items():
                table[i, a] = self._index.get((x + dx, y + dy), i)
        super().__init__(table, None, H_max)

    def state_of(self, x, y):
        """State id of a free cell; raises KeyError for walls or off-grid cells."""
        return self._index[(x, y)]

    def cell_of(self, s):
        x, y = self.cells[s]
        return int(x), int(y)

    def component_labels(self):
        """Connected-component label of every state."""
        s = np.repeat(np.arange(self.num_states), self.num_actions)
        t = self.next_state_table.ravel()
        graph = coo_matrix((np.ones_like(s), (s, t)), shape=(self.num_states,) * 2).tocsr()
        _, labels = connected_components(graph, directed=True, connection="strong")
        return labels

    def num_components(self):
        return int(np.unique(self.component_labels()).size)

    def render(self, marks=None):
        """
        Text picture of the grid: '#' walls, '.' free cells.

        Args:
            marks (dict, optional): {state_id: character} overlays
        """
        marks = marks or {}
        rows = []
        for y in range(self.spec.height):
            row = []
            for x in range(self.spec.width):
                if (x, y) in self.spec.walls:
                    row.append("#")
                else:
                    row.append(marks.get(self._index[(x, y)], "."))
            rows.append("".join(row))
        return "\n".join(rows)


def build_env(spec, H_max=DEFAULT_H_MAX):
    """
    Build a gridworld and check that its connectivity matches its variant.

    Args:
        spec (GridSpec): Grid layout
        H_max (int): Episode step budget

    Returns:
        GridEnv: The environment

    Raises:
        ValueError: If the grid is too small, walls fall outside it, or the
            layout contradicts the variant (open/four_rooms must be connected,
            islands must not be)
    """
    if spec.width < 1 or spec.height < 1 or spec.width * spec.height < 4:
        raise ValueError("Grid must have at least 4 cells.")
    for x, y in spec.walls:
        if not (0 <= x < spec.width and 0 <= y < spec.height):
            raise ValueError(f"Wall ({x}, {y}) lies outside the grid.")
    if len(spec.walls) >= spec.width * spec.height:
        raise ValueError("Grid has no free cells.")

    env = GridEnv(spec, H_max=H_max)
    components = env.num_components()
    if spec.variant in ("open", "four_rooms") and components != 1:
        raise ValueError(f"{spec.variant} grid must be connected, found {components} components.")
    if spec.variant == "islands" and components < 2:
        raise ValueError("islands grid must have at least 2 connected components.")
    return env
