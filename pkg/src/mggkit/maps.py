"""Benchmark grid-map parsing and the undirected base graph with bridge annotations.

Cell ids are row-major indices over the full grid (obstacles included), so
tensor channels and graph ids share one coordinate system. Directions are
indexed 0=east, 1=south, 2=west, 3=north everywhere in the package.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import MapError

EAST, SOUTH, WEST, NORTH = 0, 1, 2, 3
DIR_OFFSETS = ((0, 1), (1, 0), (0, -1), (-1, 0))  # (dr, dc) per direction index

_PASSABLE_CHARS = frozenset(".G")
_BLOCKED_CHARS = frozenset("@T")


@dataclass(frozen=True)
class GridMap:
    """A parsed 2D obstacle grid with row-major passable-cell indexing."""

    height: int
    width: int
    passable: np.ndarray  # bool, flat, length height*width
    name: str
    rows: tuple[str, ...] = field(default=(), repr=False)  # verbatim grid rows

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise MapError(f"bad dimensions {self.height}x{self.width}")
        if self.passable.shape != (self.height * self.width,):
            raise MapError("passable array does not match dimensions")

    @property
    def num_passable(self) -> int:
        return int(self.passable.sum())

    def passable_cells(self) -> np.ndarray:
        """Sorted cell ids of passable cells."""
        return np.flatnonzero(self.passable)

    def cell_id(self, r: int, c: int) -> int:
        return r * self.width + c

    def cell_rc(self, cell: int) -> tuple[int, int]:
        return divmod(cell, self.width)

    def to_text(self) -> str:
        rows = self.rows or tuple(
            "".join("." if self.passable[r * self.width + c] else "@" for c in range(self.width))
            for r in range(self.height)
        )
        header = f"type octile\nheight {self.height}\nwidth {self.width}\nmap\n"
        return header + "\n".join(rows) + "\n"

    @staticmethod
    def from_passable(height: int, width: int, passable: np.ndarray, name: str) -> "GridMap":
        grid = GridMap(height, width, np.asarray(passable, dtype=bool).ravel(), name)
        _check_connected(grid)
        return grid


def empty_map(height: int, width: int, name: str | None = None) -> GridMap:
    """Fully open grid of the given size."""
    name = name or f"empty-{height}-{width}"
    return GridMap.from_passable(height, width, np.ones(height * width, dtype=bool), name)


def parse_map(text: str, name: str = "map") -> GridMap:
    """Parse benchmark .map text (type/height/width/map header, then grid rows)."""
    lines = text.splitlines()
    if len(lines) < 5:
        raise MapError("map file too short for header plus grid")
    if not lines[0].strip().startswith("type"):
        raise MapError(f"expected 'type' line, got {lines[0]!r}")
    try:
        height = int(lines[1].split()[1])
        width = int(lines[2].split()[1])
    except (IndexError, ValueError) as exc:
        raise MapError(f"malformed height/width lines: {exc}") from exc
    if lines[3].strip() != "map":
        raise MapError(f"expected 'map' line, got {lines[3]!r}")
    if height < 1 or width < 1:
        raise MapError(f"bad dimensions {height}x{width}")

    rows = [line.rstrip() for line in lines[4 : 4 + height]]
    if len(rows) != height:
        raise MapError(f"expected {height} grid rows, found {len(rows)}")
    passable = np.zeros(height * width, dtype=bool)
    for r, row in enumerate(rows):
        if len(row) != width:
            raise MapError(f"row {r} has length {len(row)}, expected {width}")
        for c, ch in enumerate(row):
            if ch in _PASSABLE_CHARS:
                passable[r * width + c] = True
            elif ch not in _BLOCKED_CHARS:
                raise MapError(f"unknown map character {ch!r} at row {r}, col {c}")

    grid = GridMap(height, width, passable, name, tuple(rows))
    _check_connected(grid)
    return grid


def load_map(path) -> GridMap:
    import os

    with open(path) as f:
        text = f.read()
    base = os.path.basename(str(path))
    return parse_map(text, name=base.removesuffix(".map"))


def _check_connected(grid: GridMap) -> None:
    cells = grid.passable_cells()
    if cells.size == 0:
        raise MapError("map has no passable cells")
    w = grid.width
    seen = np.zeros(grid.height * w, dtype=bool)
    stack = [int(cells[0])]
    seen[cells[0]] = True
    passable = grid.passable
    while stack:
        v = stack.pop()
        r, c = divmod(v, w)
        for dr, dc in DIR_OFFSETS:
            nr, nc = r + dr, c + dc
            if 0 <= nr < grid.height and 0 <= nc < w:
                u = nr * w + nc
                if passable[u] and not seen[u]:
                    seen[u] = True
                    stack.append(u)
    if int(seen.sum()) != cells.size:
        raise MapError("passable region is disconnected")


@dataclass
class BaseGraph:
    """Undirected 4-connected graph over passable cells, with bridges annotated.

    ``undirected_edges`` lists each edge once as (u, v) with u < v, sorted
    lexicographically; that (u, v) order is the canonical Forward direction
    for guidance graphs.
    """

    vertices: np.ndarray  # sorted passable cell ids
    undirected_edges: np.ndarray  # [E, 2] int, u < v, lexicographically sorted
    bridge_mask: np.ndarray  # bool per edge
    height: int
    width: int
    name: str = "graph"

    def __post_init__(self):
        self._edge_index = {
            (int(u), int(v)): i for i, (u, v) in enumerate(self.undirected_edges)
        }
        self._vertex_pos = {int(v): i for i, v in enumerate(self.vertices)}
        n = self.height * self.width
        nbr = np.full((n, 4), -1, dtype=np.int32)
        incident: list[list[int]] = [[] for _ in range(n)]
        for i, (u, v) in enumerate(self.undirected_edges):
            u, v = int(u), int(v)
            d = EAST if v == u + 1 else SOUTH
            nbr[u, d] = v
            nbr[v, (d + 2) % 4] = u
            incident[u].append(i)
            incident[v].append(i)
        self.neighbor_table = nbr
        self.incident_edges = incident

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_edges(self) -> int:
        return len(self.undirected_edges)

    @property
    def bridges(self) -> np.ndarray:
        return self.undirected_edges[self.bridge_mask]

    @property
    def num_bridges(self) -> int:
        return int(self.bridge_mask.sum())

    @property
    def biconnected(self) -> bool:
        return self.num_bridges == 0

    @property
    def num_orientable(self) -> int:
        """Non-bridge undirected edges (the ones whose direction may be chosen)."""
        return self.num_edges - self.num_bridges

    def edge_id(self, u: int, v: int) -> int:
        if u > v:
            u, v = v, u
        return self._edge_index[(u, v)]

    def vertex_pos(self, cell: int) -> int:
        """Position of a cell id within the sorted vertex list."""
        return self._vertex_pos[cell]

    def to_json_dict(self) -> dict:
        return {
            "name": self.name,
            "height": self.height,
            "width": self.width,
            "vertices": [int(v) for v in self.vertices],
            "edges": [[int(u), int(v)] for u, v in self.undirected_edges],
            "bridges": [[int(u), int(v)] for u, v in self.bridges],
            "biconnected": self.biconnected,
        }


def build_base_graph(grid: GridMap) -> BaseGraph:
    """Base graph of a grid map; bridges found by the DFS low-link method."""
    w, h = grid.width, grid.height
    passable = grid.passable
    edges = []
    for v in grid.passable_cells():
        v = int(v)
        r, c = divmod(v, w)
        if c + 1 < w and passable[v + 1]:
            edges.append((v, v + 1))
        if r + 1 < h and passable[v + w]:
            edges.append((v, v + w))
    edge_arr = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    return base_graph_from_edges(
        grid.passable_cells(), edge_arr, height=h, width=w, name=grid.name
    )


def base_graph_from_edges(
    vertices: np.ndarray,
    undirected_edges: np.ndarray,
    height: int,
    width: int,
    name: str = "graph",
) -> BaseGraph:
    order = np.lexsort((undirected_edges[:, 1], undirected_edges[:, 0]))
    edge_arr = undirected_edges[order]
    bridge_mask = _find_bridges(vertices, edge_arr)
    return BaseGraph(np.asarray(vertices, dtype=np.int64), edge_arr, bridge_mask, height, width, name)


def _find_bridges(vertices: np.ndarray, edges: np.ndarray) -> np.ndarray:
    """Bridge mask via iterative DFS low-link (linear time, no recursion)."""
    adj: dict[int, list[tuple[int, int]]] = {int(v): [] for v in vertices}
    for i, (u, v) in enumerate(edges):
        u, v = int(u), int(v)
        adj[u].append((v, i))
        adj[v].append((u, i))

    preorder: dict[int, int] = {}
    low: dict[int, int] = {}
    is_bridge = np.zeros(len(edges), dtype=bool)
    counter = 0
    for root in map(int, vertices):
        if root in preorder:
            continue
        # stack entries: (vertex, incoming edge id, iterator index into adj)
        preorder[root] = low[root] = counter
        counter += 1
        stack = [(root, -1, 0)]
        while stack:
            v, in_edge, ptr = stack[-1]
            if ptr < len(adj[v]):
                stack[-1] = (v, in_edge, ptr + 1)
                w_, eid = adj[v][ptr]
                if eid == in_edge:
                    continue
                if w_ in preorder:
                    low[v] = min(low[v], preorder[w_])
                else:
                    preorder[w_] = low[w_] = counter
                    counter += 1
                    stack.append((w_, eid, 0))
            else:
                stack.pop()
                if stack:
                    parent = stack[-1][0]
                    low[parent] = min(low[parent], low[v])
                    if low[v] > preorder[parent]:
                        is_bridge[in_edge] = True
    return is_bridge
