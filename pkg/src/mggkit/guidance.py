"""Mixed guidance graphs: direction flags plus weights over a base graph.

A mixed guidance graph keeps, per undirected base edge, a direction flag
(Forward = the canonical u<v order, Backward, or Both) and a weight per live
directed move edge, plus one self-loop cost per vertex covering waiting and
90-degree rotations. Bridges are always Both.

Tensor encodings use the global channel order (east, south, west, north);
entries for nonexistent edges or cells are 0, with validity masks available
from the base graph.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import GraphError
from .maps import EAST, SOUTH, WEST, NORTH, BaseGraph, base_graph_from_edges

FORWARD, BACKWARD, BOTH = 0, 1, 2
_DIR_NAMES = {FORWARD: "forward", BACKWARD: "backward", BOTH: "both"}
_DIR_VALUES = {v: k for k, v in _DIR_NAMES.items()}

DEFAULT_OMEGA_LB = 0.1
DEFAULT_OMEGA_UB = 100.0


@dataclass
class MixedGuidanceGraph:
    base: BaseGraph
    dir_flags: np.ndarray  # uint8 per undirected edge
    w_forward: np.ndarray  # float per undirected edge; live iff flag in {FORWARD, BOTH}
    w_backward: np.ndarray  # float per undirected edge; live iff flag in {BACKWARD, BOTH}
    self_loop_cost: np.ndarray  # float per vertex (parallel to base.vertices)
    omega_lb: float = DEFAULT_OMEGA_LB
    omega_ub: float = DEFAULT_OMEGA_UB

    def copy(self) -> "MixedGuidanceGraph":
        return MixedGuidanceGraph(
            self.base,
            self.dir_flags.copy(),
            self.w_forward.copy(),
            self.w_backward.copy(),
            self.self_loop_cost.copy(),
            self.omega_lb,
            self.omega_ub,
        )

    @property
    def num_move_edges(self) -> int:
        flags = self.dir_flags
        return int((flags != BOTH).sum() + 2 * (flags == BOTH).sum())

    @property
    def edge_count(self) -> int:
        """Total directed edges including one self-loop per vertex."""
        return self.num_move_edges + self.base.num_vertices

    def unidirectional_ratio(self) -> float:
        """Fraction of non-bridge undirected edges given exactly one direction."""
        orientable = ~self.base.bridge_mask
        total = int(orientable.sum())
        if total == 0:
            return 0.0
        return float((self.dir_flags[orientable] != BOTH).sum()) / total

    def directed_edges(self):
        """Yield (u, v, weight) for every live directed move edge."""
        edges = self.base.undirected_edges
        for i in range(len(edges)):
            u, v = int(edges[i, 0]), int(edges[i, 1])
            f = self.dir_flags[i]
            if f != BACKWARD:
                yield u, v, float(self.w_forward[i])
            if f != FORWARD:
                yield v, u, float(self.w_backward[i])

    def validate(self) -> None:
        base = self.base
        if self.dir_flags.shape != (base.num_edges,):
            raise GraphError("dir_flags length does not match edge count")
        if np.any(self.base.bridge_mask & (self.dir_flags != BOTH)):
            raise GraphError("bridge edge without both directions")
        lb, ub = self.omega_lb, self.omega_ub
        live_f = self.dir_flags != BACKWARD
        live_b = self.dir_flags != FORWARD
        for live, w in ((live_f, self.w_forward), (live_b, self.w_backward)):
            vals = w[live]
            if vals.size and (not np.all(np.isfinite(vals)) or vals.min() <= 0):
                raise GraphError("non-positive or non-finite edge weight")
            if vals.size and (vals.min() < lb - 1e-12 or vals.max() > ub + 1e-12):
                raise GraphError("edge weight outside [omega_lb, omega_ub]")
        sc = self.self_loop_cost
        if sc.shape != (base.num_vertices,):
            raise GraphError("self_loop_cost length does not match vertex count")
        if not np.all(np.isfinite(sc)) or sc.min() <= 0:
            raise GraphError("non-positive or non-finite self-loop cost")
        if sc.min() < lb - 1e-12 or sc.max() > ub + 1e-12:
            raise GraphError("self-loop cost outside [omega_lb, omega_ub]")

    def to_json_dict(self) -> dict:
        edges = []
        for i, (u, v) in enumerate(self.base.undirected_edges):
            f = int(self.dir_flags[i])
            rec = {"u": int(u), "v": int(v), "dir": _DIR_NAMES[f]}
            if f != BACKWARD:
                rec["w_forward"] = float(self.w_forward[i])
            if f != FORWARD:
                rec["w_backward"] = float(self.w_backward[i])
            edges.append(rec)
        return {
            "map_name": self.base.name,
            "height": self.base.height,
            "width": self.base.width,
            "omega_lb": self.omega_lb,
            "omega_ub": self.omega_ub,
            "vertices": [int(v) for v in self.base.vertices],
            "edges": edges,
            "self_loops": [float(c) for c in self.self_loop_cost],
        }

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_json_dict(), indent=indent, sort_keys=True)


def graphs_equal(a: MixedGuidanceGraph, b: MixedGuidanceGraph, tol: float = 0.0) -> bool:
    """Equality over flags, live weights, and self-loop costs."""
    if a.base.num_edges != b.base.num_edges or a.base.num_vertices != b.base.num_vertices:
        return False
    if not np.array_equal(a.dir_flags, b.dir_flags):
        return False
    live_f = a.dir_flags != BACKWARD
    live_b = a.dir_flags != FORWARD
    close = lambda x, y: np.allclose(x, y, rtol=0.0, atol=tol)
    return (
        close(a.w_forward[live_f], b.w_forward[live_f])
        and close(a.w_backward[live_b], b.w_backward[live_b])
        and close(a.self_loop_cost, b.self_loop_cost)
    )


def _fresh(base: BaseGraph, lb: float, ub: float) -> MixedGuidanceGraph:
    e, n = base.num_edges, base.num_vertices
    return MixedGuidanceGraph(
        base,
        np.full(e, BOTH, dtype=np.uint8),
        np.ones(e),
        np.ones(e),
        np.ones(n),
        lb,
        ub,
    )


def make_unweighted(
    base: BaseGraph, lb: float = DEFAULT_OMEGA_LB, ub: float = DEFAULT_OMEGA_UB
) -> MixedGuidanceGraph:
    """Fully bidirected graph, every weight and self-loop cost 1."""
    return _fresh(base, lb, ub)


def crisscross(
    base: BaseGraph,
    period: int,
    lb: float = DEFAULT_OMEGA_LB,
    ub: float = DEFAULT_OMEGA_UB,
) -> MixedGuidanceGraph:
    """Alternating one-way bands every ``period`` rows and columns.

    Horizontal edges in row band i run east when i is even, west otherwise;
    vertical edges in column band j run north when j is even, south otherwise,
    so period-1 bands mesh into rotating cells (a 2x2 open block becomes a
    directed 4-cycle). Bridges stay Both. Not guaranteed strongly connected
    in general; run edge-reversal repair on the result before simulating.
    """
    h, w = base.height, base.width
    if not 1 <= period <= max(1, min(h, w) // 2):
        raise GraphError(f"period {period} out of range for {h}x{w} map")
    g = _fresh(base, lb, ub)
    width = base.width
    for i, (u, v) in enumerate(base.undirected_edges):
        if base.bridge_mask[i]:
            continue
        u = int(u)
        r, c = divmod(u, width)
        if int(v) == u + 1:  # horizontal edge, row band decides
            east = (r // period) % 2 == 0
            g.dir_flags[i] = FORWARD if east else BACKWARD
        else:  # vertical edge, column band decides
            south = (c // period) % 2 == 1
            g.dir_flags[i] = FORWARD if south else BACKWARD
    return g


def crisscross_periods(base: BaseGraph) -> list[int]:
    return list(range(1, max(1, min(base.height, base.width) // 2) + 1))


def dfs_orientation(
    base: BaseGraph,
    seed: int,
    lb: float = DEFAULT_OMEGA_LB,
    ub: float = DEFAULT_OMEGA_UB,
) -> MixedGuidanceGraph:
    """Strong orientation: DFS tree edges root-to-leaf, back edges leaf-to-root.

    Bridges stay Both, which makes the result strongly connected on any
    connected base graph. The seed picks the start vertex and shuffles
    neighbor order.
    """
    rng = np.random.default_rng(seed)
    g = _fresh(base, lb, ub)
    n_edges = base.num_edges
    assigned = np.zeros(n_edges, dtype=bool)
    visited = set()
    nbr = base.neighbor_table

    start = int(base.vertices[rng.integers(len(base.vertices))])
    visited.add(start)
    stack = [(start, _shuffled_dirs(rng))]
    while stack:
        v, dirs = stack[-1]
        if dirs:
            d = dirs.pop()
            w_ = int(nbr[v, d])
            if w_ < 0:
                continue
            eid = base.edge_id(v, w_)
            if w_ not in visited:
                visited.add(w_)
                if not base.bridge_mask[eid]:
                    g.dir_flags[eid] = FORWARD if v < w_ else BACKWARD  # tree: v -> w_
                assigned[eid] = True
                stack.append((w_, _shuffled_dirs(rng)))
            elif not assigned[eid]:
                if not base.bridge_mask[eid]:
                    g.dir_flags[eid] = FORWARD if v < w_ else BACKWARD  # back: v -> w_
                assigned[eid] = True
        else:
            stack.pop()
    return g


def _shuffled_dirs(rng) -> list[int]:
    dirs = [EAST, SOUTH, WEST, NORTH]
    rng.shuffle(dirs)
    return dirs


def random_orientation(
    base: BaseGraph,
    seed: int,
    lb: float = DEFAULT_OMEGA_LB,
    ub: float = DEFAULT_OMEGA_UB,
) -> MixedGuidanceGraph:
    """Each non-bridge edge independently Forward or Backward with probability 1/2."""
    rng = np.random.default_rng(seed)
    g = _fresh(base, lb, ub)
    flips = rng.integers(0, 2, size=base.num_edges)
    orientable = ~base.bridge_mask
    g.dir_flags[orientable] = np.where(flips[orientable] == 0, FORWARD, BACKWARD).astype(np.uint8)
    return g


# ---------------------------------------------------------------------------
# Tensor encodings


def validity_masks(base: BaseGraph) -> tuple[np.ndarray, np.ndarray]:
    """(cell_mask [H,W], edge_mask [H,W,4]) marking passable cells and existing base edges."""
    h, w = base.height, base.width
    cell = np.zeros((h, w), dtype=bool)
    rr, cc = np.divmod(base.vertices, w)
    cell[rr, cc] = True
    edge = (base.neighbor_table.reshape(h, w, 4) >= 0)
    return cell, edge


def to_tensors(g: MixedGuidanceGraph) -> tuple[np.ndarray, np.ndarray]:
    """Encode as (weights [H,W,5], directions [H,W,4]); dead entries are 0."""
    base = g.base
    h, w = base.height, base.width
    weights = np.zeros((h, w, 5))
    dirs = np.zeros((h, w, 4))
    for u, v, wt in g.directed_edges():
        r, c = divmod(u, w)
        if v == u + 1:
            d = EAST
        elif v == u - 1:
            d = WEST
        elif v == u + base.width:
            d = SOUTH
        else:
            d = NORTH
        weights[r, c, d] = wt
        dirs[r, c, d] = 1.0
    rr, cc = np.divmod(base.vertices, w)
    weights[rr, cc, 4] = g.self_loop_cost
    return weights, dirs


def from_tensors(
    base: BaseGraph,
    weights: np.ndarray,
    dirs: np.ndarray,
    lb: float = DEFAULT_OMEGA_LB,
    ub: float = DEFAULT_OMEGA_UB,
) -> MixedGuidanceGraph:
    """Inverse of :func:`to_tensors` for tensors produced from a valid graph."""
    h, w = base.height, base.width
    g = _fresh(base, lb, ub)
    for i, (u, v) in enumerate(base.undirected_edges):
        u, v = int(u), int(v)
        ru, cu = divmod(u, w)
        rv, cv = divmod(v, w)
        d_fwd = EAST if v == u + 1 else SOUTH
        fwd = dirs[ru, cu, d_fwd] > 0.5
        bwd = dirs[rv, cv, (d_fwd + 2) % 4] > 0.5
        if fwd and bwd:
            g.dir_flags[i] = BOTH
        elif fwd:
            g.dir_flags[i] = FORWARD
        elif bwd:
            g.dir_flags[i] = BACKWARD
        else:
            raise GraphError(f"edge ({u},{v}) has no direction in tensor")
        if fwd:
            g.w_forward[i] = weights[ru, cu, d_fwd]
        if bwd:
            g.w_backward[i] = weights[rv, cv, (d_fwd + 2) % 4]
    rr, cc = np.divmod(base.vertices, w)
    g.self_loop_cost = np.asarray(weights[rr, cc, 4], dtype=float)
    return g


def minmax_to_bounds(values: np.ndarray, lb: float, ub: float) -> np.ndarray:
    """Min-max map onto [lb, ub]; a constant input maps to the midpoint."""
    values = np.asarray(values, dtype=float)
    lo, hi = float(values.min()), float(values.max())
    if hi - lo < 1e-12:
        return np.full(values.shape, 0.5 * (lb + ub))
    return np.clip(lb + (values - lo) * (ub - lb) / (hi - lo), lb, ub)


def decode_dependent(
    base: BaseGraph,
    dir6: np.ndarray,
    weight5: np.ndarray,
    lb: float = DEFAULT_OMEGA_LB,
    ub: float = DEFAULT_OMEGA_UB,
) -> MixedGuidanceGraph:
    """Decode dependent-representation logits plus raw weights into a graph.

    Per undirected edge the argmax over its 3 logit channels picks Forward,
    Backward, or Both (ties break to the lowest channel); channels 0-2 cover
    the east pair at each cell, 3-5 the south pair. Bridges are forced to
    Both. Weights for the surviving directed edges and the self-loops are
    min-max normalized per graph into [lb, ub].
    """
    h, w = base.height, base.width
    if dir6.shape != (h, w, 6):
        raise GraphError(f"direction tensor must be [{h},{w},6], got {dir6.shape}")
    if weight5.shape != (h, w, 5):
        raise GraphError(f"weight tensor must be [{h},{w},5], got {weight5.shape}")
    if not (np.all(np.isfinite(dir6)) and np.all(np.isfinite(weight5))):
        raise GraphError("non-finite values in decode tensors")

    g = _fresh(base, lb, ub)
    for i, (u, v) in enumerate(base.undirected_edges):
        if base.bridge_mask[i]:
            continue
        u = int(u)
        r, c = divmod(u, w)
        off = 0 if int(v) == u + 1 else 3
        logits = dir6[r, c, off : off + 3]
        g.dir_flags[i] = int(np.argmax(logits))  # ties: lowest index wins

    # Gather raw weights of live directed edges plus self-loops, normalize jointly.
    raw = []
    slots = []  # ("f"/"b", edge idx) or ("s", vertex pos)
    for i, (u, v) in enumerate(base.undirected_edges):
        u, v = int(u), int(v)
        f = g.dir_flags[i]
        ru, cu = divmod(u, w)
        rv, cv = divmod(v, w)
        d_fwd = EAST if v == u + 1 else SOUTH
        if f != BACKWARD:
            raw.append(weight5[ru, cu, d_fwd])
            slots.append(("f", i))
        if f != FORWARD:
            raw.append(weight5[rv, cv, (d_fwd + 2) % 4])
            slots.append(("b", i))
    for pos, cell in enumerate(base.vertices):
        r, c = divmod(int(cell), w)
        raw.append(weight5[r, c, 4])
        slots.append(("s", pos))

    normed = minmax_to_bounds(np.asarray(raw), lb, ub)
    for val, (kind, idx) in zip(normed, slots):
        if kind == "f":
            g.w_forward[idx] = val
        elif kind == "b":
            g.w_backward[idx] = val
        else:
            g.self_loop_cost[idx] = val
    return g


# ---------------------------------------------------------------------------
# JSON interchange


def graph_from_json_dict(data: dict, base: BaseGraph | None = None) -> MixedGuidanceGraph:
    """Rebuild a graph from its JSON form; recovers the base graph if not given."""
    if base is None:
        vertices = data.get("vertices")
        edge_pairs = np.asarray(
            [[rec["u"], rec["v"]] for rec in data["edges"]], dtype=np.int64
        ).reshape(-1, 2)
        if vertices is None:
            vertices = sorted(set(edge_pairs.ravel().tolist()))
        base = base_graph_from_edges(
            np.asarray(vertices, dtype=np.int64),
            edge_pairs,
            height=int(data.get("height", 0)),
            width=int(data.get("width", 0)),
            name=data.get("map_name", "graph"),
        )
    lb = float(data.get("omega_lb", DEFAULT_OMEGA_LB))
    ub = float(data.get("omega_ub", DEFAULT_OMEGA_UB))
    g = _fresh(base, lb, ub)
    for rec in data["edges"]:
        i = base.edge_id(int(rec["u"]), int(rec["v"]))
        flag = _DIR_VALUES[rec["dir"]]
        g.dir_flags[i] = flag
        if flag != BACKWARD:
            g.w_forward[i] = float(rec["w_forward"])
        if flag != FORWARD:
            g.w_backward[i] = float(rec["w_backward"])
    loops = data["self_loops"]
    if len(loops) != base.num_vertices:
        raise GraphError("self_loops length does not match vertex count")
    g.self_loop_cost = np.asarray(loops, dtype=float)
    g.validate()
    return g


def load_graph_json(path, base: BaseGraph | None = None) -> MixedGuidanceGraph:
    with open(path) as f:
        data = json.load(f)
    return graph_from_json_dict(data, base)


def save_graph_json(g: MixedGuidanceGraph, path) -> None:
    with open(path, "w") as f:
        f.write(g.to_json())
        f.write("\n")
