"""Strong-connectivity machinery: SCCs, condensation, edge-reversal repair.

The repair loop reverses outgoing edges of a source component of the
condensation until the graph is strongly connected. Bridges are bidirected
up front, which guarantees every source component has at least two outgoing
edges, so progress is always possible. The loop recomputes components with
scipy's compiled SCC kernel; :func:`tarjan_scc` is the pure-Python reference
used by tests and callers.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import GraphError, RepairError
from .guidance import BACKWARD, BOTH, FORWARD, MixedGuidanceGraph

# ---------------------------------------------------------------------------
# SCCs


@dataclass
class SccResult:
    component_id: np.ndarray  # per vertex, parallel to base.vertices
    count: int


def _compact_arcs(g: MixedGuidanceGraph) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Directed move arcs as (heads, tails, edge_idx) over compact vertex positions."""
    base = g.base
    vmap = np.full(base.height * base.width, -1, dtype=np.int64)
    vmap[base.vertices] = np.arange(base.num_vertices)
    u = vmap[base.undirected_edges[:, 0]]
    v = vmap[base.undirected_edges[:, 1]]
    eidx = np.arange(base.num_edges)
    fwd = g.dir_flags != BACKWARD
    bwd = g.dir_flags != FORWARD
    heads = np.concatenate([u[fwd], v[bwd]])
    tails = np.concatenate([v[fwd], u[bwd]])
    arcs_edge = np.concatenate([eidx[fwd], eidx[bwd]])
    return heads, tails, arcs_edge


def tarjan_scc(g: MixedGuidanceGraph) -> SccResult:
    """Exact SCC decomposition, iterative (safe on large maps)."""
    base = g.base
    nv = base.num_vertices
    heads, tails, _ = _compact_arcs(g)
    order = np.argsort(heads, kind="stable")
    heads_s = heads[order]
    tails_s = tails[order]
    starts = np.searchsorted(heads_s, np.arange(nv + 1))
    adj_tails = tails_s.tolist()

    UNVISITED = -1
    index = [UNVISITED] * nv
    lowlink = [0] * nv
    on_stack = [False] * nv
    comp = [UNVISITED] * nv
    scc_stack: list[int] = []
    counter = 0
    n_comp = 0

    for root in range(nv):
        if index[root] != UNVISITED:
            continue
        work = [(root, int(starts[root]))]
        index[root] = lowlink[root] = counter
        counter += 1
        scc_stack.append(root)
        on_stack[root] = True
        while work:
            v, ptr = work[-1]
            if ptr < starts[v + 1]:
                work[-1] = (v, ptr + 1)
                w_ = adj_tails[ptr]
                if index[w_] == UNVISITED:
                    index[w_] = lowlink[w_] = counter
                    counter += 1
                    scc_stack.append(w_)
                    on_stack[w_] = True
                    work.append((w_, int(starts[w_])))
                elif on_stack[w_]:
                    if index[w_] < lowlink[v]:
                        lowlink[v] = index[w_]
            else:
                work.pop()
                if work:
                    parent = work[-1][0]
                    if lowlink[v] < lowlink[parent]:
                        lowlink[parent] = lowlink[v]
                if lowlink[v] == index[v]:
                    while True:
                        w_ = scc_stack.pop()
                        on_stack[w_] = False
                        comp[w_] = n_comp
                        if w_ == v:
                            break
                    n_comp += 1
    return SccResult(np.asarray(comp, dtype=np.int64), n_comp)


def is_strongly_connected(g: MixedGuidanceGraph) -> bool:
    return tarjan_scc(g).count == 1


@dataclass
class CondensationGraph:
    num_meta: int
    meta_edges: np.ndarray  # [M, 2] deduplicated directed meta edges

    def is_dag(self) -> bool:
        if self.num_meta <= 1:
            return True
        indeg = np.zeros(self.num_meta, dtype=np.int64)
        adj: dict[int, list[int]] = {}
        for a, b in self.meta_edges:
            adj.setdefault(int(a), []).append(int(b))
            indeg[b] += 1
        queue = [i for i in range(self.num_meta) if indeg[i] == 0]
        seen = 0
        while queue:
            a = queue.pop()
            seen += 1
            for b in adj.get(a, ()):
                indeg[b] -= 1
                if indeg[b] == 0:
                    queue.append(b)
        return seen == self.num_meta


def condensation(g: MixedGuidanceGraph, scc: SccResult | None = None) -> CondensationGraph:
    scc = scc or tarjan_scc(g)
    heads, tails, _ = _compact_arcs(g)
    ch = scc.component_id[heads]
    ct = scc.component_id[tails]
    crossing = ch != ct
    pairs = np.unique(np.stack([ch[crossing], ct[crossing]], axis=1), axis=0)
    return CondensationGraph(scc.count, pairs.reshape(-1, 2))


# ---------------------------------------------------------------------------
# Edge Reversal Search


@dataclass
class ErsStats:
    reversed_count: int = 0
    iterations: int = 0
    elapsed_ms: float = 0.0
    ops: int = 0  # elements touched; linear in iterations * (V + E)
    min_out_edges: int | None = None  # smallest |E_out| seen at any source pick


def ers_repair(
    g: MixedGuidanceGraph,
    bridge_mask: np.ndarray | None = None,
    seed: int = 0,
) -> tuple[MixedGuidanceGraph, int]:
    """Repair to strong connectivity by reversing source-component out-edges.

    Returns the repaired graph (input untouched) and the total number of edge
    reversals performed. Weights travel with reversed edges.
    """
    out, stats = ers_repair_detailed(g, bridge_mask, seed)
    return out, stats.reversed_count


def ers_repair_detailed(
    g: MixedGuidanceGraph,
    bridge_mask: np.ndarray | None = None,
    seed: int = 0,
) -> tuple[MixedGuidanceGraph, ErsStats]:
    t0 = time.perf_counter()
    base = g.base
    if bridge_mask is None:
        bridge_mask = base.bridge_mask
    out = g.copy()
    flags = out.dir_flags

    # Bridges must carry both directions before anything else.
    fix = bridge_mask & (flags != BOTH)
    if np.any(fix):
        fwd_only = fix & (flags == FORWARD)
        bwd_only = fix & (flags == BACKWARD)
        out.w_backward[fwd_only] = out.w_forward[fwd_only]
        out.w_forward[bwd_only] = out.w_backward[bwd_only]
        flags[fix] = BOTH

    nv = base.num_vertices
    vmap = np.full(base.height * base.width, -1, dtype=np.int64)
    vmap[base.vertices] = np.arange(nv)
    eu = vmap[base.undirected_edges[:, 0]]
    ev = vmap[base.undirected_edges[:, 1]]
    eidx = np.arange(base.num_edges)
    rng = np.random.default_rng(seed)
    stats = ErsStats()
    cap = max(100, 10 * base.num_edges)

    while True:
        fwd = flags != BACKWARD
        bwd = flags != FORWARD
        heads = np.concatenate([eu[fwd], ev[bwd]])
        tails = np.concatenate([ev[fwd], eu[bwd]])
        arcs_edge = np.concatenate([eidx[fwd], eidx[bwd]])
        n_arcs = len(heads)
        graph = csr_matrix(
            (np.ones(n_arcs, dtype=np.int8), (heads, tails)), shape=(nv, nv)
        )
        n_comp, labels = connected_components(graph, directed=True, connection="strong")
        stats.ops += n_arcs + nv
        if n_comp <= 1:
            break
        stats.iterations += 1
        if stats.iterations > cap:
            raise RepairError(
                f"edge reversal did not converge within {cap} iterations"
            )

        ch = labels[heads]
        ct = labels[tails]
        crossing = ch != ct
        indeg = np.bincount(ct[crossing], minlength=n_comp)
        sources = np.flatnonzero(indeg == 0)
        # Deterministic pick: the source component containing the smallest cell id.
        min_pos = np.full(n_comp, nv, dtype=np.int64)
        np.minimum.at(min_pos, labels, np.arange(nv))
        src = sources[np.argmin(min_pos[sources])]

        out_arcs = crossing & (ch == src)
        out_edges = np.sort(arcs_edge[out_arcs])
        if stats.min_out_edges is None or len(out_edges) < stats.min_out_edges:
            stats.min_out_edges = len(out_edges)
        k = len(out_edges) // 2
        if k == 0:
            raise RepairError("source component with fewer than two outgoing edges")
        chosen = rng.choice(out_edges, size=k, replace=False)
        sel_f = chosen[flags[chosen] == FORWARD]
        sel_b = chosen[flags[chosen] == BACKWARD]
        out.w_backward[sel_f] = out.w_forward[sel_f]
        out.w_forward[sel_b] = out.w_backward[sel_b]
        flags[sel_f] = BACKWARD
        flags[sel_b] = FORWARD
        stats.reversed_count += k
        stats.ops += int(out_arcs.sum())

    stats.elapsed_ms = (time.perf_counter() - t0) * 1000.0
    return out, stats


# ---------------------------------------------------------------------------
# Minimum-reversal oracle (exhaustive, tiny graphs only)

_MAX_ORACLE_EDGES = 16


class OracleIndex:
    """Enumerates all orientations of a small graph's free edges once, then
    answers minimum-reversal queries by Hamming distance to the strongly
    connected set."""

    def __init__(self, g: MixedGuidanceGraph):
        base = g.base
        self.base = base
        free = np.flatnonzero((~base.bridge_mask) & (g.dir_flags != BOTH))
        if len(free) > _MAX_ORACLE_EDGES:
            raise GraphError(
                f"oracle supports at most {_MAX_ORACLE_EDGES} orientable edges, got {len(free)}"
            )
        self.free_edges = free
        nv = base.num_vertices
        vmap = {int(c): i for i, c in enumerate(base.vertices)}
        free_set = set(free.tolist())
        fixed_out = [0] * nv
        fixed_in = [0] * nv
        for i, (u, v) in enumerate(base.undirected_edges):
            cu, cv = vmap[int(u)], vmap[int(v)]
            if i in free_set:
                continue
            flag = g.dir_flags[i] if not base.bridge_mask[i] else BOTH
            if flag != BACKWARD:
                fixed_out[cu] |= 1 << cv
                fixed_in[cv] |= 1 << cu
            if flag != FORWARD:
                fixed_out[cv] |= 1 << cu
                fixed_in[cu] |= 1 << cv
        pairs = [(vmap[int(base.undirected_edges[e, 0])], vmap[int(base.undirected_edges[e, 1])]) for e in free]

        sc_masks = []
        k = len(free)
        for mask in range(1 << k):
            adj_out = fixed_out.copy()
            adj_in = fixed_in.copy()
            for bit, (cu, cv) in enumerate(pairs):
                if (mask >> bit) & 1:  # backward: v -> u
                    adj_out[cv] |= 1 << cu
                    adj_in[cu] |= 1 << cv
                else:  # forward: u -> v
                    adj_out[cu] |= 1 << cv
                    adj_in[cv] |= 1 << cu
            if _bitset_strong(adj_out, adj_in, nv):
                sc_masks.append(mask)
        self.sc_masks = np.asarray(sc_masks, dtype=np.uint32)

    def orientation_mask(self, g: MixedGuidanceGraph) -> int:
        mask = 0
        for bit, e in enumerate(self.free_edges):
            flag = g.dir_flags[e]
            if flag == BOTH:
                raise GraphError("oracle query requires unidirectional free edges")
            if flag == BACKWARD:
                mask |= 1 << bit
        return mask

    def min_reversals(self, g: MixedGuidanceGraph) -> int:
        if len(self.sc_masks) == 0:
            raise GraphError("no strongly connected orientation exists")
        mask = np.uint32(self.orientation_mask(g))
        return int(np.bitwise_count(self.sc_masks ^ mask).min())


def _bitset_strong(adj_out: list[int], adj_in: list[int], nv: int) -> bool:
    full = (1 << nv) - 1
    for adj in (adj_out, adj_in):
        reach = 1
        frontier = 1
        while frontier:
            nxt = 0
            m = frontier
            while m:
                low = m & -m
                nxt |= adj[low.bit_length() - 1]
                m ^= low
            frontier = nxt & ~reach
            reach |= frontier
        if reach != full:
            return False
    return True


def min_reversal_oracle(g: MixedGuidanceGraph) -> int:
    """Minimum direction changes to reach strong connectivity (exhaustive)."""
    return OracleIndex(g).min_reversals(g)
