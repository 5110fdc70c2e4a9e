"""Lifelong MAPF simulator under the rotational motion model.

Agents occupy a cell and face one of four headings; per timestep each agent
moves forward along an existing directed guidance edge, rotates 90 degrees,
or waits. One step of all agents is planned with PIBT: agents are processed
in priority order, each tries its actions ranked by one-step lookahead cost
(edge or self-loop weight plus cost-to-go of the successor state), and
conflicts are resolved through priority inheritance with backtracking.
Rotations and waits reserve the agent's current cell, so the only vertex and
swap conflicts possible come from forward moves, and both are checked.

Everything is deterministic given (map, graph, config).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from heapq import heappop, heappush

import numpy as np

from .guidance import MixedGuidanceGraph, crisscross, make_unweighted, to_tensors
from .maps import GridMap
from .rng import substream, substream_seed

INF = math.inf

FORWARD_ACT, ROT_CW, ROT_CCW, WAIT = 0, 1, 2, 3

#: traffic channels: move east/south/west/north, wait, rotate cw, rotate ccw
TRAFFIC_CHANNELS = 7

PRIORITY_ELAPSED = "elapsed"
PRIORITY_DIST = "dist"


@dataclass
class SimConfig:
    num_agents: int
    horizon: int
    seed: int = 0
    priority_mode: str = PRIORITY_DIST
    num_runs: int = 1

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.priority_mode not in (PRIORITY_ELAPSED, PRIORITY_DIST):
            raise ValueError(f"unknown priority mode {self.priority_mode!r}")


@dataclass
class AgentState:
    vertex: int
    orientation: int  # 0=E 1=S 2=W 3=N
    goal: int
    elapsed: int = 0


@dataclass
class SimOutcome:
    throughput: float
    wait_ratio: float
    rotate_ratio: float
    traffic: np.ndarray  # [H, W, 7] action counts
    success: bool
    goals_reached: int
    num_agents: int
    horizon: int
    trace: list | None = None


class SimTables:
    """Flat per-graph lookup tables for the hot loop (plain lists, not numpy)."""

    def __init__(self, g: MixedGuidanceGraph):
        base = g.base
        n = base.height * base.width
        self.n_cells = n
        self.width = base.width
        self.height = base.height
        self.nbr = base.neighbor_table.ravel().tolist()
        move_cost = [INF] * (4 * n)
        width = base.width
        for u, v, wt in g.directed_edges():
            if v == u + 1:
                d = 0
            elif v == u - 1:
                d = 2
            elif v == u + width:
                d = 1
            else:
                d = 3
            move_cost[(u << 2) + d] = wt
        self.move_cost = move_cost
        self_cost = [INF] * n
        for pos, cell in enumerate(base.vertices):
            self_cost[int(cell)] = float(g.self_loop_cost[pos])
        self.self_cost = self_cost
        self.passable_cells = [int(c) for c in base.vertices]


def compute_cost_to_go(tables: SimTables, goal: int) -> list[float]:
    """Weighted shortest-path cost from every (vertex, orientation) state to the goal.

    Backward Dijkstra on the state graph; any orientation at the goal costs 0.
    """
    n4 = tables.n_cells * 4
    dist = [INF] * n4
    nbr = tables.nbr
    move_cost = tables.move_cost
    self_cost = tables.self_cost
    heap = []
    g4 = goal << 2
    for o in range(4):
        dist[g4 + o] = 0.0
        heap.append((0.0, g4 + o))
    while heap:
        d, s = heappop(heap)
        if d > dist[s]:
            continue
        v = s >> 2
        o = s & 3
        b4 = s & ~3
        sc = self_cost[v]
        nd = d + sc
        for so in (b4 | ((o + 1) & 3), b4 | ((o + 3) & 3)):
            if nd < dist[so]:
                dist[so] = nd
                heappush(heap, (nd, so))
        w_ = nbr[b4 + ((o + 2) & 3)]
        if w_ >= 0:
            mc = move_cost[(w_ << 2) + o]
            if mc != INF:
                so = (w_ << 2) + o
                nd = d + mc
                if nd < dist[so]:
                    dist[so] = nd
                    heappush(heap, (nd, so))
    return dist


class CostToGoCache:
    """Per-graph cache of cost-to-go tables keyed by goal cell."""

    def __init__(self, tables: SimTables):
        self.tables = tables
        self._cache: dict[int, list[float]] = {}

    def get(self, goal: int) -> list[float]:
        t = self._cache.get(goal)
        if t is None:
            t = compute_cost_to_go(self.tables, goal)
            self._cache[goal] = t
        return t


class ConflictError(AssertionError):
    """Internal audit failure: a planned step violated a conflict rule."""


def pibt_plan(
    pos: list[int],
    ori: list[int],
    ctgs: list[list[float]],
    tables: SimTables,
    order: list[int],
    occ_now: list[int],
    occ_nxt: list[int],
) -> tuple[list[int], list[int]]:
    """One PIBT planning pass; returns (action, target vertex) per agent.

    Agents plan in ``order``. An unpushed agent ranks the four actions by
    one-step lookahead (action cost plus cost-to-go of the successor state).
    A pushed agent, whose cell is already claimed by a higher-priority mover,
    must vacate: it ranks its live exit directions by full route cost
    (rotations needed, edge weight, cost-to-go from the neighbor) and either
    moves forward or commits the first rotation toward the best exit. A
    rotation keeps the cell occupied, so the pusher backtracks this step and
    retries later; because the exit ranking is static the pushed agent keeps
    rotating the same way and clears the cell within two steps.

    ``occ_now``/``occ_nxt`` are scratch buffers of size n_cells filled with -1;
    they are restored to -1 before returning.
    """
    n_agents = len(pos)
    nbr = tables.nbr
    move_cost = tables.move_cost
    self_cost = tables.self_cost
    act = [-1] * n_agents
    tgt = [-1] * n_agents
    for i in range(n_agents):
        occ_now[pos[i]] = i

    def plan(i: int, pushed: bool) -> bool:
        v = pos[i]
        o = ori[i]
        b4 = v << 2
        ctg = ctgs[i]
        sc = self_cost[v]

        if not pushed:
            cands = [
                (sc + ctg[b4 | ((o + 1) & 3)], 1, v),
                (sc + ctg[b4 | ((o + 3) & 3)], 2, v),
                (sc + ctg[b4 | o], 3, v),
            ]
            u = nbr[b4 + o]
            if u >= 0:
                mc = move_cost[b4 + o]
                if mc != INF:
                    cands.append((mc + ctg[(u << 2) | o], 0, u))
            cands.sort()
            for _, rank, u in cands:
                if occ_nxt[u] != -1:
                    continue
                j = occ_now[u]
                if rank == 0 and j != -1 and tgt[j] == v:
                    continue  # head-on swap
                act[i] = rank
                tgt[i] = u
                occ_nxt[u] = i
                if j != -1 and j != i and act[j] == -1:
                    if not plan(j, True):
                        # j could not vacate and holds its own cell now
                        act[i] = -1
                        tgt[i] = -1
                        continue
                return True
            # Own cell reserved by a mover and every action blocked: hold the
            # cell with a wait; the agent that claimed it backtracks.
            act[i] = WAIT
            tgt[i] = v
            occ_nxt[v] = i
            return False

        # Pushed: rank live exit directions by full route cost.
        exits = []
        for d in range(4):
            u = nbr[b4 + d]
            if u < 0:
                continue
            mc = move_cost[b4 + d]
            if mc == INF:
                continue
            turns = (d - o) & 3
            rot_steps = 1 if turns != 2 else 2
            if turns == 0:
                first = 0
                cost = mc + ctg[(u << 2) | d]
            else:
                first = 1 if turns != 3 else 2  # cw unless a single ccw turn
                cost = rot_steps * sc + mc + ctg[(u << 2) | d]
            exits.append((cost, first, d, u))
        exits.sort()
        for _, first, d, u in exits:
            j = occ_now[u]
            if j != -1 and tgt[j] == v:
                continue  # that neighbor is moving into this cell
            if first == 0:
                if occ_nxt[u] != -1:
                    continue
                act[i] = 0
                tgt[i] = u
                occ_nxt[u] = i
                if j != -1 and j != i and act[j] == -1:
                    if not plan(j, True):
                        act[i] = -1
                        tgt[i] = -1
                        continue
                return True
            # Start turning toward the exit; cell stays occupied this step.
            act[i] = first
            tgt[i] = v
            occ_nxt[v] = i
            return False
        act[i] = WAIT
        tgt[i] = v
        occ_nxt[v] = i
        return False

    for i in order:
        if act[i] == -1:
            plan(i, False)

    for i in range(n_agents):
        occ_now[pos[i]] = -1
        occ_nxt[tgt[i]] = -1
    return act, tgt


class Simulation:
    """Stepwise lifelong simulation with explicit initial state."""

    def __init__(
        self,
        g: MixedGuidanceGraph,
        positions: list[int],
        orientations: list[int],
        goals: list[int],
        seed: int = 0,
        priority_mode: str = PRIORITY_DIST,
        ctg_cache: CostToGoCache | None = None,
        tables: SimTables | None = None,
        audit: bool = False,
    ):
        if len(set(positions)) != len(positions):
            raise ValueError("agents must start at distinct vertices")
        self.g = g
        self.tables = tables or SimTables(g)
        self.ctg_cache = ctg_cache or CostToGoCache(self.tables)
        self.pos = list(positions)
        self.ori = list(orientations)
        self.goal = list(goals)
        self.n_agents = len(positions)
        self.elapsed = [0] * self.n_agents
        self.priority_mode = priority_mode
        self.audit = audit
        self.rng = np.random.default_rng(seed)
        self._ctgs = [self.ctg_cache.get(go) for go in self.goal]
        n = self.tables.n_cells
        self._occ_now = [-1] * n
        self._occ_nxt = [-1] * n
        self.traffic = [0] * (n * TRAFFIC_CHANNELS)
        self.goals_reached = 0
        self.wait_count = 0
        self.rotate_count = 0
        self.steps_done = 0
        self._passable = self.tables.passable_cells

    def agent_states(self) -> list[AgentState]:
        return [
            AgentState(self.pos[i], self.ori[i], self.goal[i], self.elapsed[i])
            for i in range(self.n_agents)
        ]

    def _order(self) -> list[int]:
        idx = range(self.n_agents)
        if self.priority_mode == PRIORITY_ELAPSED:
            elapsed = self.elapsed
            return sorted(idx, key=lambda i: (-elapsed[i], i))
        pos, ori, ctgs = self.pos, self.ori, self._ctgs
        return sorted(idx, key=lambda i: (ctgs[i][(pos[i] << 2) | ori[i]], i))

    def _sample_goal(self, vertex: int) -> int:
        cells = self._passable
        while True:
            goal = cells[int(self.rng.integers(len(cells)))]
            if goal != vertex:
                return goal

    def step(self) -> list[int]:
        order = self._order()
        act, tgt = pibt_plan(
            self.pos, self.ori, self._ctgs, self.tables, order, self._occ_now, self._occ_nxt
        )
        if self.audit:
            self._audit_step(act, tgt)
        traffic = self.traffic
        for i in range(self.n_agents):
            a = act[i]
            v = self.pos[i]
            if a == FORWARD_ACT:
                traffic[v * TRAFFIC_CHANNELS + self.ori[i]] += 1
                self.pos[i] = tgt[i]
            elif a == ROT_CW:
                traffic[v * TRAFFIC_CHANNELS + 5] += 1
                self.ori[i] = (self.ori[i] + 1) & 3
                self.rotate_count += 1
            elif a == ROT_CCW:
                traffic[v * TRAFFIC_CHANNELS + 6] += 1
                self.ori[i] = (self.ori[i] + 3) & 3
                self.rotate_count += 1
            else:
                traffic[v * TRAFFIC_CHANNELS + 4] += 1
                self.wait_count += 1
            if self.pos[i] == self.goal[i]:
                self.goals_reached += 1
                self.elapsed[i] = 0
                self.goal[i] = self._sample_goal(self.pos[i])
                self._ctgs[i] = self.ctg_cache.get(self.goal[i])
            else:
                self.elapsed[i] += 1
        self.steps_done += 1
        return act

    def _audit_step(self, act: list[int], tgt: list[int]) -> None:
        if len(set(tgt)) != self.n_agents:
            raise ConflictError(f"vertex conflict at step {self.steps_done}")
        moves = {}
        for i in range(self.n_agents):
            if act[i] == FORWARD_ACT:
                moves[(self.pos[i], tgt[i])] = i
        for (a, b) in moves:
            if (b, a) in moves:
                raise ConflictError(f"swap conflict on edge ({a},{b}) at step {self.steps_done}")

    def run(self, horizon: int, collect_trace: bool = False) -> SimOutcome:
        trace = [] if collect_trace else None
        for _ in range(horizon):
            before_goals = self.goals_reached
            before_wait = self.wait_count
            before_rot = self.rotate_count
            self.step()
            if trace is not None:
                trace.append(
                    {
                        "t": self.steps_done,
                        "goals": self.goals_reached - before_goals,
                        "waits": self.wait_count - before_wait,
                        "rotations": self.rotate_count - before_rot,
                    }
                )
        return self.outcome(trace)

    def outcome(self, trace=None) -> SimOutcome:
        total = self.n_agents * self.steps_done
        h, w = self.tables.height, self.tables.width
        traffic = np.asarray(self.traffic, dtype=float).reshape(h, w, TRAFFIC_CHANNELS)
        return SimOutcome(
            throughput=self.goals_reached / max(1, self.steps_done),
            wait_ratio=self.wait_count / max(1, total),
            rotate_ratio=self.rotate_count / max(1, total),
            traffic=traffic,
            success=True,
            goals_reached=self.goals_reached,
            num_agents=self.n_agents,
            horizon=self.steps_done,
            trace=trace,
        )


def seeded_simulation(
    g: MixedGuidanceGraph,
    cfg: SimConfig,
    ctg_cache: CostToGoCache | None = None,
    tables: SimTables | None = None,
    audit: bool = False,
) -> Simulation:
    """Build a simulation with seeded agent placement, headings, and goals."""
    tables = tables or SimTables(g)
    cells = tables.passable_cells
    if cfg.num_agents > len(cells):
        raise ValueError(f"{cfg.num_agents} agents exceed {len(cells)} passable cells")
    rng = substream(cfg.seed, "placement")
    chosen = rng.choice(len(cells), size=cfg.num_agents, replace=False)
    positions = [cells[int(k)] for k in chosen]
    orientations = [int(o) for o in rng.integers(0, 4, size=cfg.num_agents)]
    sim = Simulation(
        g,
        positions,
        orientations,
        goals=[positions[0]] * cfg.num_agents,  # placeholder, resampled below
        seed=substream_seed(cfg.seed, "goals"),
        priority_mode=cfg.priority_mode,
        ctg_cache=ctg_cache,
        tables=tables,
        audit=audit,
    )
    for i in range(cfg.num_agents):
        sim.goal[i] = sim._sample_goal(positions[i])
        sim._ctgs[i] = sim.ctg_cache.get(sim.goal[i])
    return sim


def run_simulation(
    grid: GridMap | None,
    g: MixedGuidanceGraph,
    cfg: SimConfig,
    ctg_cache: CostToGoCache | None = None,
    tables: SimTables | None = None,
    audit: bool = False,
    collect_trace: bool = False,
) -> SimOutcome:
    """One seeded lifelong simulation; deterministic given (map, graph, config)."""
    sim = seeded_simulation(g, cfg, ctg_cache=ctg_cache, tables=tables, audit=audit)
    return sim.run(cfg.horizon, collect_trace=collect_trace)


def run_replicas(
    g: MixedGuidanceGraph,
    cfg: SimConfig,
    audit: bool = False,
) -> list[SimOutcome]:
    """cfg.num_runs simulations with per-replica seed substreams, shared caches."""
    tables = SimTables(g)
    cache = CostToGoCache(tables)
    outcomes = []
    for r in range(cfg.num_runs):
        rcfg = SimConfig(
            cfg.num_agents,
            cfg.horizon,
            seed=substream_seed(cfg.seed, "replica", r),
            priority_mode=cfg.priority_mode,
            num_runs=1,
        )
        outcomes.append(run_simulation(None, g, rcfg, ctg_cache=cache, tables=tables, audit=audit))
    return outcomes


def mean_throughput(outcomes: list[SimOutcome]) -> float:
    return float(np.mean([o.throughput for o in outcomes]))


# ---------------------------------------------------------------------------
# Traffic patterns


@dataclass
class TrafficPatterns:
    """Observed traffic plus the tensor encodings of the two seed graphs."""

    traffic: np.ndarray  # [H, W, 2 * 7 * n_obs], per-simulation counts / (N_a * T)
    unweighted_tensors: tuple[np.ndarray, np.ndarray]  # ([H,W,5], [H,W,4])
    crisscross_tensors: tuple[np.ndarray, np.ndarray]
    n_obs: int


def collect_traffic_patterns(
    grid: GridMap | None,
    base,
    n_obs: int,
    seed: int,
    num_agents: int,
    horizon: int,
    priority_mode: str = PRIORITY_DIST,
) -> TrafficPatterns:
    """Traffic from n_obs runs each on the unweighted graph and on the
    repaired period-1 crisscross, normalized per simulation by N_a * T."""
    from .connectivity import ers_repair

    if n_obs < 1:
        raise ValueError("n_obs must be >= 1")
    g_unw = make_unweighted(base)
    g_cc, _ = ers_repair(crisscross(base, 1), seed=substream_seed(seed, "traffic-repair"))
    chunks = []
    for gi, g in enumerate((g_unw, g_cc)):
        tables = SimTables(g)
        cache = CostToGoCache(tables)
        for oi in range(n_obs):
            cfg = SimConfig(
                num_agents,
                horizon,
                seed=substream_seed(seed, "traffic", gi, oi),
                priority_mode=priority_mode,
            )
            outcome = run_simulation(None, g, cfg, ctg_cache=cache, tables=tables)
            chunks.append(outcome.traffic / (num_agents * horizon))
    return TrafficPatterns(
        traffic=np.concatenate(chunks, axis=2),
        unweighted_tensors=to_tensors(g_unw),
        crisscross_tensors=to_tensors(g_cc),
        n_obs=n_obs,
    )
