"""Probabilistic roadmaps and the two from-scratch subproblem solvers.

``build_prm``/``query`` work in any robot space (single or composite).
``decoupled_prm_solve`` plans robots one at a time in index order and
treats already-planned robots as moving obstacles via a time-expanded
search over the roadmap (waiting allowed).  ``coupled_prm_solve`` plans
directly in the composite space, which guarantees intra-group validity at
the cost of dimensionality.
"""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from . import cspace
from .cspace import RobotSpace, single_space
from .geometry import Environment, body_points, points_collide_batch
from .paths import (
    TimedPath,
    discretize,
    discretize_composite,
    pad_group,
    pad_to,
    paths_valid,
    substep_series,
)


class ConstructionError(RuntimeError):
    """Raised when a roadmap cannot be built (over-constrained space)."""


class TimeoutExceeded(Exception):
    """Cooperative deadline signal; callers convert it to a failure result."""


def check_deadline(deadline: Optional[float]) -> None:
    if deadline is not None and time.perf_counter() > deadline:
        raise TimeoutExceeded


@dataclass(frozen=True)
class PrmParams:
    num_samples: int = 200
    k_neighbors: int = 8
    edge_step: Optional[float] = None  # None: half the smallest footprint
    seed: int = 0

    def __post_init__(self):
        if self.num_samples <= 0 or self.k_neighbors <= 0:
            raise ValueError("num_samples and k_neighbors must be positive")
        if self.edge_step is not None and self.edge_step <= 0:
            raise ValueError("edge_step must be positive")

    def with_seed(self, seed: int) -> "PrmParams":
        return replace(self, seed=int(seed))


@dataclass(eq=False)
class Roadmap:
    space: RobotSpace
    env: Environment
    vertices: np.ndarray  # (n, total_dof)
    adjacency: list  # adjacency[i] = [(j, weight), ...]
    edge_step: float
    k_neighbors: int


def _resolve_step(space: RobotSpace, params: PrmParams) -> float:
    return params.edge_step if params.edge_step is not None else cspace.default_step(space.models)


def build_prm(space: RobotSpace, env: Environment, params: PrmParams, deadline: Optional[float] = None) -> Roadmap:
    """Sample valid vertices and connect k-nearest neighbours with valid edges."""
    rng = np.random.default_rng(params.seed)
    step = _resolve_step(space, params)
    want = params.num_samples
    vertices = []
    attempts = 0
    budget = 100 * want
    while sum(len(v) for v in vertices) < want:
        check_deadline(deadline)
        remaining = want - sum(len(v) for v in vertices)
        batch = max(remaining * 2, 32)
        if attempts >= budget:
            raise ConstructionError(
                f"could not find {want} valid samples in {budget} attempts"
            )
        batch = min(batch, budget - attempts)
        cand = cspace.flat_sample(space, rng, batch)
        attempts += batch
        ok = cspace.flat_valid(space, cand, env)
        if ok.any():
            vertices.append(cand[ok])
    verts = np.concatenate(vertices)[:want]

    k = min(params.k_neighbors, want - 1)
    adjacency = [[] for _ in range(want)]
    if k > 0:
        candidates = set()
        for i in range(want):
            d = cspace.flat_dist(space, verts, verts[i])
            order = np.argsort(d, kind="stable")
            picked = 0
            for j in order:
                j = int(j)
                if j == i:
                    continue
                candidates.add((min(i, j), max(i, j)))
                picked += 1
                if picked >= k:
                    break
        for n_checked, (i, j) in enumerate(sorted(candidates)):
            if n_checked % 256 == 0:
                check_deadline(deadline)
            if cspace.flat_edge_valid(space, verts[i], verts[j], env, step):
                w = float(cspace.flat_dist(space, verts[i], verts[j]))
                adjacency[i].append((j, w))
                adjacency[j].append((i, w))
    for nbrs in adjacency:
        nbrs.sort()
    return Roadmap(space, env, verts, adjacency, step, params.k_neighbors)


def _as_flat(space: RobotSpace, q) -> np.ndarray:
    if isinstance(q, cspace.CompositeConfiguration):
        return cspace.flatten(q)
    if isinstance(q, cspace.Configuration):
        return np.asarray(q.values, dtype=float)
    arr = np.asarray(q, dtype=float)
    if arr.shape != (space.total_dof,):
        raise ValueError(f"expected {space.total_dof} values, got shape {arr.shape}")
    return arr


def _nearest_connections(rm: Roadmap, q: np.ndarray) -> list:
    d = cspace.flat_dist(rm.space, rm.vertices, q)
    order = np.argsort(d, kind="stable")
    out = []
    for j in order[: max(rm.k_neighbors * 3, rm.k_neighbors)]:
        j = int(j)
        if len(out) >= rm.k_neighbors:
            break
        if cspace.flat_edge_valid(rm.space, q, rm.vertices[j], rm.env, rm.edge_step):
            out.append((j, float(d[j])))
    return out


def _dijkstra(n_nodes: int, adj, source: int, target: int) -> Optional[list]:
    dist = {source: 0.0}
    prev = {}
    heap = [(0.0, source)]
    done = set()
    while heap:
        d, u = heapq.heappop(heap)
        if u in done:
            continue
        if u == target:
            seq = [u]
            while seq[-1] != source:
                seq.append(prev[seq[-1]])
            return seq[::-1]
        done.add(u)
        for v, w in adj(u):
            nd = d + w
            if nd < dist.get(v, math.inf):
                dist[v] = nd
                prev[v] = u
                heapq.heappush(heap, (nd, v))
    return None


def query(rm: Roadmap, start, goal) -> Optional[np.ndarray]:
    """Shortest valid waypoint sequence from start to goal, or None.

    Start and goal are connected to their nearest vertices (plus directly
    to each other when that edge is valid) and the minimum-distance route
    is returned as configuration rows.  Invalid endpoints raise.
    """
    s = _as_flat(rm.space, start)
    g = _as_flat(rm.space, goal)
    for name, q in (("start", s), ("goal", g)):
        if not bool(cspace.flat_valid(rm.space, q[None, :], rm.env)[0]):
            raise ValueError(f"{name} configuration is invalid in this space")
    if float(cspace.flat_dist(rm.space, s, g)) < 1e-12:
        return s[None, :].copy()
    if cspace.flat_edge_valid(rm.space, s, g, rm.env, rm.edge_step):
        return np.stack([s, g])
    n = len(rm.vertices)
    s_id, g_id = n, n + 1
    s_conn = _nearest_connections(rm, s)
    g_conn = _nearest_connections(rm, g)
    if not s_conn or not g_conn:
        return None
    extra = {s_id: s_conn, g_id: g_conn}
    back = {}
    for j, w in g_conn:
        back.setdefault(j, []).append((g_id, w))
    for j, w in s_conn:
        back.setdefault(j, []).append((s_id, w))

    def adj(u):
        if u in extra:
            return extra[u]
        return rm.adjacency[u] + back.get(u, [])

    node_seq = _dijkstra(n + 2, adj, s_id, g_id)
    if node_seq is None:
        return None
    rows = [s if u == s_id else g if u == g_id else rm.vertices[u] for u in node_seq]
    return np.stack(rows)


def _static_plan(
    space: RobotSpace,
    env: Environment,
    start: np.ndarray,
    goal: np.ndarray,
    params: PrmParams,
    deadline: Optional[float] = None,
) -> Optional[np.ndarray]:
    """Direct edge when possible, otherwise PRM build plus query."""
    step = _resolve_step(space, params)
    if float(cspace.flat_dist(space, start, goal)) < 1e-12:
        return start[None, :].copy()
    if cspace.flat_edge_valid(space, start, goal, env, step):
        return np.stack([start, goal])
    try:
        rm = build_prm(space, env, params, deadline)
    except ConstructionError:
        return None
    return query(rm, start, goal)


# ---------------------------------------------------------------------------
# decoupled (prioritized) solving with moving obstacles


class _MoverSet:
    """Sub-step body geometry of already-planned robots on a shared clock."""

    def __init__(self, paths: Sequence[TimedPath], models, sub_steps: int):
        self.sub = sub_steps
        self.horizon = max(p.horizon for p in paths)
        self.models = list(models)
        self.pts = []
        for p, m in zip(paths, models):
            series = substep_series(pad_to(p, self.horizon), m, sub_steps)
            self.pts.append(body_points(m, series))
        self.last_index = self.horizon * sub_steps

    def blocked(self, model, my_pts: np.ndarray, sub_lo: int, sub_hi: int) -> bool:
        """True if my body points (one row per sub-time in [sub_lo, sub_hi]) hit any mover."""
        idx = np.minimum(np.arange(sub_lo, sub_hi + 1), self.last_index)
        for om, op in zip(self.models, self.pts):
            if points_collide_batch(model, my_pts, om, op[idx]).any():
                return True
        return False

    def static_blocked_profile(self, model, pts_row: np.ndarray) -> np.ndarray:
        """Collision mask over all mover sub-times for one static body."""
        mask = np.zeros(self.last_index + 1, dtype=bool)
        for om, op in zip(self.models, self.pts):
            mask |= points_collide_batch(model, np.broadcast_to(pts_row, op.shape[:1] + pts_row.shape), om, op)
        return mask


def _timed_plan(
    space: RobotSpace,
    env: Environment,
    start: np.ndarray,
    goal: np.ndarray,
    params: PrmParams,
    movers: _MoverSet,
    arc_step: float,
    sub_steps: int,
    max_pops: int = 200_000,
    deadline: Optional[float] = None,
) -> Optional[TimedPath]:
    """Time-expanded A* over the roadmap against moving obstacles."""
    model = space.models[0]
    robot_index = space.indices[0]
    if not bool(cspace.flat_valid(space, start[None, :], env)[0]):
        return None
    if not bool(cspace.flat_valid(space, goal[None, :], env)[0]):
        return None
    try:
        rm = build_prm(space, env, params, deadline)
    except ConstructionError:
        return None
    n = len(rm.vertices)
    s_id, g_id = n, n + 1
    nodes = np.concatenate([rm.vertices, start[None, :], goal[None, :]])
    conn_s = _nearest_connections(rm, start)
    conn_g = _nearest_connections(rm, goal)
    direct = cspace.flat_edge_valid(rm.space, start, goal, rm.env, rm.edge_step)
    adj = {i: list(rm.adjacency[i]) for i in range(n)}
    adj[s_id] = list(conn_s)
    adj[g_id] = []
    for j, w in conn_g:
        adj.setdefault(j, []).append((g_id, w))
    if direct:
        adj[s_id].append((g_id, float(cspace.flat_dist(space, start, goal))))

    node_pts = body_points(model, nodes)
    goal_profile = movers.static_blocked_profile(model, node_pts[g_id])
    blocked_idx = np.nonzero(goal_profile)[0]
    goal_clear_sub = int(blocked_idx[-1]) + 1 if len(blocked_idx) else 0
    goal_clear_t = (goal_clear_sub + sub_steps - 1) // sub_steps

    est = int(math.ceil(float(cspace.flat_dist(space, start, goal)) / arc_step))
    t_max = movers.horizon + 4 * max(est, 10) + 16
    h_all = np.ceil(cspace.flat_dist(space, nodes, goal) / arc_step - 1e-9).astype(int)

    sub_cache = {}

    def edge_motion(u, v, w):
        key = (u, v)
        if key not in sub_cache:
            m = max(1, int(math.ceil(w / arc_step - 1e-9)))
            fr = np.linspace(0.0, 1.0, m * sub_steps + 1)
            pts = cspace.flat_interp(space, nodes[u], nodes[v], fr)
            sub_cache[key] = (m, body_points(model, pts), pts[::sub_steps])
        return sub_cache[key]

    if movers.blocked(model, node_pts[s_id][None], 0, 0):
        return None
    hq = [(int(h_all[s_id]), 0, s_id)]
    seen = {(s_id, 0)}
    parent = {}
    pops = 0
    goal_state = None
    while hq:
        _, t, u = heapq.heappop(hq)
        if pops > max_pops:
            return None
        pops += 1
        if pops % 512 == 0:
            check_deadline(deadline)
        if u == g_id and t >= goal_clear_t:
            goal_state = (u, t)
            break
        if t >= t_max:
            continue
        # wait in place for one step
        st = (u, t + 1)
        if st not in seen and not movers.blocked(
            model,
            np.broadcast_to(node_pts[u], (sub_steps + 1,) + node_pts[u].shape),
            t * sub_steps,
            (t + 1) * sub_steps,
        ):
            seen.add(st)
            parent[st] = ((u, t), None)
            heapq.heappush(hq, (t + 1 + int(h_all[u]), t + 1, u))
        # traverse edges
        for v, w in adj.get(u, []):
            m, motion_pts, _ = edge_motion(u, v, w)
            st = (v, t + m)
            if t + m > t_max or st in seen:
                continue
            if movers.blocked(model, motion_pts, t * sub_steps, (t + m) * sub_steps):
                continue
            seen.add(st)
            parent[st] = ((u, t), (u, v))
            heapq.heappush(hq, (t + m + int(h_all[v]), t + m, v))
    if goal_state is None:
        return None
    # replay the move chain into one configuration per timestep
    chain = []
    st = goal_state
    while st in parent:
        prev, move = parent[st]
        chain.append((prev, move))
        st = prev
    chain.reverse()
    configs = [start.copy()]
    for (u, _), move in chain:
        if move is None:
            configs.append(nodes[u].copy())
        else:
            m, _, step_cfgs = edge_motion(move[0], move[1], 0.0)
            for k in range(1, m + 1):
                configs.append(step_cfgs[k].copy())
    arr = np.stack(configs)
    arr[-1] = goal
    return TimedPath(robot_index, arr)


def decoupled_prm_solve(sub, params: PrmParams, arc_step: float, sub_steps: int = 4, deadline: Optional[float] = None) -> Optional[list]:
    """Plan the subproblem's robots one at a time in ascending index order.

    Each robot is validated against the environment and every previously
    planned robot (goal-waiting included).  Returns padded, synchronized
    timed paths, or None when some robot cannot be routed.
    """
    planned = []
    planned_models = []
    for pos, ridx in enumerate(sub.robots):
        check_deadline(deadline)
        model = sub.models[pos]
        space = single_space(model, sub.cboundary.boxes[pos], ridx)
        start = sub.queries[pos][0].values
        goal = sub.queries[pos][1].values
        rparams = params.with_seed(params.seed + pos)
        for q in (start, goal):
            if not bool(cspace.flat_valid(space, q[None, :], sub.env_local)[0]):
                return None
        if not planned:
            seq = _static_plan(space, sub.env_local, start, goal, rparams, deadline)
            if seq is None:
                return None
            tp = discretize(seq, model, arc_step, robot_index=ridx)
        else:
            movers = _MoverSet(planned, planned_models, sub_steps)
            tp = _timed_plan(
                space, sub.env_local, start, goal, rparams, movers, arc_step, sub_steps, deadline=deadline
            )
            if tp is None:
                return None
        planned.append(tp)
        planned_models.append(model)
    group = pad_group(planned)
    if not paths_valid(group, list(sub.models), sub.env_local, 2 * sub_steps):
        return None
    return group


def coupled_prm_solve(sub, params: PrmParams, arc_step: float, sub_steps: int = 4, deadline: Optional[float] = None) -> Optional[list]:
    """Plan the whole group jointly in its composite space."""
    space = RobotSpace(tuple(sub.robots), tuple(sub.models), sub.cboundary)
    start = np.concatenate([q[0].values for q in sub.queries])
    goal = np.concatenate([q[1].values for q in sub.queries])
    if not bool(cspace.flat_valid(space, start[None, :], sub.env_local)[0]):
        return None
    if not bool(cspace.flat_valid(space, goal[None, :], sub.env_local)[0]):
        return None
    seq = _static_plan(space, sub.env_local, start, goal, params, deadline)
    if seq is None:
        return None
    group = discretize_composite(space, seq, arc_step)
    if not paths_valid(group, list(sub.models), sub.env_local, 2 * sub_steps):
        return None
    return group
