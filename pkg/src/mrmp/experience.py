"""The experience database: classified, anchored subproblem solutions.

Entries are recorded from randomly generated subproblems solved in
isolation with the coupled planner.  Mobile entries are stored relative
to the centroid of their query endpoints and retrieved by translating
them onto the centroid of a new subproblem's queries, which makes the
ranking translation-invariant.  Manipulator-pair entries are classified
by the quantized transform of one base relative to the other; a pair
matching with roles reversed reuses the same bucket with the stored
paths exchanged.

Retrieval follows retrieve/validate/repair/connect: the k closest stored
solutions are checked against the actual environment, the one with the
fewest invalid segments is repaired when that is cheap enough, and the
result is joined to the subproblem's endpoints by straight connection
edges.  Anything else is a miss and the caller falls back to planning
from scratch.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from . import cspace
from .cspace import CBoundary, Configuration, RobotSpace, SampleBox, full_joint_box
from .geometry import (
    Box,
    Disc,
    Environment,
    PlanarArm,
    Pose2,
    RobotModel,
    Vec2,
    wrap_angle,
)
from .paths import TimedPath, discretize_composite, paths_valid
from .roadmap import PrmParams, _static_plan, coupled_prm_solve
from .serialize import FormatError, LineReader, check_end, check_header, fmt, fmt_row
from .subproblem import Subproblem, _clip_obstacles, _group_workspace_box

POSITION_GRID = 0.1
ANGLE_GRID = math.pi / 36.0  # 5 degrees


class GenerationError(RuntimeError):
    """Random subproblem generation exhausted its rejection budget."""


class DatabaseConstructionError(RuntimeError):
    """Database construction fell below half of the requested entries."""


@dataclass(frozen=True, order=True)
class TransformKey:
    """Bucket key: group size for mobile/full, plus the quantized relative
    base transform (grid units) for manipulator pairs."""

    kind: str  # mobile | manipulator_pair | full
    size: int
    rel: Optional[tuple] = None

    def __post_init__(self):
        if self.kind == "mobile" and self.size not in (2, 3, 4):
            raise ValueError("mobile keys cover groups of 2, 3 or 4 robots")
        if self.kind == "manipulator_pair":
            if self.size != 2 or self.rel is None or len(self.rel) != 3:
                raise ValueError("manipulator keys need size 2 and a quantized transform")
        if self.kind not in ("mobile", "manipulator_pair", "full"):
            raise ValueError(f"unknown key kind {self.kind!r}")


@dataclass(frozen=True)
class RetrievalParams:
    k: int = 10
    max_collisions: int = 3

    def __post_init__(self):
        if self.k < 1 or self.max_collisions < 0:
            raise ValueError("k must be >= 1 and max_collisions >= 0")


@dataclass(frozen=True, eq=False)
class ExperienceEntry:
    key: TransformKey
    entry_id: int
    anchor: np.ndarray  # (2,) anchor at record time
    starts: np.ndarray  # (m, dof), anchor-relative for mobile/full discs
    goals: np.ndarray  # (m, dof)
    paths: np.ndarray  # (m, L, dof), synchronized timesteps


@dataclass(eq=False)
class Database:
    kind: str  # mobile | manipulator | full
    model: RobotModel
    delta: float
    arc_step: float
    buckets: dict = field(default_factory=dict)
    next_id: int = 0
    build_seconds: float = 0.0
    version: int = 1

    def entries(self):
        for key in sorted(self.buckets):
            yield from self.buckets[key]

    def size(self) -> int:
        return sum(len(b) for b in self.buckets.values())


# ---------------------------------------------------------------------------
# keys and anchoring


def relative_base_transform(a: Pose2, b: Pose2) -> tuple:
    """Pose of base b expressed in base a's frame: (dx, dy, dheading)."""
    dx = b.position.x - a.position.x
    dy = b.position.y - a.position.y
    c, s = math.cos(-a.heading), math.sin(-a.heading)
    return (c * dx - s * dy, s * dx + c * dy, float(wrap_angle(b.heading - a.heading)))


def quantize_transform(rel: tuple) -> tuple:
    return (
        int(round(rel[0] / POSITION_GRID)),
        int(round(rel[1] / POSITION_GRID)),
        int(round(rel[2] / ANGLE_GRID)),
    )


def dequantize_transform(q: tuple) -> tuple:
    return (q[0] * POSITION_GRID, q[1] * POSITION_GRID, q[2] * ANGLE_GRID)


def manipulator_pair_key(base_i: Pose2, base_j: Pose2):
    """Canonical pair key plus the slot order it implies.

    Returns (key, assignments) where each assignment maps entry slots to
    local robot positions (0, 1); symmetric pairs admit both orders.
    """
    raw_ij = quantize_transform(relative_base_transform(base_i, base_j))
    raw_ji = quantize_transform(relative_base_transform(base_j, base_i))
    canonical = min(raw_ij, raw_ji)
    key = TransformKey("manipulator_pair", 2, canonical)
    assignments = []
    if raw_ij == canonical:
        assignments.append((0, 1))
    if raw_ji == canonical:
        assignments.append((1, 0))
    return key, assignments


def subproblem_key(db: Database, sub: Subproblem):
    """Bucket key for a subproblem plus the admissible slot assignments."""
    m = len(sub.robots)
    if db.kind == "full":
        return TransformKey("full", m), [tuple(range(m))]
    if all(isinstance(md, Disc) for md in sub.models):
        return TransformKey("mobile", m), [tuple(range(m))]
    if m != 2 or not all(isinstance(md, PlanarArm) for md in sub.models):
        return None, []
    return manipulator_pair_key(sub.models[0].base, sub.models[1].base)


def _positions_anchor(queries) -> np.ndarray:
    pts = []
    for start, goal in queries:
        pts.append(start.values[:2])
        pts.append(goal.values[:2])
    return np.mean(pts, axis=0)


def _translation_mask(model: RobotModel) -> np.ndarray:
    mask = np.zeros(3 if isinstance(model, Disc) else model.dof, dtype=bool)
    if isinstance(model, Disc):
        mask[:2] = True
    return mask


def anchor_of(db: Database, sub: Subproblem) -> np.ndarray:
    if isinstance(db.model, Disc):
        return _positions_anchor(sub.queries)
    return sub.models[0].base.position.to_array()


def _compatible(db: Database, sub: Subproblem) -> bool:
    for m in sub.models:
        if isinstance(db.model, Disc) != isinstance(m, Disc):
            return False
        if isinstance(m, Disc):
            if abs(m.radius - db.model.radius) > 1e-9:
                return False
        else:
            if m.dof != db.model.dof or abs(m.link_thickness - db.model.link_thickness) > 1e-9:
                return False
            if any(abs(a - b) > 1e-9 for a, b in zip(m.link_lengths, db.model.link_lengths)):
                return False
    return True


# ---------------------------------------------------------------------------
# retrieval


@dataclass(frozen=True, eq=False)
class Candidate:
    entry: ExperienceEntry
    assignment: tuple  # assignment[slot] = robot position in the subproblem
    distance: float
    rank: int

    @property
    def inverted(self) -> bool:
        return self.assignment != tuple(range(len(self.assignment)))


def _anchored_queries(db: Database, sub: Subproblem) -> tuple:
    """Subproblem start/goal rows shifted into the entry frame."""
    anchor = anchor_of(db, sub)
    starts, goals = [], []
    for (start, goal), model in zip(sub.queries, sub.models):
        mask = _translation_mask(model)
        s = start.values.copy()
        g = goal.values.copy()
        s[mask] -= anchor[: mask.sum()]
        g[mask] -= anchor[: mask.sum()]
        starts.append(s)
        goals.append(g)
    return np.stack(starts), np.stack(goals), anchor


def k_closest(db: Database, sub: Subproblem, k: int) -> list:
    """The k nearest stored solutions for the subproblem's bucket.

    Distance is the sum over entry slots of the configuration-space
    distance between anchored query endpoints; ties break by entry id.
    Fewer than k candidates are returned when the bucket is small.
    """
    key, assignments = subproblem_key(db, sub)
    if key is None or not assignments:
        return []
    bucket = db.buckets.get(key, [])
    if not bucket:
        return []
    starts, goals, _ = _anchored_queries(db, sub)
    e_starts = np.stack([e.starts for e in bucket])  # (B, m, dof)
    e_goals = np.stack([e.goals for e in bucket])
    ids = [e.entry_id for e in bucket]
    w = cspace.metric_weights(db.model)
    amask = cspace.angular_mask(db.model)

    def slot_dist(q, block):
        d = block - q
        d[:, amask] = wrap_angle(d[:, amask])
        return np.linalg.norm(d * w, axis=1)

    best_d = None
    best_asg = None
    for asg in assignments:
        d = np.zeros(len(bucket))
        for slot, pos in enumerate(asg):
            d = d + slot_dist(starts[pos], e_starts[:, slot])
            d = d + slot_dist(goals[pos], e_goals[:, slot])
        if best_d is None:
            best_d = d
            best_asg = [asg] * len(bucket)
        else:
            for i in range(len(bucket)):
                if d[i] < best_d[i]:
                    best_d[i] = d[i]
                    best_asg[i] = asg
    order = sorted(range(len(bucket)), key=lambda i: (best_d[i], ids[i], best_asg[i]))
    return [
        Candidate(bucket[i], tuple(best_asg[i]), float(best_d[i]), rank)
        for rank, i in enumerate(order[:k])
    ]


def transform_entry(entry: ExperienceEntry, db: Database, sub: Subproblem, assignment: Optional[tuple] = None):
    """Entry configurations expressed in the subproblem's frame.

    Mobile entries translate onto the subproblem's query centroid; arm
    entries carry over unchanged (joint space), with an inverted
    assignment exchanging which robot receives which stored path.
    Returns (starts, goals, paths) ordered by subproblem robot position.
    """
    key, assignments = subproblem_key(db, sub)
    if key != entry.key:
        raise ValueError(f"entry key {entry.key} does not match subproblem key {key}")
    if assignment is None:
        assignment = assignments[0]
    m = len(sub.robots)
    dof = entry.starts.shape[1]
    starts = np.zeros((m, dof))
    goals = np.zeros((m, dof))
    paths = np.zeros((m,) + entry.paths.shape[1:])
    anchor = anchor_of(db, sub)
    for slot, pos in enumerate(assignment):
        model = sub.models[pos]
        mask = _translation_mask(model)
        starts[pos] = entry.starts[slot]
        goals[pos] = entry.goals[slot]
        paths[pos] = entry.paths[slot]
        if mask.any():
            starts[pos, mask] += anchor
            goals[pos, mask] += anchor
            paths[pos][:, mask] += anchor
    return starts, goals, paths


# ---------------------------------------------------------------------------
# validation and repair


def _group_space(sub: Subproblem) -> RobotSpace:
    boxes = tuple(cspace._dummy_box(m) for m in sub.models)
    return RobotSpace(tuple(sub.robots), tuple(sub.models), CBoundary(boxes))


def _composite_rows(paths: np.ndarray) -> np.ndarray:
    # (m, L, dof) -> (L, m * dof)
    return np.concatenate([paths[i] for i in range(paths.shape[0])], axis=1)


def _point_validity(space: RobotSpace, rows: np.ndarray, env: Environment, sub_steps: int):
    """Per-point and per-segment validity of a composite waypoint timeline."""
    L = rows.shape[0]
    if L == 1:
        ok = cspace.flat_valid(space, rows, env)
        return ok, np.zeros(0, dtype=bool)
    fr = np.arange(sub_steps) / sub_steps
    deltas = cspace.flat_delta(space, rows[:-1], rows[1:])
    block = rows[:-1, None, :] + fr[None, :, None] * deltas[:, None, :]
    series = np.concatenate([block.reshape((L - 1) * sub_steps, -1), rows[-1:]], axis=0)
    mask = cspace._space_angular(space)
    series[:, mask] = cspace.wrap_angle(series[:, mask])
    ok = cspace.flat_valid(space, series, env)
    point_ok = ok[::sub_steps]
    seg_bad = np.zeros(L - 1, dtype=bool)
    for t in range(L - 1):
        if not ok[t * sub_steps : (t + 1) * sub_steps + 1].all():
            seg_bad[t] = True
    return point_ok, seg_bad


def validate_candidates(
    cands: Sequence[Candidate],
    db: Database,
    sub: Subproblem,
    env: Environment,
    sub_steps: int = 4,
):
    """Pick the connectable candidate with the fewest invalid segments.

    A candidate whose endpoints cannot be joined to the subproblem's
    queries by straight composite edges is discarded outright; the rest
    are scored by how many of their timestep segments collide in the
    actual environment (ties keep retrieval order).  Returns
    (candidate, rows, invalid_segment_mask, count) or None.
    """
    space = _group_space(sub)
    step = cspace.default_step(sub.models)
    sub_start = np.concatenate([q[0].values for q in sub.queries])
    sub_goal = np.concatenate([q[1].values for q in sub.queries])
    best = None
    for cand in cands:
        starts, goals, paths = transform_entry(cand.entry, db, sub, cand.assignment)
        rows = _composite_rows(paths)
        if not cspace.flat_edge_valid(space, sub_start, rows[0], env, step):
            continue
        if not cspace.flat_edge_valid(space, rows[-1], sub_goal, env, step):
            continue
        _, seg_bad = _point_validity(space, rows, env, sub_steps)
        count = int(seg_bad.sum())
        if best is None or count < best[3]:
            best = (cand, rows, seg_bad, count)
            if count == 0:
                break
    return best


def repair_path(
    rows: np.ndarray,
    seg_bad: np.ndarray,
    sub: Subproblem,
    env: Environment,
    prm_params: PrmParams,
    sub_steps: int = 4,
    inflation: Optional[float] = None,
    deadline: Optional[float] = None,
) -> Optional[np.ndarray]:
    """Replan every invalid run of segments inside a local box.

    Operates on composite waypoint rows; returns the repaired rows or
    None when some run cannot be replanned.
    """
    if not seg_bad.any():
        return rows.copy()
    space = _group_space(sub)
    point_ok, _ = _point_validity(space, rows, env, sub_steps)
    pad = inflation if inflation is not None else 2.0 * max(
        (m.radius if isinstance(m, Disc) else m.link_thickness) for m in sub.models
    )
    runs = []
    t = 0
    L = rows.shape[0]
    while t < len(seg_bad):
        if seg_bad[t]:
            a = t
            while t < len(seg_bad) and seg_bad[t]:
                t += 1
            runs.append([a, t - 1])
        else:
            t += 1
    pieces = []
    for a, b in runs:
        while a > 0 and not point_ok[a]:
            a -= 1
        while b + 1 < L - 1 and not point_ok[b + 1]:
            b += 1
        if not point_ok[a] or not point_ok[b + 1]:
            return None
        pieces.append((a, b))
    # merge overlapping runs after extension
    merged = []
    for a, b in sorted(pieces):
        if merged and a <= merged[-1][1] + 1:
            merged[-1][1] = max(merged[-1][1], b)
        else:
            merged.append([a, b])
    new_rows = [rows[:0]]
    cursor = 0
    for a, b in merged:
        seg_cfgs = [rows[i] for i in range(a, b + 2)]
        per_robot = []
        offs = space.offsets
        for i, model in enumerate(sub.models):
            sl = slice(offs[i], offs[i + 1])
            per_robot.append(np.stack([c[sl] for c in seg_cfgs]))
        lo, hi = _group_workspace_box(sub.models, per_robot, pad)
        env_lo = env.boundary.lo.to_array()
        env_hi = env.boundary.hi.to_array()
        clip_lo = np.maximum(lo, env_lo)
        clip_hi = np.minimum(hi, env_hi)
        all_disc = all(isinstance(m, Disc) for m in sub.models)
        boundary = Box(Vec2(*clip_lo), Vec2(*clip_hi)) if all_disc else env.boundary
        env_mini = Environment(boundary, _clip_obstacles(env, clip_lo, clip_hi))
        boxes = tuple(
            SampleBox(clip_lo, clip_hi) if isinstance(m, Disc) else full_joint_box(m)
            for m in sub.models
        )
        mini_space = RobotSpace(tuple(sub.robots), tuple(sub.models), CBoundary(boxes))
        seq = _static_plan(mini_space, env_mini, rows[a], rows[b + 1], prm_params, deadline)
        if seq is None:
            return None
        new_rows.append(rows[cursor:a])
        new_rows.append(seq)
        cursor = b + 2
    new_rows.append(rows[cursor:])
    return np.concatenate([r for r in new_rows if len(r)])


def database_planning(
    db: Optional[Database],
    sub: Subproblem,
    env: Environment,
    retrieval: RetrievalParams,
    prm_params: PrmParams,
    arc_step: float,
    sub_steps: int = 4,
    deadline: Optional[float] = None,
):
    """Retrieve, validate, repair and connect a stored solution.

    Returns (timed paths, label) where label is 'db-hit' or 'db-repair';
    (None, 'db-miss') signals fallback to planning from scratch.  The
    returned paths start and end exactly on the subproblem's queries.
    """
    miss = (None, "db-miss")
    if db is None or not _compatible(db, sub):
        return miss
    cands = k_closest(db, sub, retrieval.k)
    if not cands:
        return miss
    picked = validate_candidates(cands, db, sub, env, sub_steps)
    if picked is None:
        return miss
    cand, rows, seg_bad, count = picked
    if count == 0:
        label = "db-hit"
    elif count < retrieval.max_collisions:
        rows = repair_path(rows, seg_bad, sub, env, prm_params, sub_steps, deadline=deadline)
        if rows is None:
            return miss
        label = "db-repair"
    else:
        return miss
    space = _group_space(sub)
    sub_start = np.concatenate([q[0].values for q in sub.queries])
    sub_goal = np.concatenate([q[1].values for q in sub.queries])
    waypoints = np.concatenate([sub_start[None, :], rows, sub_goal[None, :]])
    group = discretize_composite(space, waypoints, arc_step)
    if not paths_valid(group, list(sub.models), env, 2 * sub_steps):
        return miss
    return group, label


# ---------------------------------------------------------------------------
# novelty-gated storage


def entry_distance(db: Database, a: ExperienceEntry, b: ExperienceEntry) -> float:
    """Retrieval-metric distance between two stored entries' query tuples."""
    d = 0.0
    space = cspace.single_space(db.model, cspace._dummy_box(db.model))
    for slot in range(a.starts.shape[0]):
        d += float(cspace.flat_dist(space, a.starts[slot], b.starts[slot]))
        d += float(cspace.flat_dist(space, a.goals[slot], b.goals[slot]))
    return d


def insert_if_novel(db: Database, entry: ExperienceEntry, delta: Optional[float] = None) -> bool:
    """Insert unless a same-bucket entry's queries are within delta."""
    delta = db.delta if delta is None else delta
    bucket = db.buckets.setdefault(entry.key, [])
    for other in bucket:
        if entry_distance(db, other, entry) < delta:
            return False
    bucket.append(entry)
    db.next_id = max(db.next_id, entry.entry_id + 1)
    return True


# ---------------------------------------------------------------------------
# random subproblem generation and database construction


def _isolated_mobile_subproblem(m: int, model: Disc, rng: np.random.Generator, box_factor: float) -> Subproblem:
    r = model.radius
    side = box_factor * m * (2.0 * r)
    lo = np.array([-side / 2.0, -side / 2.0])
    hi = -lo
    env = Environment(Box(Vec2(*lo), Vec2(*hi)))
    max_query = side / 2.0

    def sample_set(anchors=None):
        pts = []
        for i in range(m):
            for _ in range(200):
                xy = rng.uniform(lo + r, hi - r)
                if any(np.linalg.norm(xy - p) < 2.0 * r for p in pts):
                    continue
                if anchors is not None and np.linalg.norm(xy - anchors[i]) > max_query:
                    continue
                pts.append(xy)
                break
            else:
                return None
        return pts

    for _ in range(200):
        starts = sample_set()
        if starts is None:
            continue
        goals = sample_set(anchors=starts)
        if goals is None:
            continue
        queries = []
        for i in range(m):
            th_s, th_g = rng.uniform(-math.pi, math.pi, size=2)
            queries.append(
                (
                    Configuration(np.array([*starts[i], th_s]), i),
                    Configuration(np.array([*goals[i], th_g]), i),
                )
            )
        boxes = tuple(SampleBox(lo, hi) for _ in range(m))
        return Subproblem(
            robots=tuple(range(m)),
            models=(model,) * m,
            queries=tuple(queries),
            env_local=env,
            cboundary=CBoundary(boxes),
            t_lo=0,
            t_hi=1,
            center_t=0.5,
            half_window=0.5,
            generation=0,
            saturated=False,
        )
    raise GenerationError(f"could not place {m} mobile robots in the reduced box")


def _isolated_pair_subproblem(key: TransformKey, template: PlanarArm, rng: np.random.Generator) -> Subproblem:
    rel = dequantize_transform(key.rel)
    base0 = Pose2(Vec2(0.0, 0.0), 0.0)
    base1 = Pose2(Vec2(rel[0], rel[1]), rel[2])
    arm0 = PlanarArm(base0, template.link_lengths, template.link_thickness)
    arm1 = PlanarArm(base1, template.link_lengths, template.link_thickness)
    margin = arm0.reach + 4.0 * template.link_thickness + 0.5 * arm0.reach
    bases = np.array([[0.0, 0.0], [rel[0], rel[1]]])
    lo = bases.min(axis=0) - margin
    hi = bases.max(axis=0) + margin
    env = Environment(Box(Vec2(*lo), Vec2(*hi)))
    models = (arm0, arm1)
    space = RobotSpace((0, 1), models, CBoundary((full_joint_box(arm0), full_joint_box(arm1))))
    for _ in range(500):
        s = cspace.flat_sample(space, rng, 1)[0]
        g = cspace.flat_sample(space, rng, 1)[0]
        if not cspace.flat_valid(space, s[None, :], env)[0]:
            continue
        if not cspace.flat_valid(space, g[None, :], env)[0]:
            continue
        n = arm0.dof
        queries = (
            (Configuration(s[:n], 0), Configuration(g[:n], 0)),
            (Configuration(s[n:], 1), Configuration(g[n:], 1)),
        )
        return Subproblem(
            robots=(0, 1),
            models=models,
            queries=queries,
            env_local=env,
            cboundary=space.boundary,
            t_lo=0,
            t_hi=1,
            center_t=0.5,
            half_window=0.5,
            generation=0,
            saturated=False,
        )
    raise GenerationError("could not sample a collision-free manipulator pair query")


def generate_random_subproblem(
    key: TransformKey,
    model: RobotModel,
    rng: np.random.Generator,
    box_factor: float = 3.0,
) -> Subproblem:
    """Random isolated subproblem matching the key, for database recording."""
    if key.kind in ("mobile", "full"):
        if not isinstance(model, Disc):
            raise ValueError("mobile keys need a disc model")
        return _isolated_mobile_subproblem(key.size, model, rng, box_factor)
    if not isinstance(model, PlanarArm):
        raise ValueError("manipulator keys need an arm model")
    return _isolated_pair_subproblem(key, model, rng)


def make_entry(key: TransformKey, sub: Subproblem, group: Sequence[TimedPath], entry_id: int) -> ExperienceEntry:
    """Record a solved subproblem, anchored for later translation."""
    if isinstance(sub.models[0], Disc):
        anchor = _positions_anchor(sub.queries)
    else:
        anchor = sub.models[0].base.position.to_array()
    m = len(sub.robots)
    L = max(p.horizon for p in group) + 1
    dof_n = group[0].configs.shape[1]
    paths = np.zeros((m, L, dof_n))
    starts = np.zeros((m, dof_n))
    goals = np.zeros((m, dof_n))
    for i, (p, model) in enumerate(zip(group, sub.models)):
        mask = _translation_mask(model)
        cfgs = p.configs.copy()
        if p.horizon + 1 < L:
            cfgs = np.concatenate([cfgs, np.repeat(cfgs[-1:], L - 1 - p.horizon, axis=0)])
        cfgs[:, mask] -= anchor
        paths[i] = cfgs
        starts[i] = sub.queries[i][0].values.copy()
        goals[i] = sub.queries[i][1].values.copy()
        starts[i, mask] -= anchor
        goals[i, mask] -= anchor
    return ExperienceEntry(key, entry_id, anchor, starts, goals, paths)


def build_database(
    counts: Mapping[TransformKey, int],
    model: RobotModel,
    prm_params: PrmParams,
    delta: float,
    seed: int = 0,
    arc_step: Optional[float] = None,
    sub_steps: int = 4,
    box_factor: float = 3.0,
) -> Database:
    """Solve random isolated subproblems per key until the counts are met.

    Each key gets a 20x attempt budget; falling below half the requested
    count raises.  The same seed reproduces the database exactly.
    """
    arc = arc_step if arc_step is not None else cspace.default_step([model])
    kind = "mobile" if isinstance(model, Disc) else "manipulator"
    if any(k.kind == "full" for k in counts):
        kind = "full"
    db = Database(kind, model, delta, arc)
    t0 = time.perf_counter()
    for key_idx, key in enumerate(sorted(counts)):
        target = counts[key]
        seq = np.random.SeedSequence(entropy=seed, spawn_key=(key_idx,))
        rng = np.random.default_rng(seq)
        solver_seeds = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(key_idx, 1)))
        stored = 0
        attempts = 0
        budget = 20 * target
        while stored < target and attempts < budget:
            attempts += 1
            try:
                sub = generate_random_subproblem(key, model, rng, box_factor)
            except GenerationError:
                continue
            params = prm_params.with_seed(int(solver_seeds.integers(2**62)))
            group = coupled_prm_solve(sub, params, arc, sub_steps)
            if group is None:
                continue
            entry = make_entry(key, sub, group, db.next_id)
            if insert_if_novel(db, entry):
                stored += 1
        if stored * 2 < target:
            raise DatabaseConstructionError(
                f"stored only {stored}/{target} entries for {key} within {budget} attempts"
            )
    db.build_seconds = time.perf_counter() - t0
    return db


# ---------------------------------------------------------------------------
# serialization


def _model_tokens(model: RobotModel) -> str:
    if isinstance(model, Disc):
        return f"disc {fmt(model.radius)}"
    parts = ["arm", str(model.dof)]
    parts += [fmt(l) for l in model.link_lengths]
    parts.append(fmt(model.link_thickness))
    return " ".join(parts)


def _parse_model(reader: LineReader, toks: list) -> RobotModel:
    if toks[0] == "disc":
        vals = reader.floats(toks[1:], 1)
        return Disc(float(vals[0]))
    if toks[0] == "arm":
        n = reader.ints(toks[1:2], 1)[0]
        vals = reader.floats(toks[2:], n + 1)
        return PlanarArm(Pose2(Vec2(0.0, 0.0), 0.0), tuple(vals[:n]), float(vals[n]))
    raise reader.error(f"unknown robot model '{toks[0]}'")


def _key_tokens(key: TransformKey) -> str:
    if key.kind == "manipulator_pair":
        return f"pair {key.rel[0]} {key.rel[1]} {key.rel[2]}"
    return f"{key.kind} {key.size}"


def _parse_key(reader: LineReader, toks: list) -> TransformKey:
    if toks[0] == "pair":
        rel = tuple(reader.ints(toks[1:], 3))
        return TransformKey("manipulator_pair", 2, rel)
    if toks[0] in ("mobile", "full"):
        size = reader.ints(toks[1:], 1)[0]
        return TransformKey(toks[0], size)
    raise reader.error(f"unknown key kind '{toks[0]}'")


def save_database(db: Database, destination) -> None:
    lines = [f"mrmp-db {db.version}"]
    lines.append(f"kind {db.kind}")
    lines.append(f"model {_model_tokens(db.model)}")
    lines.append(f"delta {fmt(db.delta)}")
    lines.append(f"arc_step {fmt(db.arc_step)}")
    entries = list(db.entries())
    lines.append(f"entries {len(entries)}")
    for e in entries:
        lines.append(f"entry {e.entry_id} {_key_tokens(e.key)}")
        lines.append(f"anchor {fmt_row(e.anchor)}")
        m, L, dof_n = e.paths.shape
        lines.append(f"robots {m} dof {dof_n} steps {L}")
        for slot in range(m):
            lines.append(f"start {fmt_row(e.starts[slot])}")
            lines.append(f"goal {fmt_row(e.goals[slot])}")
        for slot in range(m):
            lines.append(f"path {slot}")
            for row in e.paths[slot]:
                lines.append(fmt_row(row))
    lines.append("end")
    text = "\n".join(lines) + "\n"
    with open(destination, "w") as fh:
        fh.write(text)


def load_database(source) -> Database:
    with open(source) as fh:
        text = fh.read()
    reader = LineReader(text, str(source))
    check_header(reader, "mrmp-db", 1)
    kind = reader.expect("kind")[0]
    if kind not in ("mobile", "manipulator", "full"):
        raise reader.error(f"unknown database kind '{kind}'")
    model = _parse_model(reader, reader.expect("model"))
    delta = float(reader.floats(reader.expect("delta"), 1)[0])
    arc_step = float(reader.floats(reader.expect("arc_step"), 1)[0])
    count = reader.ints(reader.expect("entries"), 1)[0]
    db = Database(kind, model, delta, arc_step)
    for _ in range(count):
        toks = reader.expect("entry")
        entry_id = reader.ints(toks[:1], 1)[0]
        key = _parse_key(reader, toks[1:])
        anchor = reader.floats(reader.expect("anchor"), 2)
        rtoks = reader.expect("robots")
        m = reader.ints(rtoks[:1], 1)[0]
        if rtoks[1] != "dof" or rtoks[3] != "steps":
            raise reader.error("malformed robots line")
        dof_n = reader.ints(rtoks[2:3], 1)[0]
        L = reader.ints(rtoks[4:5], 1)[0]
        starts = np.zeros((m, dof_n))
        goals = np.zeros((m, dof_n))
        for slot in range(m):
            starts[slot] = reader.floats(reader.expect("start"), dof_n)
            goals[slot] = reader.floats(reader.expect("goal"), dof_n)
        paths = np.zeros((m, L, dof_n))
        for slot in range(m):
            ptoks = reader.expect("path")
            if reader.ints(ptoks, 1)[0] != slot:
                raise reader.error(f"expected path {slot}")
            for row in range(L):
                paths[slot, row] = reader.floats(reader.tokens(), dof_n)
        entry = ExperienceEntry(key, entry_id, anchor, starts, goals, paths)
        db.buckets.setdefault(key, []).append(entry)
        db.next_id = max(db.next_id, entry_id + 1)
    check_end(reader)
    return db
