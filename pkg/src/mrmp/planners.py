"""Top-level planners.

``earc_solve`` plans individual paths, then repeatedly turns the earliest
conflict into a local subproblem and resolves it, preferring a database
lookup over planning from scratch (decoupled, then coupled); failed
subproblems expand geometrically, and groups merge when a new conflict
touches a previously rerouted robot.  ``arc_solve`` is the same loop with
the database stage removed, and with no database it consumes the same
random stream, so the two produce identical solutions.

``lightning_solve`` is the whole-problem experience baseline: it races a
retrieve-and-repair arm over a full-problem database against planning
from scratch, as a deterministic sequence with the retrieval arm first.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from . import cspace
from .cspace import CBoundary, Configuration, RobotSpace, SampleBox, full_joint_box, single_space
from .experience import (
    Database,
    DatabaseConstructionError,
    RetrievalParams,
    TransformKey,
    database_planning,
    insert_if_novel,
    make_entry,
)
from .geometry import Disc, Environment, PlanarArm, RobotModel
from .paths import (
    Conflict,
    Solution,
    SolveStats,
    TimedPath,
    discretize,
    find_first_conflict,
    pad_group,
    paths_env_free,
    splice,
)
from .roadmap import (
    PrmParams,
    TimeoutExceeded,
    _static_plan,
    check_deadline,
    coupled_prm_solve,
    decoupled_prm_solve,
)
from .subproblem import Subproblem, SubproblemParams, _from_window, create_subproblem, expand_subproblem, merge_groups


@dataclass(frozen=True)
class Problem:
    env: Environment
    robots: tuple
    queries: tuple  # per robot (start, goal) Configuration

    def __post_init__(self):
        object.__setattr__(self, "robots", tuple(self.robots))
        object.__setattr__(self, "queries", tuple(self.queries))
        if len(self.robots) != len(self.queries):
            raise ValueError("one query per robot required")


@dataclass(frozen=True)
class PlannerConfig:
    prm_full: PrmParams = PrmParams(num_samples=500, k_neighbors=10)
    prm_sub: PrmParams = PrmParams(num_samples=200, k_neighbors=8)
    subproblem: SubproblemParams = SubproblemParams()
    retrieval: RetrievalParams = RetrievalParams()
    arc_step: Optional[float] = None  # None: half the smallest footprint
    sub_steps: int = 4
    timeout: float = 60.0
    seed: int = 0

    def __post_init__(self):
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")

    def resolve_arc_step(self, models) -> float:
        return self.arc_step if self.arc_step is not None else cspace.default_step(models)

    def with_seed(self, seed: int) -> "PlannerConfig":
        return replace(self, seed=int(seed))


class _SeedStream:
    """Deterministic stream of solver seeds derived from one master seed."""

    def __init__(self, seed: int, lane: int = 0):
        self._rng = np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(lane,)))

    def next(self) -> int:
        return int(self._rng.integers(2**62))


def validate_problem(problem: Problem) -> None:
    """Starts and goals must be environment-valid and mutually collision-free."""
    env = problem.env
    for r, (model, (start, goal)) in enumerate(zip(problem.robots, problem.queries)):
        space = single_space(model, cspace._dummy_box(model), r)
        for name, cfg in (("start", start), ("goal", goal)):
            if not bool(cspace.flat_env_free(space, cfg.values[None, :], env)[0]):
                raise ValueError(f"robot {r} {name} configuration collides with the environment")
    for sel in (0, 1):
        space = RobotSpace(
            tuple(range(len(problem.robots))),
            tuple(problem.robots),
            CBoundary(tuple(cspace._dummy_box(m) for m in problem.robots)),
        )
        flat = np.concatenate([q[sel].values for q in problem.queries])
        if not bool(cspace.flat_pairs_free(space, flat[None, :])[0]):
            which = "start" if sel == 0 else "goal"
            raise ValueError(f"{which} configurations collide between robots")


def _robot_box(model: RobotModel, env: Environment) -> SampleBox:
    if isinstance(model, Disc):
        return SampleBox(env.boundary.lo.to_array(), env.boundary.hi.to_array())
    return full_joint_box(model)


def individual_paths(problem: Problem, config: PlannerConfig, seeds: Optional[_SeedStream] = None, deadline: Optional[float] = None) -> Optional[list]:
    """Per-robot plan ignoring all other robots, on the shared time grid."""
    seeds = seeds or _SeedStream(config.seed)
    arc = config.resolve_arc_step(problem.robots)
    out = []
    for r, (model, (start, goal)) in enumerate(zip(problem.robots, problem.queries)):
        space = single_space(model, _robot_box(model, problem.env), r)
        path = None
        for _ in range(3):
            check_deadline(deadline)
            params = config.prm_full.with_seed(seeds.next())
            seq = _static_plan(space, problem.env, start.values, goal.values, params, deadline)
            if seq is None:
                continue
            tp = discretize(seq, model, arc, robot_index=r)
            if paths_env_free([tp], [model], problem.env, 2 * config.sub_steps):
                path = tp
                break
        if path is None:
            return None
        out.append(path)
    return out


# ---------------------------------------------------------------------------
# the adaptive conflict-resolution engine


def _queries_mutually_valid(sub: Subproblem) -> bool:
    space = RobotSpace(tuple(sub.robots), tuple(sub.models), sub.cboundary)
    for sel in (0, 1):
        flat = np.concatenate([q[sel].values for q in sub.queries])
        if not bool(cspace.flat_pairs_free(space, flat[None, :])[0]):
            return False
    return True


def _merge_with_history(
    sub: Subproblem,
    history: dict,
    paths,
    models,
    env,
    params: SubproblemParams,
) -> Subproblem:
    """Fold in groups whose previous local solutions overlap this conflict."""
    pending = list(sub.robots)
    absorbed = set(sub.robots)
    while pending:
        r = pending.pop(0)
        rec = history.get(r)
        if rec is None:
            continue
        group, lo, hi = rec
        if hi < sub.t_lo or lo > sub.t_hi:
            continue
        new = [g for g in group if g not in absorbed]
        if not new:
            continue
        other = _from_window(tuple(group), paths, models, env, params, (lo + hi) / 2.0, max((hi - lo) / 2.0, 1.0), 0)
        sub = merge_groups(sub, other, paths, models, env, params)
        absorbed |= set(group)
        pending.extend(new)
    return sub


def _attempt_subproblem(
    sub: Subproblem,
    db: Optional[Database],
    config: PlannerConfig,
    env: Environment,
    arc: float,
    seeds: _SeedStream,
    db_seeds: _SeedStream,
    deadline: Optional[float],
):
    """Database first, then the decoupled/coupled hierarchy."""
    if db is not None:
        group, label = database_planning(
            db,
            sub,
            env,
            config.retrieval,
            config.prm_sub.with_seed(db_seeds.next()),
            arc,
            config.sub_steps,
            deadline=deadline,
        )
        if group is not None:
            return group, label
    check_deadline(deadline)
    params = config.prm_sub.with_seed(seeds.next())
    group = decoupled_prm_solve(sub, params, arc, config.sub_steps, deadline)
    if group is not None:
        return group, "decoupled"
    check_deadline(deadline)
    params = config.prm_sub.with_seed(seeds.next())
    group = coupled_prm_solve(sub, params, arc, config.sub_steps, deadline)
    if group is not None:
        return group, "coupled"
    return None, None


def _count_resolution(stats: SolveStats, label: str) -> None:
    stats.conflicts_resolved += 1
    stats.resolutions.append(label)
    if label == "db-hit":
        stats.db_hits += 1
    elif label == "db-repair":
        stats.db_repairs += 1
    elif label == "decoupled":
        stats.decoupled_hits += 1
    elif label == "coupled":
        stats.coupled_hits += 1


def _failure(stats: SolveStats, t0: float, reason: str) -> Solution:
    stats.failure_reason = reason
    stats.planning_seconds = time.perf_counter() - t0
    return Solution(False, None, stats)


def _engine(problem: Problem, db: Optional[Database], config: PlannerConfig) -> Solution:
    t0 = time.perf_counter()
    deadline = t0 + config.timeout
    stats = SolveStats()
    models = list(problem.robots)
    env = problem.env
    arc = config.resolve_arc_step(models)
    seeds = _SeedStream(config.seed)
    db_seeds = _SeedStream(config.seed, lane=1)
    try:
        validate_problem(problem)
        paths = individual_paths(problem, config, seeds, deadline)
        if paths is None:
            return _failure(stats, t0, "individual-paths")
        paths = pad_group(paths)
        history: dict = {}
        while True:
            check_deadline(deadline)
            conflict = find_first_conflict(paths, models, config.sub_steps)
            if conflict is None:
                conflict = find_first_conflict(paths, models, 2 * config.sub_steps)
            if conflict is None:
                if not paths_env_free(paths, models, env, 2 * config.sub_steps):
                    return _failure(stats, t0, "validation")
                check_deadline(deadline)
                stats.planning_seconds = time.perf_counter() - t0
                return Solution(True, paths, stats)

            sub = create_subproblem(conflict, paths, models, env, config.subproblem)
            sub = _merge_with_history(sub, history, paths, models, env, config.subproblem)
            if not _queries_mutually_valid(sub):
                wider = expand_subproblem(sub, paths, models, env, config.subproblem)
                if wider is not None:
                    sub = wider

            local = None
            label = None
            while True:
                check_deadline(deadline)
                local, label = _attempt_subproblem(sub, db, config, env, arc, seeds, db_seeds, deadline)
                if local is not None:
                    break
                if sub.generation >= config.subproblem.max_generations:
                    break
                nxt = expand_subproblem(sub, paths, models, env, config.subproblem)
                if nxt is None:
                    break
                sub = nxt
            if local is None:
                return _failure(stats, t0, "subproblem-unsolvable")

            local = pad_group(local)
            local_h = local[0].horizon
            shift = local_h - (sub.t_hi - sub.t_lo)
            by_index = {p.robot_index: p for p in local}
            new_paths = []
            for p in paths:
                if p.robot_index in by_index:
                    new_paths.append(splice(p, by_index[p.robot_index], sub.t_lo, sub.t_hi))
                else:
                    new_paths.append(p)
            paths = pad_group(new_paths)
            horizon = paths[0].horizon
            for r, (grp, lo, hi) in list(history.items()):
                if lo >= sub.t_hi:
                    history[r] = (grp, min(lo + shift, horizon), min(hi + shift, horizon))
                else:
                    history[r] = (grp, lo, min(hi, horizon))
            for r in sub.robots:
                history[r] = (sub.robots, sub.t_lo, min(sub.t_lo + local_h, horizon))
            _count_resolution(stats, label)
    except TimeoutExceeded:
        return _failure(stats, t0, "timeout")


def earc_solve(problem: Problem, db: Optional[Database], config: PlannerConfig) -> Solution:
    """Experience-first adaptive conflict resolution."""
    return _engine(problem, db, config)


def arc_solve(problem: Problem, config: PlannerConfig) -> Solution:
    """Plain adaptive conflict resolution (no database stage)."""
    return _engine(problem, None, config)


# ---------------------------------------------------------------------------
# whole-problem experience baseline


def full_problem_subproblem(problem: Problem) -> Subproblem:
    """The whole problem viewed as one (saturated) subproblem."""
    boxes = tuple(_robot_box(m, problem.env) for m in problem.robots)
    return Subproblem(
        robots=tuple(range(len(problem.robots))),
        models=tuple(problem.robots),
        queries=tuple(problem.queries),
        env_local=problem.env,
        cboundary=CBoundary(boxes),
        t_lo=0,
        t_hi=1,
        center_t=0.5,
        half_window=0.5,
        generation=0,
        saturated=True,
    )


def build_full_database(
    problem_factory: Callable[[int], Problem],
    n: int,
    config: PlannerConfig,
    delta: float,
    seed: int = 0,
) -> Database:
    """Record coupled solutions of whole random instances of one class.

    The database grows with the full composite dimensionality, which is
    exactly why it becomes expensive for larger teams.
    """
    t0 = time.perf_counter()
    first = problem_factory(0)
    models = list(first.robots)
    arc = config.resolve_arc_step(models)
    db = Database("full", first.robots[0], delta, arc)
    key = TransformKey("full", len(first.robots))
    solver_seeds = _SeedStream(seed, lane=2)
    stored = 0
    attempts = 0
    budget = 20 * n
    while stored < n and attempts < budget:
        problem = problem_factory(attempts)
        attempts += 1
        sub = full_problem_subproblem(problem)
        params = config.prm_full.with_seed(solver_seeds.next())
        group = coupled_prm_solve(sub, params, arc, config.sub_steps)
        if group is None:
            continue
        entry = make_entry(key, sub, group, db.next_id)
        if insert_if_novel(db, entry):
            stored += 1
    if stored * 2 < n:
        raise DatabaseConstructionError(f"stored only {stored}/{n} full-problem entries")
    db.build_seconds = time.perf_counter() - t0
    return db


def lightning_solve(problem: Problem, full_db: Optional[Database], config: PlannerConfig) -> Solution:
    """Race retrieve-and-repair against from-scratch planning.

    The two arms run as a deterministic sequence, retrieval first, so the
    first arm to produce a valid solution wins.
    """
    t0 = time.perf_counter()
    deadline = t0 + config.timeout
    stats = SolveStats()
    models = list(problem.robots)
    arc = config.resolve_arc_step(models)
    seeds = _SeedStream(config.seed)
    db_seeds = _SeedStream(config.seed, lane=1)
    try:
        validate_problem(problem)
        sub = full_problem_subproblem(problem)
        if full_db is not None:
            group, label = database_planning(
                full_db,
                sub,
                problem.env,
                config.retrieval,
                config.prm_sub.with_seed(db_seeds.next()),
                arc,
                config.sub_steps,
                deadline=deadline,
            )
            if group is not None:
                _count_resolution(stats, label)
                check_deadline(deadline)
                stats.planning_seconds = time.perf_counter() - t0
                return Solution(True, pad_group(group), stats)
        check_deadline(deadline)
        group = decoupled_prm_solve(sub, config.prm_full.with_seed(seeds.next()), arc, config.sub_steps, deadline)
        if group is None:
            check_deadline(deadline)
            group = coupled_prm_solve(sub, config.prm_full.with_seed(seeds.next()), arc, config.sub_steps, deadline)
            if group is not None:
                _count_resolution(stats, "coupled")
        else:
            _count_resolution(stats, "decoupled")
        if group is None:
            return _failure(stats, t0, "from-scratch-failed")
        check_deadline(deadline)
        stats.planning_seconds = time.perf_counter() - t0
        return Solution(True, pad_group(group), stats)
    except TimeoutExceeded:
        return _failure(stats, t0, "timeout")
