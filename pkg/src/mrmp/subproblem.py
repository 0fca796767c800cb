"""Local subproblems built around path conflicts.

A subproblem restricts planning to the conflicting robots, a workspace
box around their paths near the conflict, and short queries taken from
the paths a window of timesteps before and after it.  On failure the
window and box grow geometrically until the subproblem covers the whole
problem (saturation), which bounds retries.

For disc groups the box is a hard planning boundary; for groups with
fixed-base arms the box only clips obstacles, since joint limits stay
global and the bases cannot move.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .cspace import CBoundary, Configuration, SampleBox, full_joint_box
from .geometry import Box, Disc, Environment, RobotModel, Vec2, body_points, footprint_radius
from .paths import Conflict, TimedPath


@dataclass(frozen=True)
class SubproblemParams:
    window: int = 8
    boundary_inflation: Optional[float] = None  # None: 2x the largest footprint
    growth_factor: float = 2.0
    max_generations: int = 6

    def __post_init__(self):
        if self.window <= 0 or self.max_generations <= 0:
            raise ValueError("window and max_generations must be positive")
        if self.growth_factor <= 1.0:
            raise ValueError("growth_factor must exceed 1")
        if self.boundary_inflation is not None and self.boundary_inflation <= 0:
            raise ValueError("boundary_inflation must be positive")

    def inflation_for(self, models: Sequence[RobotModel]) -> float:
        if self.boundary_inflation is not None:
            return self.boundary_inflation
        return 2.0 * max(footprint_radius(m) for m in models)


@dataclass(frozen=True)
class Subproblem:
    robots: tuple  # global robot indices, ascending
    models: tuple
    queries: tuple  # per robot (start, goal) Configuration
    env_local: Environment
    cboundary: CBoundary
    t_lo: int
    t_hi: int
    center_t: float
    half_window: float
    generation: int
    saturated: bool

    @property
    def window(self):
        return (self.t_lo, self.t_hi)


def _group_workspace_box(models, window_configs, pad: float):
    """Bounding box of the group's body footprints plus padding."""
    lo = np.array([math.inf, math.inf])
    hi = np.array([-math.inf, -math.inf])
    for model, cfgs in zip(models, window_configs):
        pts = body_points(model, cfgs).reshape(-1, 2)
        r = footprint_radius(model)
        lo = np.minimum(lo, pts.min(axis=0) - r)
        hi = np.maximum(hi, pts.max(axis=0) + r)
    return lo - pad, hi + pad


def _clip_obstacles(env: Environment, lo: np.ndarray, hi: np.ndarray):
    box = Box(Vec2(float(lo[0]), float(lo[1])), Vec2(float(hi[0]), float(hi[1])))
    from .geometry import _obstacle_touches_box

    return tuple(ob for ob in env.obstacles if _obstacle_touches_box(ob, box))


def _from_window(
    robots: Sequence[int],
    paths: Sequence[TimedPath],
    models: Sequence[RobotModel],
    env: Environment,
    params: SubproblemParams,
    center_t: float,
    half_window: float,
    generation: int,
) -> Subproblem:
    by_index = {p.robot_index: p for p in paths}
    horizon = paths[0].horizon
    robots = tuple(sorted(robots))
    group_models = tuple(models[r] for r in robots)
    t_lo = max(0, int(math.floor(center_t - half_window)))
    t_hi = min(horizon, int(math.ceil(center_t + half_window)))
    if t_hi <= t_lo:
        raise ValueError("conflict window is degenerate; paths too short")

    queries = []
    window_cfgs = []
    for r in robots:
        p = by_index[r]
        queries.append(
            (Configuration(p.configs[t_lo].copy(), r), Configuration(p.configs[t_hi].copy(), r))
        )
        window_cfgs.append(p.configs[t_lo : t_hi + 1])

    pad = params.inflation_for(group_models) * params.growth_factor ** generation
    lo, hi = _group_workspace_box(group_models, window_cfgs, pad)

    env_lo = env.boundary.lo.to_array()
    env_hi = env.boundary.hi.to_array()
    all_disc = all(isinstance(m, Disc) for m in group_models)
    covers_env = bool(np.all(lo <= env_lo) and np.all(hi >= env_hi))
    saturated = t_lo == 0 and t_hi == horizon and (covers_env or not all_disc)

    clip_lo = np.maximum(lo, env_lo)
    clip_hi = np.minimum(hi, env_hi)
    if saturated:
        env_local = env
        boxes = tuple(
            SampleBox(env_lo, env_hi) if isinstance(m, Disc) else full_joint_box(m)
            for m in group_models
        )
    else:
        obstacles = _clip_obstacles(env, clip_lo, clip_hi)
        if all_disc:
            boundary = Box(Vec2(*clip_lo), Vec2(*clip_hi))
        else:
            boundary = env.boundary
        env_local = Environment(boundary, obstacles)
        boxes = tuple(
            SampleBox(clip_lo, clip_hi) if isinstance(m, Disc) else full_joint_box(m)
            for m in group_models
        )
    return Subproblem(
        robots=robots,
        models=group_models,
        queries=tuple(queries),
        env_local=env_local,
        cboundary=CBoundary(boxes),
        t_lo=t_lo,
        t_hi=t_hi,
        center_t=float(center_t),
        half_window=float(half_window),
        generation=generation,
        saturated=saturated,
    )


def create_subproblem(
    conflict: Conflict,
    paths: Sequence[TimedPath],
    models: Sequence[RobotModel],
    env: Environment,
    params: SubproblemParams,
) -> Subproblem:
    """Local problem around a conflict: two robots, short queries, tight box."""
    return _from_window(
        (conflict.robot_i, conflict.robot_j),
        paths,
        models,
        env,
        params,
        center_t=float(conflict.t),
        half_window=float(params.window),
        generation=0,
    )


def expand_subproblem(
    sub: Subproblem,
    paths: Sequence[TimedPath],
    models: Sequence[RobotModel],
    env: Environment,
    params: SubproblemParams,
) -> Optional[Subproblem]:
    """Widen the window and box by the growth factor.

    Returns the grown subproblem (marked saturated once it covers the full
    problem) or None when the input is already saturated.
    """
    if sub.generation >= params.max_generations:
        raise ValueError(f"subproblem already at generation {sub.generation}")
    if sub.saturated:
        return None
    return _from_window(
        sub.robots,
        paths,
        models,
        env,
        params,
        center_t=sub.center_t,
        half_window=sub.half_window * params.growth_factor,
        generation=sub.generation + 1,
    )


def merge_groups(
    sub_a: Subproblem,
    sub_b: Subproblem,
    paths: Sequence[TimedPath],
    models: Sequence[RobotModel],
    env: Environment,
    params: SubproblemParams,
) -> Subproblem:
    """Union of the two groups over the hull of their time windows."""
    robots = tuple(sorted(set(sub_a.robots) | set(sub_b.robots)))
    t_lo = min(sub_a.t_lo, sub_b.t_lo)
    t_hi = max(sub_a.t_hi, sub_b.t_hi)
    center = (t_lo + t_hi) / 2.0
    half = max((t_hi - t_lo) / 2.0, 1.0)
    return _from_window(robots, paths, models, env, params, center, half, generation=0)
