"""Timed paths, conflict detection, and local-solution splicing.

Time is an abstract grid: one timestep per index, with per-step motion
bounded by the discretization arc step.  A conflict is the earliest
timestep at which two robots' bodies overlap while tracking their paths,
with interpolated sub-step checks to catch pass-through between steps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import cspace
from .cspace import Configuration, RobotSpace, single_space
from .geometry import Environment, RobotModel, body_points, env_free_batch, points_collide_batch

ENDPOINT_TOL = 1e-9


@dataclass(eq=False)
class TimedPath:
    """One robot's configuration per timestep t = 0, 1, ..., horizon."""

    robot_index: int
    configs: np.ndarray  # (horizon + 1, dof)

    def __post_init__(self):
        arr = np.asarray(self.configs, dtype=float)
        if arr.ndim != 2 or arr.shape[0] == 0:
            raise ValueError("a timed path needs at least one configuration row")
        arr = arr.copy()
        arr.setflags(write=False)
        self.configs = arr

    @property
    def horizon(self) -> int:
        return self.configs.shape[0] - 1

    def config_at(self, t: int) -> np.ndarray:
        return self.configs[t]


@dataclass(frozen=True)
class Conflict:
    robot_i: int
    robot_j: int
    c_i: Configuration
    c_j: Configuration
    t: int


@dataclass
class SolveStats:
    planning_seconds: float = 0.0
    conflicts_resolved: int = 0
    db_hits: int = 0
    db_repairs: int = 0
    decoupled_hits: int = 0
    coupled_hits: int = 0
    resolutions: list = field(default_factory=list)
    failure_reason: str = ""

    @property
    def fallbacks(self) -> int:
        return self.decoupled_hits + self.coupled_hits


@dataclass
class Solution:
    success: bool
    paths: Optional[list]
    stats: SolveStats


# ---------------------------------------------------------------------------
# discretization


def _resample_polyline(space: RobotSpace, waypoints: np.ndarray, arc_step: float) -> np.ndarray:
    """Uniform arc-length resampling of a waypoint polyline, endpoints exact."""
    w = np.asarray(waypoints, dtype=float)
    if w.ndim != 2 or w.shape[0] == 0:
        raise ValueError("empty waypoint sequence")
    if arc_step <= 0:
        raise ValueError("arc step must be positive")
    if w.shape[0] == 1:
        return w.copy()
    seg_len = cspace.flat_dist(space, w[:-1], w[1:])
    total = float(seg_len.sum())
    if total <= 1e-12:
        return w[:1].copy()
    n = max(1, int(math.ceil(total / arc_step - 1e-9)))
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    targets = np.linspace(0.0, total, n + 1)
    seg_idx = np.clip(np.searchsorted(cum, targets, side="right") - 1, 0, len(seg_len) - 1)
    denom = np.where(seg_len[seg_idx] > 1e-15, seg_len[seg_idx], 1.0)
    frac = np.clip((targets - cum[seg_idx]) / denom, 0.0, 1.0)
    deltas = cspace.flat_delta(space, w[:-1], w[1:])
    pts = w[seg_idx] + frac[:, None] * deltas[seg_idx]
    mask = cspace._space_angular(space)
    pts[:, mask] = cspace.wrap_angle(pts[:, mask])
    pts[0] = w[0]
    pts[-1] = w[-1]
    return pts


def discretize(raw: Sequence, model: RobotModel, arc_step: float, robot_index: int | None = None) -> TimedPath:
    """Resample a configuration sequence onto the uniform timestep grid."""
    if len(raw) == 0:
        raise ValueError("cannot discretize an empty configuration sequence")
    if isinstance(raw[0], Configuration):
        idx = raw[0].robot_index if robot_index is None else robot_index
        arr = np.stack([c.values for c in raw])
    else:
        idx = 0 if robot_index is None else robot_index
        arr = np.asarray(raw, dtype=float)
    space = single_space(model, cspace._dummy_box(model), idx)
    return TimedPath(idx, _resample_polyline(space, arr, arc_step))


def discretize_composite(space: RobotSpace, waypoints: np.ndarray, arc_step: float) -> list:
    """Resample a composite polyline and split it into synchronized paths."""
    pts = _resample_polyline(space, waypoints, arc_step)
    return [
        TimedPath(idx, pts[:, sl]) for idx, sl in zip(space.indices, space.slices())
    ]


def pad_to(path: TimedPath, horizon: int) -> TimedPath:
    """Repeat the goal configuration until the path spans the horizon."""
    if horizon < path.horizon:
        raise ValueError(f"cannot pad to {horizon}: path already spans {path.horizon}")
    if horizon == path.horizon:
        return path
    tail = np.repeat(path.configs[-1:], horizon - path.horizon, axis=0)
    return TimedPath(path.robot_index, np.concatenate([path.configs, tail]))


def pad_group(paths: Sequence[TimedPath]) -> list:
    horizon = max(p.horizon for p in paths)
    return [pad_to(p, horizon) for p in paths]


# ---------------------------------------------------------------------------
# conflict detection


def substep_series(path: TimedPath, model: RobotModel, sub_steps: int) -> np.ndarray:
    """Configs interpolated at sub_steps points per timestep, endpoints shared.

    Returns (horizon * sub_steps + 1, dof); a single-config path returns
    itself unchanged.
    """
    cfg = path.configs
    T = path.horizon
    if T == 0:
        return cfg.copy()
    space = single_space(model, cspace._dummy_box(model), path.robot_index)
    deltas = cspace.flat_delta(space, cfg[:-1], cfg[1:])
    fr = np.arange(sub_steps) / sub_steps
    block = cfg[:-1, None, :] + fr[None, :, None] * deltas[:, None, :]
    series = np.concatenate([block.reshape(T * sub_steps, -1), cfg[-1:]], axis=0)
    mask = cspace.angular_mask(model)
    series[:, mask] = cspace.wrap_angle(series[:, mask])
    return series


def find_first_conflict(paths: Sequence[TimedPath], models: Sequence[RobotModel], sub_steps: int = 4) -> Optional[Conflict]:
    """Earliest pairwise collision along the common timestep grid.

    Scans timesteps in order with ``sub_steps`` interpolated checks per
    step (endpoints included); ties at the same timestep resolve to the
    smallest (robot_i, robot_j) pair.  Paths must share one horizon.
    """
    if len(paths) != len(models):
        raise ValueError("paths and models must align")
    horizons = {p.horizon for p in paths}
    if len(horizons) > 1:
        raise ValueError(f"paths must be padded to a common horizon, got {sorted(horizons)}")
    T = horizons.pop() if horizons else 0
    series = [substep_series(p, m, sub_steps) for p, m in zip(paths, models)]
    pts = [body_points(m, s) for m, s in zip(models, series)]
    best = None  # (t, i, j, sub_index)
    for i in range(len(paths)):
        for j in range(i + 1, len(paths)):
            hit = points_collide_batch(models[i], pts[i], models[j], pts[j])
            if not hit.any():
                continue
            f = int(np.argmax(hit))
            t = 0 if T == 0 else min(f // sub_steps, T - 1)
            cand = (t, i, j, f)
            if best is None or cand[:3] < best[:3]:
                best = cand
    if best is None:
        return None
    t, i, j, f = best
    ci = Configuration(series[i][f], paths[i].robot_index)
    cj = Configuration(series[j][f], paths[j].robot_index)
    return Conflict(paths[i].robot_index, paths[j].robot_index, ci, cj, t)


def paths_env_free(paths: Sequence[TimedPath], models: Sequence[RobotModel], env: Environment, sub_steps: int = 4) -> bool:
    """True iff every interpolated configuration clears the environment."""
    for p, m in zip(paths, models):
        if not np.all(env_free_batch(m, substep_series(p, m, sub_steps), env)):
            return False
    return True


def paths_valid(paths: Sequence[TimedPath], models: Sequence[RobotModel], env: Environment, sub_steps: int = 4) -> bool:
    """Combined robot-robot and robot-environment validity scan."""
    return paths_env_free(paths, models, env, sub_steps) and find_first_conflict(paths, models, sub_steps) is None


# ---------------------------------------------------------------------------
# splicing


def splice(full: TimedPath, local: TimedPath, t_start: int, t_end: int) -> TimedPath:
    """Replace the window [t_start, t_end] of ``full`` with ``local``.

    The local path's first and last configurations must match the window
    endpoints exactly (within 1e-9 per component).
    """
    if not (0 <= t_start < t_end <= full.horizon):
        raise ValueError(f"window [{t_start}, {t_end}] outside path horizon {full.horizon}")
    if np.abs(local.configs[0] - full.configs[t_start]).max() > ENDPOINT_TOL:
        raise ValueError("local path start does not match the window start")
    if np.abs(local.configs[-1] - full.configs[t_end]).max() > ENDPOINT_TOL:
        raise ValueError("local path end does not match the window end")
    merged = np.concatenate([full.configs[:t_start], local.configs, full.configs[t_end + 1 :]])
    return TimedPath(full.robot_index, merged)
