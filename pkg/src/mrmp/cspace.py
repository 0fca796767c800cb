"""Per-robot and composite configuration spaces.

A disc configuration is (x, y, heading); an arm configuration is its joint
vector.  The metric keeps meter units throughout: heading differences are
weighted by the disc radius and joint differences by the arm's total
reach, so nearest-neighbour comparisons are dimensionally consistent.

The ``flat_*`` helpers work on raw stacked arrays (one row per composite
configuration) and are what the roadmap and conflict machinery call; the
``Configuration`` level functions are thin wrappers over them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import (
    Disc,
    Environment,
    PlanarArm,
    RobotModel,
    env_free_batch,
    footprint_radius,
    pair_collide_batch,
    wrap_angle,
)

PI = math.pi


def dof(model: RobotModel) -> int:
    return 3 if isinstance(model, Disc) else model.dof


def angular_mask(model: RobotModel) -> np.ndarray:
    if isinstance(model, Disc):
        return np.array([False, False, True])
    return np.ones(model.dof, dtype=bool)


def metric_weights(model: RobotModel) -> np.ndarray:
    if isinstance(model, Disc):
        return np.array([1.0, 1.0, model.radius])
    return np.full(model.dof, model.reach)


def default_step(models: Sequence[RobotModel]) -> float:
    """Resolution for edge validation: half the smallest body half-width."""
    return min(footprint_radius(m) for m in models) / 2.0


@dataclass(frozen=True, eq=False)
class Configuration:
    """One robot's configuration; angular components wrapped to [-pi, pi)."""

    values: np.ndarray
    robot_index: int = 0

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if not np.all(np.isfinite(vals)):
            raise ValueError("configuration values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)


def make_config(model: RobotModel, values, robot_index: int = 0) -> Configuration:
    vals = np.array(values, dtype=float)
    if vals.shape != (dof(model),):
        raise ValueError(f"expected {dof(model)} values, got shape {vals.shape}")
    m = angular_mask(model)
    vals[m] = wrap_angle(vals[m])
    return Configuration(vals, robot_index)


@dataclass(frozen=True, eq=False)
class CompositeConfiguration:
    """Per-robot configurations ordered by strictly increasing robot index."""

    configs: tuple

    def __post_init__(self):
        object.__setattr__(self, "configs", tuple(self.configs))
        idx = [c.robot_index for c in self.configs]
        if any(a >= b for a, b in zip(idx, idx[1:])):
            raise ValueError(f"robot indices must strictly increase, got {idx}")


@dataclass(frozen=True)
class SampleBox:
    """Axis-aligned sampling region; may be degenerate in any dimension.

    Covers the positional dimensions of a disc (x, y) or the full joint
    vector of an arm.
    """

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        if lo.shape != hi.shape or np.any(lo > hi):
            raise ValueError("sample box needs lo <= hi componentwise")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)


@dataclass(frozen=True)
class CBoundary:
    """Per-robot sampling boxes for a robot group."""

    boxes: tuple

    def __post_init__(self):
        object.__setattr__(self, "boxes", tuple(self.boxes))


@dataclass(frozen=True)
class RobotSpace:
    """Ordered robot group plus its sampling region; the planning space."""

    indices: tuple
    models: tuple
    boundary: CBoundary

    def __post_init__(self):
        object.__setattr__(self, "indices", tuple(self.indices))
        object.__setattr__(self, "models", tuple(self.models))
        if not (len(self.indices) == len(self.models) == len(self.boundary.boxes)):
            raise ValueError("indices, models and boxes must align")

    @property
    def dofs(self):
        return [dof(m) for m in self.models]

    @property
    def total_dof(self) -> int:
        return sum(self.dofs)

    @property
    def offsets(self):
        offs = [0]
        for d in self.dofs:
            offs.append(offs[-1] + d)
        return offs

    def slices(self):
        offs = self.offsets
        return [slice(offs[i], offs[i + 1]) for i in range(len(self.models))]


def single_space(model: RobotModel, box: SampleBox, robot_index: int = 0) -> RobotSpace:
    return RobotSpace((robot_index,), (model,), CBoundary((box,)))


def full_joint_box(model: PlanarArm) -> SampleBox:
    n = model.dof
    return SampleBox(np.full(n, -PI), np.full(n, PI))


def _space_weights(space: RobotSpace) -> np.ndarray:
    return np.concatenate([metric_weights(m) for m in space.models])


def _space_angular(space: RobotSpace) -> np.ndarray:
    return np.concatenate([angular_mask(m) for m in space.models])


# ---------------------------------------------------------------------------
# flat-array operations


def flat_delta(space: RobotSpace, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """b - a with angular components taken along the shorter arc."""
    d = np.asarray(b, dtype=float) - np.asarray(a, dtype=float)
    m = _space_angular(space)
    d[..., m] = wrap_angle(d[..., m])
    return d


def flat_dist(space: RobotSpace, a: np.ndarray, b: np.ndarray):
    d = flat_delta(space, a, b) * _space_weights(space)
    return np.linalg.norm(d, axis=-1)


def flat_interp(space: RobotSpace, a: np.ndarray, b: np.ndarray, s) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    delta = flat_delta(space, a, b)
    pts = np.asarray(a, dtype=float) + s[..., None] * delta
    m = _space_angular(space)
    pts[..., m] = wrap_angle(pts[..., m])
    return pts


def flat_sample(space: RobotSpace, rng: np.random.Generator, n: int) -> np.ndarray:
    """Uniform samples inside the group's boxes; disc headings span [-pi, pi)."""
    cols = []
    for model, box in zip(space.models, space.boundary.boxes):
        if isinstance(model, Disc):
            xy = rng.uniform(box.lo, box.hi, size=(n, 2))
            th = rng.uniform(-PI, PI, size=(n, 1))
            cols.append(np.concatenate([xy, th], axis=1))
        else:
            cols.append(rng.uniform(box.lo, box.hi, size=(n, model.dof)))
    return np.concatenate(cols, axis=1)


def flat_env_free(space: RobotSpace, pts: np.ndarray, env: Environment) -> np.ndarray:
    pts = np.asarray(pts, dtype=float)
    free = np.ones(pts.shape[:-1], dtype=bool)
    for model, sl in zip(space.models, space.slices()):
        free &= env_free_batch(model, pts[..., sl], env)
    return free


def flat_pairs_free(space: RobotSpace, pts: np.ndarray) -> np.ndarray:
    pts = np.asarray(pts, dtype=float)
    free = np.ones(pts.shape[:-1], dtype=bool)
    sls = space.slices()
    for i in range(len(space.models)):
        for j in range(i + 1, len(space.models)):
            free &= ~pair_collide_batch(
                space.models[i], pts[..., sls[i]], space.models[j], pts[..., sls[j]]
            )
    return free


def flat_in_boxes(space: RobotSpace, pts: np.ndarray) -> np.ndarray:
    """True where positional/joint components lie inside the sampling boxes."""
    pts = np.asarray(pts, dtype=float)
    ok = np.ones(pts.shape[:-1], dtype=bool)
    for model, box, sl in zip(space.models, space.boundary.boxes, space.slices()):
        block = pts[..., sl]
        vals = block[..., :2] if isinstance(model, Disc) else block
        ok &= np.all((vals >= box.lo) & (vals <= box.hi), axis=-1)
    return ok


def flat_valid(space: RobotSpace, pts: np.ndarray, env: Environment) -> np.ndarray:
    return flat_env_free(space, pts, env) & flat_pairs_free(space, pts)


def flat_edge_valid(
    space: RobotSpace,
    a: np.ndarray,
    b: np.ndarray,
    env: Environment,
    step: float,
    others=(),
) -> bool:
    """Resolution-based straight-edge check, endpoints included.

    ``others`` holds static (model, values) bodies outside the group that
    every interpolated point must also clear.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    length = float(flat_dist(space, a, b))
    n = max(1, int(math.ceil(length / step - 1e-12)))
    pts = flat_interp(space, a, b, np.linspace(0.0, 1.0, n + 1))
    ok = flat_valid(space, pts, env)
    if not np.all(ok):
        return False
    for omodel, ovals in others:
        for model, sl in zip(space.models, space.slices()):
            hit = pair_collide_batch(
                model, pts[..., sl], omodel, np.broadcast_to(ovals, pts[..., :1].shape[:-1] + (len(ovals),))
            )
            if np.any(hit):
                return False
    return True


# ---------------------------------------------------------------------------
# Configuration-level API


def sample(model: RobotModel, box: SampleBox, rng: np.random.Generator, robot_index: int = 0) -> Configuration:
    """One uniform sample from the region (heading uniform over its wrap range)."""
    space = single_space(model, box, robot_index)
    vals = flat_sample(space, rng, 1)[0]
    return Configuration(vals, robot_index)


def distance(a: Configuration, b: Configuration, model: RobotModel) -> float:
    if a.values.shape != b.values.shape:
        raise ValueError("configuration size mismatch")
    if a.values.shape != (dof(model),):
        raise ValueError("configuration does not match the robot model")
    space = single_space(model, _dummy_box(model))
    return float(flat_dist(space, a.values, b.values))


def interpolate(a: Configuration, b: Configuration, s: float, model: RobotModel) -> Configuration:
    if not (0.0 <= s <= 1.0):
        raise ValueError(f"interpolation parameter {s} outside [0, 1]")
    if a.values.shape != b.values.shape:
        raise ValueError("configuration size mismatch")
    space = single_space(model, _dummy_box(model))
    vals = flat_interp(space, a.values, b.values, np.array([s]))[0]
    return Configuration(vals, a.robot_index)


def edge_valid(
    a: Configuration,
    b: Configuration,
    model: RobotModel,
    env: Environment,
    others=(),
    step: float | None = None,
) -> bool:
    """True iff the straight edge a->b is collision-free at the resolution.

    ``others`` is a list of (model, Configuration) static bodies.
    """
    if a.values.shape != b.values.shape:
        raise ValueError("configuration size mismatch")
    step = default_step([model]) if step is None else step
    space = single_space(model, _dummy_box(model))
    flat_others = [(m, c.values) for m, c in others]
    return flat_edge_valid(space, a.values, b.values, env, step, flat_others)


def _dummy_box(model: RobotModel) -> SampleBox:
    n = 2 if isinstance(model, Disc) else model.dof
    return SampleBox(np.zeros(n), np.zeros(n))


# ---------------------------------------------------------------------------
# composite operations


def _composite_space(a: CompositeConfiguration, models) -> RobotSpace:
    boxes = tuple(_dummy_box(m) for m in models)
    return RobotSpace(tuple(c.robot_index for c in a.configs), tuple(models), CBoundary(boxes))


def flatten(c: CompositeConfiguration) -> np.ndarray:
    return np.concatenate([cfg.values for cfg in c.configs])


def unflatten(space: RobotSpace, vals: np.ndarray) -> CompositeConfiguration:
    return CompositeConfiguration(
        tuple(
            Configuration(vals[sl], idx)
            for sl, idx in zip(space.slices(), space.indices)
        )
    )


def _check_groups(a: CompositeConfiguration, b: CompositeConfiguration, models) -> None:
    if len(a.configs) != len(b.configs) or len(a.configs) != len(models):
        raise ValueError("composite configurations cover different groups")
    for ca, cb in zip(a.configs, b.configs):
        if ca.robot_index != cb.robot_index:
            raise ValueError("composite configurations cover different robots")


def composite_distance(a: CompositeConfiguration, b: CompositeConfiguration, models) -> float:
    _check_groups(a, b, models)
    space = _composite_space(a, models)
    return float(flat_dist(space, flatten(a), flatten(b)))


def composite_interpolate(
    a: CompositeConfiguration, b: CompositeConfiguration, s: float, models
) -> CompositeConfiguration:
    if not (0.0 <= s <= 1.0):
        raise ValueError(f"interpolation parameter {s} outside [0, 1]")
    _check_groups(a, b, models)
    space = _composite_space(a, models)
    vals = flat_interp(space, flatten(a), flatten(b), np.array([s]))[0]
    return unflatten(space, vals)


def composite_edge_valid(
    a: CompositeConfiguration,
    b: CompositeConfiguration,
    models,
    env: Environment,
    step: float | None = None,
) -> bool:
    """Straight composite edge check including all intra-group robot pairs."""
    _check_groups(a, b, models)
    step = default_step(models) if step is None else step
    space = _composite_space(a, models)
    return flat_edge_valid(space, flatten(a), flatten(b), env, step)
