"""2D bodies and exact collision predicates.

Two body types exist: discs (position plus heading, where heading never
affects contact) and planar serial arms with a fixed base whose links are
capsules (segment plus half-width).  Every contact predicate uses a strict
inequality, so exact tangency counts as collision-free; this keeps
randomized tie cases deterministic.

Scalar predicates are the public surface.  The ``*_batch`` helpers operate
on arrays of placements and back the hot loops in edge validation and
conflict scanning.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

TWO_PI = 2.0 * math.pi
_EPS2 = 1e-18  # squared-length threshold below which a segment is a point


def wrap_angle(theta):
    """Wrap an angle (scalar or array) into [-pi, pi)."""
    return (theta + math.pi) % TWO_PI - math.pi


# ---------------------------------------------------------------------------
# primitives


@dataclass(frozen=True)
class Vec2:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite Vec2 ({self.x}, {self.y})")

    def to_array(self) -> np.ndarray:
        return np.array((self.x, self.y), dtype=float)


@dataclass(frozen=True)
class Pose2:
    """Planar position plus heading; heading is stored wrapped to [-pi, pi)."""

    position: Vec2
    heading: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "heading", float(wrap_angle(self.heading)))


@dataclass(frozen=True)
class Segment:
    a: Vec2
    b: Vec2


@dataclass(frozen=True)
class Box:
    """Axis-aligned rectangle; degenerate boxes are rejected."""

    lo: Vec2
    hi: Vec2

    def __post_init__(self):
        if not (self.lo.x < self.hi.x and self.lo.y < self.hi.y):
            raise ValueError("box must satisfy lo < hi componentwise")

    def contains_box(self, other: "Box") -> bool:
        return (
            self.lo.x <= other.lo.x
            and self.lo.y <= other.lo.y
            and self.hi.x >= other.hi.x
            and self.hi.y >= other.hi.y
        )


@dataclass(frozen=True)
class Circle:
    center: Vec2
    radius: float

    def __post_init__(self):
        if not (self.radius > 0):
            raise ValueError("circle radius must be positive")


Obstacle = Union[Circle, Box]


@dataclass(frozen=True)
class Environment:
    boundary: Box
    obstacles: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        for ob in self.obstacles:
            if not _obstacle_touches_box(ob, self.boundary):
                raise ValueError(f"obstacle {ob} does not intersect the boundary")


def _obstacle_touches_box(ob: Obstacle, box: Box) -> bool:
    if isinstance(ob, Circle):
        d = _point_box_dist(ob.center.to_array(), box.lo.to_array(), box.hi.to_array())
        return bool(d <= ob.radius)
    return not (
        ob.hi.x < box.lo.x or ob.lo.x > box.hi.x or ob.hi.y < box.lo.y or ob.lo.y > box.hi.y
    )


# ---------------------------------------------------------------------------
# robot models


@dataclass(frozen=True)
class Disc:
    """Mobile disc robot; configurations are (x, y, heading)."""

    radius: float

    def __post_init__(self):
        if not (math.isfinite(self.radius) and self.radius > 0):
            raise ValueError("disc radius must be positive")


@dataclass(frozen=True)
class PlanarArm:
    """Fixed-base serial arm in the plane; links are capsules.

    Joint i rotates relative to the previous link, so the cumulative angle
    of link i is base heading plus the sum of joints 0..i.
    """

    base: Pose2
    link_lengths: tuple
    link_thickness: float

    def __post_init__(self):
        object.__setattr__(self, "link_lengths", tuple(float(v) for v in self.link_lengths))
        if len(self.link_lengths) == 0 or any(l <= 0 for l in self.link_lengths):
            raise ValueError("link lengths must be positive")
        if not (self.link_thickness > 0):
            raise ValueError("link thickness must be positive")

    @property
    def dof(self) -> int:
        return len(self.link_lengths)

    @property
    def reach(self) -> float:
        return float(sum(self.link_lengths))


RobotModel = Union[Disc, PlanarArm]


def footprint_radius(model: RobotModel) -> float:
    """Characteristic body half-width: disc radius or link thickness."""
    return model.radius if isinstance(model, Disc) else model.link_thickness


# ---------------------------------------------------------------------------
# placement normalization


def _disc_xy(placement) -> np.ndarray:
    if isinstance(placement, Pose2):
        return placement.position.to_array()
    vals = np.asarray(placement, dtype=float)
    if vals.shape[-1] not in (2, 3):
        raise ValueError(f"disc placement needs (x, y[, heading]); got shape {vals.shape}")
    return vals[..., :2]

def _arm_joints(model: PlanarArm, placement) -> np.ndarray:
    if isinstance(placement, Pose2):
        raise ValueError("arm placement must be a joint vector, not a pose")
    vals = np.asarray(placement, dtype=float)
    if vals.shape[-1] != model.dof:
        raise ValueError(f"arm expects {model.dof} joint angles, got {vals.shape[-1]}")
    return vals


# ---------------------------------------------------------------------------
# forward kinematics


def _fk_points(model: PlanarArm, joints: np.ndarray) -> np.ndarray:
    """Joint positions for a batch of joint vectors.

    joints (..., n) -> points (..., n + 1, 2), starting at the base.
    """
    joints = np.asarray(joints, dtype=float)
    ang = model.base.heading + np.cumsum(joints, axis=-1)
    lengths = np.asarray(model.link_lengths)
    steps = np.stack([np.cos(ang), np.sin(ang)], axis=-1) * lengths[..., None]
    base = model.base.position.to_array()
    pts = np.concatenate(
        [np.broadcast_to(base, joints.shape[:-1] + (1, 2)), base + np.cumsum(steps, axis=-2)],
        axis=-2,
    )
    return pts


def fk_planar_arm(model: PlanarArm, joints: Sequence[float]) -> list:
    """Link segments for one joint vector, base outward."""
    if not isinstance(model, PlanarArm):
        raise ValueError("fk_planar_arm requires a planar arm model")
    q = _arm_joints(model, joints)
    pts = _fk_points(model, q)
    return [
        Segment(Vec2(float(pts[i, 0]), float(pts[i, 1])), Vec2(float(pts[i + 1, 0]), float(pts[i + 1, 1])))
        for i in range(model.dof)
    ]


# ---------------------------------------------------------------------------
# distance kernels (broadcasting over leading axes)


def _dot(u, v):
    return np.sum(u * v, axis=-1)


def _point_seg_dist(p, a, b):
    ab = b - a
    denom = np.maximum(_dot(ab, ab), _EPS2)
    t = np.clip(_dot(p - a, ab) / denom, 0.0, 1.0)
    closest = a + t[..., None] * ab
    return np.linalg.norm(p - closest, axis=-1)


def _seg_seg_dist(p1, q1, p2, q2):
    """Minimum distance between closed segments [p1,q1] and [p2,q2]."""
    d1 = q1 - p1
    d2 = q2 - p2
    r = p1 - p2
    a = _dot(d1, d1)
    e = _dot(d2, d2)
    f = _dot(d2, r)
    c = _dot(d1, r)
    b = _dot(d1, d2)
    den = a * e - b * b
    safe_den = np.where(den > _EPS2, den, 1.0)
    s = np.where(den > _EPS2, np.clip((b * f - c * e) / safe_den, 0.0, 1.0), 0.0)
    safe_e = np.where(e > _EPS2, e, 1.0)
    safe_a = np.where(a > _EPS2, a, 1.0)
    t = (b * s + f) / safe_e
    t_cl = np.clip(t, 0.0, 1.0)
    s = np.where(t != t_cl, np.clip((b * t_cl - c) / safe_a, 0.0, 1.0), s)
    t = t_cl
    # degenerate segments: fall back to point-segment handling
    s = np.where(a <= _EPS2, 0.0, s)
    t = np.where(a <= _EPS2, np.where(e <= _EPS2, 0.0, np.clip(f / safe_e, 0.0, 1.0)), t)
    only_e = (e <= _EPS2) & (a > _EPS2)
    s = np.where(only_e, np.clip(-c / safe_a, 0.0, 1.0), s)
    t = np.where(only_e, 0.0, t)
    cp1 = p1 + s[..., None] * d1
    cp2 = p2 + t[..., None] * d2
    return np.linalg.norm(cp1 - cp2, axis=-1)


def _point_box_dist(p, lo, hi):
    d = np.maximum(np.maximum(lo - p, 0.0), p - hi)
    return np.linalg.norm(d, axis=-1)


def _box_corners(lo, hi):
    return np.array([[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]])


def _seg_box_dist(a, b, lo, hi):
    """Distance from segments (..., 2) to one axis-aligned box (0 if touching)."""
    corners = _box_corners(lo, hi)
    edges_a = corners
    edges_b = np.roll(corners, -1, axis=0)
    dists = np.stack(
        [_seg_seg_dist(a, b, np.broadcast_to(edges_a[k], a.shape), np.broadcast_to(edges_b[k], b.shape)) for k in range(4)],
        axis=-1,
    ).min(axis=-1)
    inside = np.all((a >= lo) & (a <= hi), axis=-1) | np.all((b >= lo) & (b <= hi), axis=-1)
    return np.where(inside, 0.0, dists)


def segment_segment_distance(s1: Segment, s2: Segment) -> float:
    """Exact minimum Euclidean distance between two closed segments."""
    return float(
        _seg_seg_dist(s1.a.to_array(), s1.b.to_array(), s2.a.to_array(), s2.b.to_array())
    )


# ---------------------------------------------------------------------------
# robot-robot collision


def _disc_disc_collide(xy_i, r_i, xy_j, r_j):
    return np.linalg.norm(xy_i - xy_j, axis=-1) < (r_i + r_j)


def _disc_arm_collide(xy, r, arm: PlanarArm, joints):
    pts = _fk_points(arm, joints)  # (..., n+1, 2)
    d = _point_seg_dist(xy[..., None, :], pts[..., :-1, :], pts[..., 1:, :])
    return d.min(axis=-1) < (r + arm.link_thickness)


def _arm_arm_collide(arm_i: PlanarArm, joints_i, arm_j: PlanarArm, joints_j):
    pi = _fk_points(arm_i, joints_i)
    pj = _fk_points(arm_j, joints_j)
    ai = pi[..., :-1, None, :]
    bi = pi[..., 1:, None, :]
    aj = pj[..., None, :-1, :]
    bj = pj[..., None, 1:, :]
    shape = np.broadcast_shapes(ai.shape, aj.shape)
    d = _seg_seg_dist(
        np.broadcast_to(ai, shape),
        np.broadcast_to(bi, shape),
        np.broadcast_to(aj, shape),
        np.broadcast_to(bj, shape),
    )
    return d.min(axis=(-1, -2)) < (arm_i.link_thickness + arm_j.link_thickness)


def body_points(model: RobotModel, vals: np.ndarray) -> np.ndarray:
    """Contact geometry for configuration rows: disc centers or arm joint points."""
    vals = np.asarray(vals, dtype=float)
    if isinstance(model, Disc):
        return vals[..., :2]
    return _fk_points(model, vals)


def points_collide_batch(model_i: RobotModel, pts_i: np.ndarray, model_j: RobotModel, pts_j: np.ndarray) -> np.ndarray:
    """Pairwise body overlap test on precomputed ``body_points`` output."""
    if isinstance(model_i, Disc) and isinstance(model_j, Disc):
        return _disc_disc_collide(pts_i, model_i.radius, pts_j, model_j.radius)
    if isinstance(model_i, Disc):
        d = _point_seg_dist(pts_i[..., None, :], pts_j[..., :-1, :], pts_j[..., 1:, :])
        return d.min(axis=-1) < (model_i.radius + model_j.link_thickness)
    if isinstance(model_j, Disc):
        d = _point_seg_dist(pts_j[..., None, :], pts_i[..., :-1, :], pts_i[..., 1:, :])
        return d.min(axis=-1) < (model_j.radius + model_i.link_thickness)
    ai = pts_i[..., :-1, None, :]
    bi = pts_i[..., 1:, None, :]
    aj = pts_j[..., None, :-1, :]
    bj = pts_j[..., None, 1:, :]
    shape = np.broadcast_shapes(ai.shape, aj.shape)
    d = _seg_seg_dist(
        np.broadcast_to(ai, shape),
        np.broadcast_to(bi, shape),
        np.broadcast_to(aj, shape),
        np.broadcast_to(bj, shape),
    )
    return d.min(axis=(-1, -2)) < (model_i.link_thickness + model_j.link_thickness)


def pair_collide_batch(model_i: RobotModel, vals_i: np.ndarray, model_j: RobotModel, vals_j: np.ndarray) -> np.ndarray:
    """Elementwise collision test for aligned batches of configurations.

    vals_* carry raw configuration rows: (x, y, heading) for discs, joint
    vectors for arms.  Returns a boolean array over the leading axes.
    """
    if isinstance(model_i, Disc) and isinstance(model_j, Disc):
        return _disc_disc_collide(vals_i[..., :2], model_i.radius, vals_j[..., :2], model_j.radius)
    if isinstance(model_i, Disc):
        return _disc_arm_collide(vals_i[..., :2], model_i.radius, model_j, vals_j)
    if isinstance(model_j, Disc):
        return _disc_arm_collide(vals_j[..., :2], model_j.radius, model_i, vals_i)
    return _arm_arm_collide(model_i, vals_i, model_j, vals_j)


def robots_collide(model_i: RobotModel, placement_i, model_j: RobotModel, placement_j) -> bool:
    """True iff the two bodies overlap (tangency is collision-free)."""
    vi = _disc_xy(placement_i) if isinstance(model_i, Disc) else _arm_joints(model_i, placement_i)
    vj = _disc_xy(placement_j) if isinstance(model_j, Disc) else _arm_joints(model_j, placement_j)
    return bool(pair_collide_batch(model_i, vi, model_j, vj))


# ---------------------------------------------------------------------------
# robot-environment collision


def env_free_batch(model: RobotModel, vals: np.ndarray, env: Environment) -> np.ndarray:
    """True where the body stays inside the boundary and clear of obstacles."""
    vals = np.asarray(vals, dtype=float)
    lo = env.boundary.lo.to_array()
    hi = env.boundary.hi.to_array()
    if isinstance(model, Disc):
        xy = vals[..., :2]
        r = model.radius
        free = np.all((xy >= lo + r) & (xy <= hi - r), axis=-1)
        for ob in env.obstacles:
            if isinstance(ob, Circle):
                hit = np.linalg.norm(xy - ob.center.to_array(), axis=-1) < (r + ob.radius)
            else:
                hit = _point_box_dist(xy, ob.lo.to_array(), ob.hi.to_array()) < r
            free &= ~hit
        return free
    th = model.link_thickness
    pts = _fk_points(model, vals)  # (..., n+1, 2)
    free = np.all((pts >= lo + th) & (pts <= hi - th), axis=(-1, -2))
    seg_a = pts[..., :-1, :]
    seg_b = pts[..., 1:, :]
    for ob in env.obstacles:
        if isinstance(ob, Circle):
            d = _point_seg_dist(ob.center.to_array(), seg_a, seg_b)
            hit = d.min(axis=-1) < (th + ob.radius)
        else:
            d = _seg_box_dist(seg_a, seg_b, ob.lo.to_array(), ob.hi.to_array())
            hit = d.min(axis=-1) < th
        free &= ~hit
    return free


def robot_env_collides(model: RobotModel, placement, env: Environment) -> bool:
    """True iff the body hits an obstacle or leaves the boundary."""
    vals = _disc_xy(placement) if isinstance(model, Disc) else _arm_joints(model, placement)
    return not bool(env_free_batch(model, vals, env))
