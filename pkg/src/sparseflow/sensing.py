"""Multizone ToF sensing: depth frames to base-frame point clouds.

A sensor reports an 8x8 grid of absolute distances along fixed zone rays.
Frames are converted to points with the sensor pose, merged across the rig
into one cloud per time step, and cleaned of returns from the robot's own
body by ray casting against its primitive shape.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping

import numpy as np

from .cloud import PointCloud
from .geometry import RigidTransform
from .primitives import Primitive, first_hit, surface_distance, transformed

DEFAULT_SELF_FILTER_MARGIN = 0.02


class UnitMismatch(ValueError):
    """Depth values are inconsistent with the configured sensing range."""


class MissingExtrinsics(KeyError):
    """A frame references a sensor or link with no known pose."""


@dataclass(frozen=True)
class TofIntrinsics:
    """Zone grid geometry and range limits of one multizone ToF device."""

    grid_rows: int = 8
    grid_cols: int = 8
    diagonal_fov_deg: float = 65.0
    min_range: float = 0.02
    max_range: float = 4.0

    def __post_init__(self):
        if self.grid_rows < 1 or self.grid_cols < 1:
            raise ValueError("zone grid must be at least 1x1")
        if not 0.0 < self.diagonal_fov_deg < 180.0:
            raise ValueError("diagonal FoV must be in (0, 180) degrees")
        if not 0.0 < self.min_range < self.max_range:
            raise ValueError("require 0 < min_range < max_range")

    @property
    def zone_count(self) -> int:
        return self.grid_rows * self.grid_cols


@dataclass(frozen=True)
class TofExtrinsics:
    """Mounting of one sensor: pose of the sensor frame in its mount link."""

    sensor_id: str
    link_id: str
    mount_pose: RigidTransform


@dataclass(frozen=True)
class DepthFrame:
    """One sensor's zone measurements at a discrete step.

    Depths are integer millimeters (the device's native unit); ``valid``
    flags zones with a usable return.
    """

    sensor_id: str
    step: int
    timestamp: float
    depth_mm: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        depth = np.asarray(self.depth_mm, dtype=np.int64).reshape(-1)
        valid = np.asarray(self.valid, dtype=bool).reshape(-1)
        if depth.shape != valid.shape:
            raise ValueError("depth_mm and valid must have equal lengths")
        depth.setflags(write=False)
        valid.setflags(write=False)
        object.__setattr__(self, "depth_mm", depth)
        object.__setattr__(self, "valid", valid)


@dataclass(frozen=True)
class RobotShape:
    """Robot body as primitives attached to named links: (link_id, primitive)."""

    parts: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple((str(link), prim) for link, prim in self.parts))

    def world_primitives(self, link_poses: Mapping[str, RigidTransform]) -> list[Primitive]:
        prims = []
        for link_id, prim in self.parts:
            if link_id not in link_poses:
                raise MissingExtrinsics(f"no pose for robot link {link_id!r}")
            prims.append(transformed(prim, link_poses[link_id]))
        return prims


@lru_cache(maxsize=8)
def _zone_directions(rows: int, cols: int, diagonal_fov_deg: float) -> np.ndarray:
    # Square FoV: the per-axis half-angle is chosen so the grid corner sits
    # exactly at diagonal_fov/2 off axis under the direction-cosine model
    # u = sin(a_col), v = sin(a_row), w = sqrt(1 - u^2 - v^2).
    half = math.asin(math.sin(math.radians(diagonal_fov_deg) / 2.0) / math.sqrt(2.0))
    row_angles = half * (2.0 * np.arange(rows) - (rows - 1)) / rows
    col_angles = half * (2.0 * np.arange(cols) - (cols - 1)) / cols
    u = np.sin(col_angles)[None, :].repeat(rows, axis=0)
    v = np.sin(row_angles)[:, None].repeat(cols, axis=1)
    w = np.sqrt(1.0 - u * u - v * v)
    dirs = np.stack([u.ravel(), v.ravel(), w.ravel()], axis=1)
    dirs.setflags(write=False)
    return dirs


def zone_directions(intr: TofIntrinsics) -> np.ndarray:
    """Unit ray directions of all zones in the sensor frame, row-major.

    The optical axis is +z; zone (r, c) maps to index r * grid_cols + c.
    """
    return _zone_directions(intr.grid_rows, intr.grid_cols, intr.diagonal_fov_deg)


def frame_to_points(
    frame: DepthFrame,
    intr: TofIntrinsics,
    sensor_pose_in_base: RigidTransform,
) -> PointCloud:
    """Convert one depth frame to base-frame points.

    Invalid zones produce no point. Point ids are the zone indices, so the
    output can be matched back to the measurement grid. Raises UnitMismatch
    when a valid depth converts outside [min_range, max_range] (tolerating
    the 0.5 mm quantization of the integer depths).
    """
    if frame.depth_mm.shape[0] != intr.zone_count:
        raise ValueError(
            f"frame has {frame.depth_mm.shape[0]} zones, intrinsics expect {intr.zone_count}"
        )
    keep = np.flatnonzero(frame.valid)
    if keep.size == 0:
        return PointCloud.empty()
    depth_m = frame.depth_mm[keep] * 1e-3
    tol = 5.1e-4
    if depth_m.min() < intr.min_range - tol or depth_m.max() > intr.max_range + tol:
        bad = depth_m[(depth_m < intr.min_range - tol) | (depth_m > intr.max_range + tol)][0]
        raise UnitMismatch(
            f"valid depth {bad:.6f} m outside configured range "
            f"[{intr.min_range}, {intr.max_range}] m for sensor {frame.sensor_id!r}"
        )
    dirs = zone_directions(intr)[keep]
    pts = sensor_pose_in_base.apply(dirs * depth_m[:, None])
    return PointCloud.from_points(pts, sensor_id=frame.sensor_id, step=frame.step, ids=keep)


def _resolve_intrinsics(intrinsics, sensor_id: str) -> TofIntrinsics:
    if isinstance(intrinsics, TofIntrinsics):
        return intrinsics
    try:
        return intrinsics[sensor_id]
    except KeyError as exc:
        raise MissingExtrinsics(f"no intrinsics for sensor {sensor_id!r}") from exc


def sensor_pose_in_base(
    extrinsics: Mapping[str, TofExtrinsics],
    link_poses: Mapping[str, RigidTransform],
    sensor_id: str,
) -> RigidTransform:
    """Compose base<-link and link<-sensor poses for one sensor."""
    if sensor_id not in extrinsics:
        raise MissingExtrinsics(f"no extrinsics for sensor {sensor_id!r}")
    ext = extrinsics[sensor_id]
    if ext.link_id not in link_poses:
        raise MissingExtrinsics(f"no pose for link {ext.link_id!r} (sensor {sensor_id!r})")
    return link_poses[ext.link_id] @ ext.mount_pose


def merge_frames(
    frames,
    extrinsics: Mapping[str, TofExtrinsics],
    intrinsics,
    link_poses: Mapping[str, RigidTransform],
) -> PointCloud:
    """Merge same-step frames from the whole rig into one base-frame cloud.

    Frames are processed in sensor-id order so the merge is a deterministic
    reduction; no deduplication is performed. ``intrinsics`` is either one
    shared TofIntrinsics or a mapping per sensor id.
    """
    frames = sorted(frames, key=lambda f: f.sensor_id)
    if not frames:
        return PointCloud.empty()
    steps = {f.step for f in frames}
    if len(steps) != 1:
        raise ValueError(f"frames span multiple steps: {sorted(steps)}")
    clouds = []
    for frame in frames:
        pose = sensor_pose_in_base(extrinsics, link_poses, frame.sensor_id)
        clouds.append(frame_to_points(frame, _resolve_intrinsics(intrinsics, frame.sensor_id), pose))
    return PointCloud.concat(clouds, renumber=True)


def self_filter(
    cloud: PointCloud,
    shape: RobotShape,
    extrinsics: Mapping[str, TofExtrinsics],
    link_poses: Mapping[str, RigidTransform],
    margin: float = DEFAULT_SELF_FILTER_MARGIN,
) -> PointCloud:
    """Drop points measured off the robot's own body.

    A point is removed when it lies within ``margin`` of a robot primitive
    surface, or when its sensor ray first hits a robot primitive no farther
    than the measured depth plus ``margin``. Idempotent and deterministic.
    """
    if margin < 0.0:
        raise ValueError("margin must be nonnegative")
    if len(cloud) == 0 or not shape.parts:
        return cloud
    prims = shape.world_primitives(link_poses)

    remove = np.zeros(len(cloud), dtype=bool)
    for prim in prims:
        remove |= surface_distance(prim, cloud.xyz) <= margin
    for sensor_id in sorted(set(cloud.sensor_ids.tolist())):
        sel = np.flatnonzero(cloud.sensor_ids == sensor_id)
        origin = sensor_pose_in_base(extrinsics, link_poses, sensor_id).translation
        rel = cloud.xyz[sel] - origin
        depth = np.linalg.norm(rel, axis=1)
        ok = depth > 1e-12
        dirs = np.where(ok[:, None], rel / np.where(ok, depth, 1.0)[:, None], 0.0)
        hit_dist, _ = first_hit(prims, np.broadcast_to(origin, rel.shape), dirs)
        remove[sel] |= ok & (hit_dist <= depth + margin)
    return cloud.subset(~remove)
