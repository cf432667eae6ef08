"""Point cloud container with per-point provenance metadata."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class PointCloud:
    """Set of base-frame 3D points tagged with (sensor id, frame index).

    ``ids`` are stable per-point identifiers: subsetting keeps them, so a
    point can be tracked through cluster extraction and inlier removal.
    """

    xyz: np.ndarray
    sensor_ids: np.ndarray = field(default=None)
    steps: np.ndarray = field(default=None)
    ids: np.ndarray = field(default=None)

    def __post_init__(self):
        xyz = np.asarray(self.xyz, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(xyz)):
            raise ValueError("point coordinates must be finite")
        n = xyz.shape[0]
        sensor_ids = self.sensor_ids
        if sensor_ids is None:
            sensor_ids = np.full(n, "", dtype=object)
        else:
            sensor_ids = np.asarray(sensor_ids, dtype=object).reshape(n)
        steps = np.zeros(n, dtype=np.int64) if self.steps is None else np.asarray(self.steps, dtype=np.int64).reshape(n)
        ids = np.arange(n, dtype=np.int64) if self.ids is None else np.asarray(self.ids, dtype=np.int64).reshape(n)
        for name, arr in (("xyz", xyz), ("sensor_ids", sensor_ids), ("steps", steps), ("ids", ids)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def empty(cls) -> "PointCloud":
        return cls(np.empty((0, 3)))

    @classmethod
    def from_points(cls, xyz, sensor_id: str = "", step: int = 0, ids=None) -> "PointCloud":
        xyz = np.asarray(xyz, dtype=np.float64).reshape(-1, 3)
        n = xyz.shape[0]
        return cls(
            xyz,
            np.full(n, sensor_id, dtype=object),
            np.full(n, step, dtype=np.int64),
            ids,
        )

    @classmethod
    def concat(cls, clouds, renumber: bool = False) -> "PointCloud":
        """Union of clouds in the given order; renumber assigns fresh ids 0..N-1."""
        clouds = list(clouds)
        if not clouds:
            return cls.empty()
        xyz = np.vstack([c.xyz for c in clouds])
        sensor_ids = np.concatenate([c.sensor_ids for c in clouds])
        steps = np.concatenate([c.steps for c in clouds])
        ids = None if renumber else np.concatenate([c.ids for c in clouds])
        return cls(xyz, sensor_ids, steps, ids)

    def __len__(self) -> int:
        return self.xyz.shape[0]

    def subset(self, selector) -> "PointCloud":
        """Select by boolean mask or index array; per-point ids are preserved."""
        sel = np.asarray(selector)
        return PointCloud(self.xyz[sel], self.sensor_ids[sel], self.steps[sel], self.ids[sel])

    def transformed(self, transform) -> "PointCloud":
        return PointCloud(transform.apply(self.xyz), self.sensor_ids, self.steps, self.ids)
