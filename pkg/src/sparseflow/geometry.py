"""Rigid-body transforms, closed-form alignment and nearest-neighbor search.

Everything here is allocation-light numpy over float64 arrays. Points are
plain ndarrays: a single point has shape (3,), a point set (N, 3).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

ORTHONORMALITY_TOL = 1e-9


class DegenerateGeometry(ValueError):
    """Alignment input does not determine a unique rigid transform."""


class EmptyIndex(ValueError):
    """Spatial index built or queried with no points."""


def _as_points(points) -> np.ndarray:
    pts = np.asarray(getattr(points, "xyz", points), dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[None, :]
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"expected (N, 3) points, got shape {pts.shape}")
    return pts


@dataclass(frozen=True)
class RigidTransform:
    """SE(3) element stored as a 3x3 rotation matrix and a translation vector.

    The rotation must be orthonormal with determinant +1 (checked to 1e-9 at
    construction). Instances are immutable and safe to share across workers.
    """

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        rot = np.array(self.rotation, dtype=np.float64).reshape(3, 3)
        tra = np.array(self.translation, dtype=np.float64).reshape(3)
        if not (np.all(np.isfinite(rot)) and np.all(np.isfinite(tra))):
            raise ValueError("transform entries must be finite")
        if np.max(np.abs(rot.T @ rot - np.eye(3))) > ORTHONORMALITY_TOL:
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(rot) - 1.0) > ORTHONORMALITY_TOL:
            raise ValueError("rotation must be proper (det +1)")
        rot.setflags(write=False)
        tra.setflags(write=False)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", tra)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls()

    @classmethod
    def from_matrix(cls, matrix) -> "RigidTransform":
        m = np.asarray(matrix, dtype=np.float64)
        return cls(m[:3, :3], m[:3, 3])

    @property
    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def apply(self, points) -> np.ndarray:
        """Map a point (3,) or point set (N, 3) through R @ p + t."""
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim == 1:
            return self.rotation @ pts + self.translation
        return pts @ self.rotation.T + self.translation

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """Return self after other: (self @ other)(p) == self(other(p))."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        return self.compose(other)

    def inverse(self) -> "RigidTransform":
        rot_inv = self.rotation.T
        return RigidTransform(rot_inv, -rot_inv @ self.translation)


def transform_point(t: RigidTransform, p) -> np.ndarray:
    """Functional alias for RigidTransform.apply on a single point."""
    return t.apply(np.asarray(p, dtype=np.float64))


def axis_angle_rotation(axis, angle_rad: float) -> np.ndarray:
    """Rotation matrix about an arbitrary axis (Rodrigues)."""
    ax = np.asarray(axis, dtype=np.float64)
    norm = np.linalg.norm(ax)
    if norm == 0.0:
        raise ValueError("rotation axis must be nonzero")
    x, y, z = ax / norm
    c, s = math.cos(angle_rad), math.sin(angle_rad)
    cc = 1.0 - c
    return np.array(
        [
            [c + x * x * cc, x * y * cc - z * s, x * z * cc + y * s],
            [y * x * cc + z * s, c + y * y * cc, y * z * cc - x * s],
            [z * x * cc - y * s, z * y * cc + x * s, c + z * z * cc],
        ]
    )


def kabsch_align(source, target) -> RigidTransform:
    """Least-squares rigid transform mapping source points onto target points.

    Correspondence is positional (i-th source to i-th target). Minimizes
    sum ||R @ s_i + t - t_i||^2 over SE(3); the sign of the smallest singular
    vector is flipped when the optimum would be a reflection.

    Raises DegenerateGeometry for fewer than 3 points or when the
    cross-covariance has rank < 2 (collinear input).
    """
    src = _as_points(source)
    tgt = _as_points(target)
    if src.shape != tgt.shape:
        raise ValueError("source and target must have equal shapes")
    if src.shape[0] < 3:
        raise DegenerateGeometry("need at least 3 point pairs")

    src_centroid = src.mean(axis=0)
    tgt_centroid = tgt.mean(axis=0)
    cross = (src - src_centroid).T @ (tgt - tgt_centroid)
    u, sing, vt = np.linalg.svd(cross)
    if sing[1] <= max(sing[0], 1e-300) * 1e-12:
        raise DegenerateGeometry("cross-covariance rank < 2 (collinear points)")
    rotation = vt.T @ u.T
    if np.linalg.det(rotation) < 0.0:
        vt[-1, :] *= -1.0
        rotation = vt.T @ u.T
    translation = tgt_centroid - rotation @ src_centroid
    return RigidTransform(rotation, translation)


class SpatialIndex:
    """Balanced k-d tree over a fixed point set with exact nearest queries.

    Distance ties resolve to the lowest point id, so queries are deterministic
    regardless of build order. Read-only after construction.
    """

    def __init__(self, points, leaf_size: int = 16):
        pts = _as_points(points)
        if pts.shape[0] == 0:
            raise EmptyIndex("cannot index an empty point set")
        self.points = pts
        self._tree = cKDTree(pts, leafsize=leaf_size)

    def __len__(self) -> int:
        return self.points.shape[0]

    def nearest(self, query) -> tuple[int, float]:
        """Return (point_id, distance) of the nearest indexed point."""
        q = np.asarray(query, dtype=np.float64).reshape(3)
        dist, idx = self._tree.query(q)
        # resolve exact ties to the lowest id via a ball sweep at the found radius
        candidates = self._tree.query_ball_point(q, dist * (1.0 + 1e-12) + 1e-300)
        if len(candidates) > 1:
            cand = np.asarray(candidates)
            dists = np.linalg.norm(self.points[cand] - q, axis=1)
            best = dists.min()
            idx = int(cand[dists == best].min())
            return idx, float(best)
        return int(idx), float(dist)

    def query(self, queries) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized nearest query: (ids, distances), lowest-id tie-break."""
        q = _as_points(queries)
        if len(self) == 1:
            ids = np.zeros(q.shape[0], dtype=np.int64)
            return ids, np.linalg.norm(q - self.points[0], axis=1)
        dist, idx = self._tree.query(q, k=2)
        ids = idx[:, 0].astype(np.int64)
        out = dist[:, 0].copy()
        tied = dist[:, 0] == dist[:, 1]
        for row in np.flatnonzero(tied):
            ids[row], out[row] = self.nearest(q[row])
        return ids, out


def nearest_neighbor(index: SpatialIndex, query) -> tuple[int, float]:
    """Functional alias for SpatialIndex.nearest."""
    return index.nearest(query)
