"""Analytic scene primitives: ray casting and point-to-surface distance.

Spheres and capsules model the robot body and the mannequin; disks provide
finite floor and wall patches. All intersection math is closed form so the
simulator can serve as an exact oracle for the sensing pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import RigidTransform

_EPS = 1e-12


@dataclass(frozen=True)
class Sphere:
    center: tuple
    radius: float

    def __post_init__(self):
        if self.radius <= 0.0:
            raise ValueError("sphere radius must be positive")
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))


@dataclass(frozen=True)
class Capsule:
    """Segment from a to b swept by a sphere of the given radius."""

    a: tuple
    b: tuple
    radius: float

    def __post_init__(self):
        if self.radius <= 0.0:
            raise ValueError("capsule radius must be positive")
        object.__setattr__(self, "a", tuple(float(v) for v in self.a))
        object.__setattr__(self, "b", tuple(float(v) for v in self.b))


@dataclass(frozen=True)
class Disk:
    """Flat circular patch: center point, unit normal, radius."""

    center: tuple
    normal: tuple
    radius: float

    def __post_init__(self):
        if self.radius <= 0.0:
            raise ValueError("disk radius must be positive")
        n = np.asarray(self.normal, dtype=np.float64)
        norm = np.linalg.norm(n)
        if norm == 0.0:
            raise ValueError("disk normal must be nonzero")
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        object.__setattr__(self, "normal", tuple(n / norm))


Primitive = Sphere | Capsule | Disk


def transformed(prim: Primitive, pose: RigidTransform) -> Primitive:
    """Return the primitive expressed in the frame `pose` maps into."""
    if isinstance(prim, Sphere):
        return Sphere(tuple(pose.apply(np.array(prim.center))), prim.radius)
    if isinstance(prim, Capsule):
        return Capsule(
            tuple(pose.apply(np.array(prim.a))),
            tuple(pose.apply(np.array(prim.b))),
            prim.radius,
        )
    if isinstance(prim, Disk):
        return Disk(
            tuple(pose.apply(np.array(prim.center))),
            tuple(pose.rotation @ np.array(prim.normal)),
            prim.radius,
        )
    raise TypeError(f"unknown primitive {type(prim)!r}")


def _sphere_hits(center, radius, origins, dirs) -> np.ndarray:
    oc = origins - center
    b = np.einsum("ij,ij->i", oc, dirs)
    c = np.einsum("ij,ij->i", oc, oc) - radius * radius
    disc = b * b - c
    hit = disc >= 0.0
    sq = np.sqrt(np.where(hit, disc, 0.0))
    t_near = -b - sq
    t_far = -b + sq
    t = np.where(t_near > _EPS, t_near, t_far)
    return np.where(hit & (t > _EPS), t, np.inf)


def _capsule_hits(a, b_pt, radius, origins, dirs) -> np.ndarray:
    axis = b_pt - a
    length = np.linalg.norm(axis)
    if length < _EPS:
        return _sphere_hits(a, radius, origins, dirs)
    axis = axis / length

    # infinite cylinder: components perpendicular to the axis
    oa = origins - a
    d_perp = dirs - np.outer(dirs @ axis, axis)
    o_perp = oa - np.outer(oa @ axis, axis)
    qa = np.einsum("ij,ij->i", d_perp, d_perp)
    qb = np.einsum("ij,ij->i", o_perp, d_perp)
    qc = np.einsum("ij,ij->i", o_perp, o_perp) - radius * radius
    disc = qb * qb - qa * qc
    ok = (disc >= 0.0) & (qa > _EPS)
    sq = np.sqrt(np.where(ok, disc, 0.0))
    best = np.full(origins.shape[0], np.inf)
    for t_cand in ((-qb - sq) / np.where(ok, qa, 1.0), (-qb + sq) / np.where(ok, qa, 1.0)):
        s = (oa + t_cand[:, None] * dirs) @ axis
        valid = ok & (t_cand > _EPS) & (s >= 0.0) & (s <= length)
        best = np.where(valid & (t_cand < best), t_cand, best)
    # spherical caps
    for cap in (a, b_pt):
        t_cap = _sphere_hits(cap, radius, origins, dirs)
        best = np.minimum(best, t_cap)
    return best


def _disk_hits(center, normal, radius, origins, dirs) -> np.ndarray:
    denom = dirs @ normal
    ok = np.abs(denom) > _EPS
    t = np.where(ok, ((center - origins) @ normal) / np.where(ok, denom, 1.0), np.inf)
    pts = origins + t[:, None] * dirs
    in_disk = np.linalg.norm(pts - center, axis=1) <= radius
    return np.where(ok & (t > _EPS) & in_disk, t, np.inf)


def ray_hits(prim: Primitive, origins, dirs) -> np.ndarray:
    """First-hit distances for rays (origins, unit dirs); inf where missed."""
    origins = np.asarray(origins, dtype=np.float64).reshape(-1, 3)
    dirs = np.asarray(dirs, dtype=np.float64).reshape(-1, 3)
    if isinstance(prim, Sphere):
        return _sphere_hits(np.array(prim.center), prim.radius, origins, dirs)
    if isinstance(prim, Capsule):
        return _capsule_hits(np.array(prim.a), np.array(prim.b), prim.radius, origins, dirs)
    if isinstance(prim, Disk):
        return _disk_hits(np.array(prim.center), np.array(prim.normal), prim.radius, origins, dirs)
    raise TypeError(f"unknown primitive {type(prim)!r}")


def surface_distance(prim: Primitive, points) -> np.ndarray:
    """Distance from each point to the primitive surface.

    Signed for solids (negative inside a sphere or capsule); unsigned for
    disks, which are two-sided patches.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if isinstance(prim, Sphere):
        return np.linalg.norm(pts - np.array(prim.center), axis=1) - prim.radius
    if isinstance(prim, Capsule):
        a = np.array(prim.a)
        axis = np.array(prim.b) - a
        len2 = axis @ axis
        if len2 < _EPS:
            return np.linalg.norm(pts - a, axis=1) - prim.radius
        s = np.clip((pts - a) @ axis / len2, 0.0, 1.0)
        closest = a + s[:, None] * axis
        return np.linalg.norm(pts - closest, axis=1) - prim.radius
    if isinstance(prim, Disk):
        center = np.array(prim.center)
        normal = np.array(prim.normal)
        rel = pts - center
        height = rel @ normal
        in_plane = rel - np.outer(height, normal)
        radial = np.linalg.norm(in_plane, axis=1)
        excess = np.maximum(radial - prim.radius, 0.0)
        return np.sqrt(height * height + excess * excess)
    raise TypeError(f"unknown primitive {type(prim)!r}")


def first_hit(prims_with_labels, origins, dirs) -> tuple[np.ndarray, np.ndarray]:
    """Nearest hit over labeled primitives.

    Returns (distances, label indices); a miss has distance inf and label -1.
    Ties go to the earliest primitive in the list.
    """
    origins = np.asarray(origins, dtype=np.float64).reshape(-1, 3)
    dirs = np.asarray(dirs, dtype=np.float64).reshape(-1, 3)
    best = np.full(origins.shape[0], np.inf)
    owner = np.full(origins.shape[0], -1, dtype=np.int64)
    for label_idx, prim in enumerate(prims_with_labels):
        t = ray_hits(prim, origins, dirs)
        closer = t < best
        best = np.where(closer, t, best)
        owner = np.where(closer, label_idx, owner)
    return best, owner


def to_config(prim: Primitive) -> dict:
    if isinstance(prim, Sphere):
        return {"kind": "sphere", "center": list(prim.center), "radius": prim.radius}
    if isinstance(prim, Capsule):
        return {"kind": "capsule", "a": list(prim.a), "b": list(prim.b), "radius": prim.radius}
    if isinstance(prim, Disk):
        return {"kind": "disk", "center": list(prim.center), "normal": list(prim.normal), "radius": prim.radius}
    raise TypeError(f"unknown primitive {type(prim)!r}")


def from_config(doc: dict) -> Primitive:
    kind = doc.get("kind")
    if kind == "sphere":
        return Sphere(tuple(doc["center"]), float(doc["radius"]))
    if kind == "capsule":
        return Capsule(tuple(doc["a"]), tuple(doc["b"]), float(doc["radius"]))
    if kind == "disk":
        return Disk(tuple(doc["center"]), tuple(doc["normal"]), float(doc["radius"]))
    raise ValueError(f"unknown primitive kind {kind!r}")
