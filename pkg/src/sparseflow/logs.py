"""JSON-lines log formats: sensor frames, ground truth, and flow output.

One record per line keeps the logs streamable and diffable. Floats are
written with Python's shortest round-trip repr, so write-then-read is exact
and identical inputs produce byte-identical files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import RigidTransform
from .sensing import DepthFrame


@dataclass(frozen=True)
class FrameRecord:
    """One sensor's measurement at one step, with its base-frame pose."""

    k: int
    t: float
    sensor_id: str
    rotation: np.ndarray
    position: np.ndarray
    depth_mm: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=np.float64).reshape(3, 3))
        object.__setattr__(self, "position", np.asarray(self.position, dtype=np.float64).reshape(3))
        object.__setattr__(self, "depth_mm", np.asarray(self.depth_mm, dtype=np.int64).reshape(-1))
        object.__setattr__(self, "valid", np.asarray(self.valid, dtype=bool).reshape(-1))

    @property
    def pose(self) -> RigidTransform:
        return RigidTransform(self.rotation, self.position)

    def depth_frame(self) -> DepthFrame:
        return DepthFrame(self.sensor_id, self.k, self.t, self.depth_mm, self.valid)


@dataclass(frozen=True)
class TruthRecord:
    """Ground truth at one step: object pose, velocity, per-zone hit labels."""

    k: int
    velocity: np.ndarray
    pose: RigidTransform
    hits: dict

    def __post_init__(self):
        object.__setattr__(self, "velocity", np.asarray(self.velocity, dtype=np.float64).reshape(3))


@dataclass(frozen=True)
class FlowClusterRecord:
    cluster_id: int
    classification: str
    fitness: float
    mean_disp: float
    points: np.ndarray
    velocities: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "points", np.asarray(self.points, dtype=np.float64).reshape(-1, 3))
        object.__setattr__(self, "velocities", np.asarray(self.velocities, dtype=np.float64).reshape(-1, 3))


@dataclass(frozen=True)
class FlowRecord:
    """Flow-field output for one (k-n, k) pair."""

    k: int
    n: int
    clusters: tuple = field(default_factory=tuple)
    elapsed_s: float = 0.0
    baseline: bool = False


def _floats(arr) -> list:
    return [float(v) for v in np.asarray(arr).ravel()]


def write_frames(path, records) -> None:
    with open(path, "w") as fh:
        for r in records:
            doc = {
                "k": int(r.k),
                "t": float(r.t),
                "sensor": r.sensor_id,
                "R": _floats(r.rotation),
                "p": _floats(r.position),
                "depth_mm": [int(v) for v in r.depth_mm],
                "valid": [bool(v) for v in r.valid],
            }
            fh.write(json.dumps(doc) + "\n")


def read_frames(path) -> list[FrameRecord]:
    out = []
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            doc = json.loads(line)
            out.append(
                FrameRecord(
                    k=doc["k"],
                    t=doc["t"],
                    sensor_id=doc["sensor"],
                    rotation=np.asarray(doc["R"]).reshape(3, 3),
                    position=doc["p"],
                    depth_mm=doc["depth_mm"],
                    valid=doc["valid"],
                )
            )
    return out


def write_truth(path, records) -> None:
    with open(path, "w") as fh:
        for r in records:
            doc = {
                "k": int(r.k),
                "v": _floats(r.velocity),
                "pose": {"R": _floats(r.pose.rotation), "p": _floats(r.pose.translation)},
                "hits": {sid: list(labels) for sid, labels in sorted(r.hits.items())},
            }
            fh.write(json.dumps(doc) + "\n")


def read_truth(path) -> list[TruthRecord]:
    out = []
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            doc = json.loads(line)
            pose = RigidTransform(np.asarray(doc["pose"]["R"]).reshape(3, 3), doc["pose"]["p"])
            out.append(
                TruthRecord(
                    k=doc["k"],
                    velocity=doc["v"],
                    pose=pose,
                    hits={sid: tuple(labels) for sid, labels in doc["hits"].items()},
                )
            )
    return out


def write_flow(path, records) -> None:
    with open(path, "w") as fh:
        for r in records:
            clusters = []
            for c in r.clusters:
                clusters.append(
                    {
                        "id": int(c.cluster_id),
                        "class": c.classification,
                        "fitness": float(c.fitness),
                        "mean_disp": float(c.mean_disp),
                        "points": [[float(v) for v in row] for row in c.points],
                        "vel": [[float(v) for v in row] for row in c.velocities],
                    }
                )
            doc = {
                "k": int(r.k),
                "n": int(r.n),
                "clusters": clusters,
                "elapsed_s": float(r.elapsed_s),
                "baseline": bool(r.baseline),
            }
            fh.write(json.dumps(doc) + "\n")


def read_flow(path) -> list[FlowRecord]:
    out = []
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            doc = json.loads(line)
            clusters = tuple(
                FlowClusterRecord(
                    cluster_id=c["id"],
                    classification=c["class"],
                    fitness=c["fitness"],
                    mean_disp=c["mean_disp"],
                    points=np.asarray(c["points"], dtype=np.float64).reshape(-1, 3),
                    velocities=np.asarray(c["vel"], dtype=np.float64).reshape(-1, 3),
                )
                for c in doc["clusters"]
            )
            out.append(
                FlowRecord(
                    k=doc["k"],
                    n=doc["n"],
                    clusters=clusters,
                    elapsed_s=doc["elapsed_s"],
                    baseline=doc["baseline"],
                )
            )
    return out


def require_file(path) -> Path:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"no such file: {p}")
    return p
