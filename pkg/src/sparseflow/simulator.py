"""Synthetic generator for desk-scale sensing scenarios.

Builds ring-mounted sensor rigs on a two-link robot, ray-casts every zone
against primitive scenes, applies range-proportional noise, and emits frame
plus ground-truth logs that the estimator can replay. Noise is drawn from a
counter-based stream keyed by (seed, sensor, step), so frames are
reproducible bit for bit no matter the generation order.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from .geometry import RigidTransform
from .logs import FrameRecord, TruthRecord
from .primitives import (
    Capsule,
    Disk,
    Primitive,
    Sphere,
    first_hit,
    from_config,
    to_config,
    transformed,
)
from .sensing import (
    DepthFrame,
    RobotShape,
    TofExtrinsics,
    TofIntrinsics,
    sensor_pose_in_base,
    zone_directions,
)

HIT_OBJECT = "object"
HIT_ROBOT = "robot"
HIT_BACKGROUND = "background"
HIT_MISS = "miss"

NOISE_GAUSSIAN = "gaussian-relative"
NOISE_UNIFORM = "uniform-relative"

TARGET_SPEEDS = (0.15, 0.20, 0.25, 0.30)
PRESET_SEEDS = (0, 1, 2, 3, 4)


class ConfigError(ValueError):
    """Scenario description is internally inconsistent."""


@dataclass(frozen=True)
class Waypoint:
    t: float
    position: tuple
    rotation: tuple = None

    def __post_init__(self):
        object.__setattr__(self, "position", tuple(float(v) for v in self.position))
        rot = self.rotation
        if rot is None:
            rot = tuple(map(tuple, np.eye(3)))
        else:
            rot = tuple(map(tuple, np.asarray(rot, dtype=np.float64).reshape(3, 3)))
        object.__setattr__(self, "rotation", rot)


@dataclass(frozen=True)
class Trajectory:
    """Piecewise-linear pose path; position interpolates, rotation holds per segment.

    Poses clamp to the first/last waypoint outside the time span; velocity is
    the right-hand segment slope and zero at and beyond the final waypoint.
    """

    waypoints: tuple

    def __post_init__(self):
        wps = tuple(self.waypoints)
        if not wps:
            raise ConfigError("trajectory needs at least one waypoint")
        times = [w.t for w in wps]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ConfigError(f"waypoint times must strictly increase, got {times}")
        object.__setattr__(self, "waypoints", wps)

    @classmethod
    def static(cls, position=(0.0, 0.0, 0.0), rotation=None) -> "Trajectory":
        return cls((Waypoint(0.0, position, rotation),))

    def _segment(self, t: float) -> int:
        wps = self.waypoints
        for idx in range(len(wps) - 1):
            if t < wps[idx + 1].t:
                return idx
        return len(wps) - 1

    def pose_at(self, t: float) -> RigidTransform:
        wps = self.waypoints
        if t <= wps[0].t or len(wps) == 1:
            return RigidTransform(np.asarray(wps[0].rotation), np.asarray(wps[0].position))
        if t >= wps[-1].t:
            return RigidTransform(np.asarray(wps[-2].rotation), np.asarray(wps[-1].position))
        idx = self._segment(t)
        a, b = wps[idx], wps[idx + 1]
        alpha = (t - a.t) / (b.t - a.t)
        pos = (1.0 - alpha) * np.asarray(a.position) + alpha * np.asarray(b.position)
        return RigidTransform(np.asarray(a.rotation), pos)

    def velocity_at(self, t: float) -> np.ndarray:
        wps = self.waypoints
        if len(wps) == 1 or t < wps[0].t or t >= wps[-1].t:
            return np.zeros(3)
        idx = self._segment(t)
        a, b = wps[idx], wps[idx + 1]
        return (np.asarray(b.position) - np.asarray(a.position)) / (b.t - a.t)


@dataclass(frozen=True)
class Scenario:
    """Full description of one synthetic trial."""

    name: str
    seed: int
    duration: float
    sensors: tuple  # ((TofExtrinsics, TofIntrinsics), ...)
    robot_shape: RobotShape = field(default_factory=RobotShape)
    robot_trajectories: tuple = field(default_factory=tuple)  # ((link_id, Trajectory), ...)
    object_shape: tuple = field(default_factory=tuple)
    object_trajectory: Trajectory = field(default_factory=Trajectory.static)
    background: tuple = field(default_factory=tuple)
    rate: float = 15.0
    noise_rel: float = 0.10
    noise_model: str = NOISE_GAUSSIAN

    def __post_init__(self):
        if self.rate <= 0.0:
            raise ConfigError("rate must be positive")
        if self.duration <= 0.0:
            raise ConfigError("duration must be positive")
        if not 0.0 <= self.noise_rel <= 0.2:
            raise ConfigError("noise_rel must lie in [0, 0.2]")
        if self.noise_model not in (NOISE_GAUSSIAN, NOISE_UNIFORM):
            raise ConfigError(f"unknown noise model {self.noise_model!r}")
        if not self.sensors:
            raise ConfigError("scenario needs at least one sensor")

    @property
    def n_steps(self) -> int:
        return int(math.floor(self.duration * self.rate + 1e-9)) + 1

    @property
    def delta_t(self) -> float:
        return 1.0 / self.rate

    def extrinsics(self) -> dict[str, TofExtrinsics]:
        return {ext.sensor_id: ext for ext, _ in self.sensors}

    def intrinsics(self) -> dict[str, TofIntrinsics]:
        return {ext.sensor_id: intr for ext, intr in self.sensors}

    def link_trajectories(self) -> dict[str, Trajectory]:
        return dict(self.robot_trajectories)

    def link_poses_at(self, t: float) -> dict[str, RigidTransform]:
        return {link: traj.pose_at(t) for link, traj in self.robot_trajectories}

    def validate_links(self) -> None:
        known = {link for link, _ in self.robot_trajectories}
        for ext, _ in self.sensors:
            if ext.link_id not in known:
                raise ConfigError(f"sensor {ext.sensor_id!r} mounted on unknown link {ext.link_id!r}")
        for link, _ in self.robot_shape.parts:
            if link not in known:
                raise ConfigError(f"robot primitive attached to unknown link {link!r}")


@dataclass(frozen=True)
class SimulationLog:
    frames: tuple
    truth: tuple


def _scene_primitives(scenario: Scenario, t: float) -> tuple[list[Primitive], list[str]]:
    prims: list[Primitive] = []
    owners: list[str] = []
    object_pose = scenario.object_trajectory.pose_at(t)
    for prim in scenario.object_shape:
        prims.append(transformed(prim, object_pose))
        owners.append(HIT_OBJECT)
    link_poses = scenario.link_poses_at(t)
    for link, prim in scenario.robot_shape.parts:
        prims.append(transformed(prim, link_poses[link]))
        owners.append(HIT_ROBOT)
    for prim in scenario.background:
        prims.append(prim)
        owners.append(HIT_BACKGROUND)
    return prims, owners


def _noise_draw(scenario: Scenario, sensor_index: int, k: int, n: int, seed: int) -> np.ndarray:
    seq = np.random.SeedSequence(entropy=(int(seed), int(sensor_index), int(k)))
    rng = np.random.Generator(np.random.Philox(seq))
    if scenario.noise_model == NOISE_GAUSSIAN:
        return rng.standard_normal(n) * scenario.noise_rel
    return rng.uniform(-scenario.noise_rel, scenario.noise_rel, n)


def raycast_frame(
    scenario: Scenario,
    sensor_id: str,
    k: int,
    seed: int | None = None,
) -> tuple[DepthFrame, np.ndarray]:
    """Render one sensor frame at step k.

    Returns the depth frame plus the per-zone ground-truth hit labels;
    zones with no return inside the range limits are invalid and labeled
    miss. Deterministic in (seed, sensor_id, k, zone).
    """
    seed = scenario.seed if seed is None else seed
    t = k * scenario.delta_t
    if not 0 <= k < scenario.n_steps:
        raise ConfigError(f"step {k} outside scenario duration")
    sensor_ids = [ext.sensor_id for ext, _ in scenario.sensors]
    try:
        sensor_index = sensor_ids.index(sensor_id)
    except ValueError as exc:
        raise ConfigError(f"unknown sensor {sensor_id!r}") from exc
    ext, intr = scenario.sensors[sensor_index]

    pose = sensor_pose_in_base(scenario.extrinsics(), scenario.link_poses_at(t), sensor_id)
    dirs = zone_directions(intr) @ pose.rotation.T
    origins = np.broadcast_to(pose.translation, dirs.shape)
    prims, owners = _scene_primitives(scenario, t)
    dist, owner_idx = first_hit(prims, origins, dirs) if prims else (
        np.full(intr.zone_count, np.inf),
        np.full(intr.zone_count, -1, dtype=np.int64),
    )

    eps = _noise_draw(scenario, sensor_index, k, intr.zone_count, seed)
    hit = np.isfinite(dist)
    noisy = np.where(hit, dist * (1.0 + eps), np.inf)
    valid = hit & (noisy >= intr.min_range) & (noisy <= intr.max_range)
    depth_mm = np.where(valid, np.rint(noisy * 1e3), 0).astype(np.int64)
    labels = np.where(valid, np.array([owners[i] if i >= 0 else HIT_MISS for i in owner_idx], dtype=object), HIT_MISS)
    return DepthFrame(sensor_id, k, t, depth_mm, valid), labels


def run_scenario(scenario: Scenario, seed: int | None = None) -> SimulationLog:
    """Render every sensor at every step and collect ground truth.

    Records are ordered by (step, sensor_id); the log replays through the
    estimation pipeline byte-identically for a fixed seed.
    """
    scenario.validate_links()
    seed = scenario.seed if seed is None else seed
    frames: list[FrameRecord] = []
    truth: list[TruthRecord] = []
    order = sorted(range(len(scenario.sensors)), key=lambda i: scenario.sensors[i][0].sensor_id)
    for k in range(scenario.n_steps):
        t = k * scenario.delta_t
        link_poses = scenario.link_poses_at(t)
        extrinsics = scenario.extrinsics()
        hits: dict[str, tuple] = {}
        for idx in order:
            ext, intr = scenario.sensors[idx]
            frame, labels = raycast_frame(scenario, ext.sensor_id, k, seed=seed)
            pose = sensor_pose_in_base(extrinsics, link_poses, ext.sensor_id)
            frames.append(
                FrameRecord(
                    k=k,
                    t=t,
                    sensor_id=ext.sensor_id,
                    rotation=pose.rotation,
                    position=pose.translation,
                    depth_mm=frame.depth_mm,
                    valid=frame.valid,
                )
            )
            hits[ext.sensor_id] = tuple(labels.tolist())
        truth.append(
            TruthRecord(
                k=k,
                velocity=scenario.object_trajectory.velocity_at(t),
                pose=scenario.object_trajectory.pose_at(t),
                hits=hits,
            )
        )
    return SimulationLog(frames=tuple(frames), truth=tuple(truth))


# ---------------------------------------------------------------------------
# Preset rig and scenarios


def _ring_sensors(
    prefix: str,
    link_id: str,
    z: float,
    yaw_offset_deg: float,
    pitch_deg: float,
    count: int = 8,
    ring_radius: float = 0.09,
    intrinsics: TofIntrinsics | None = None,
) -> list[tuple[TofExtrinsics, TofIntrinsics]]:
    """One bracelet of sensors, equally spaced in yaw, facing outward."""
    intr = intrinsics or TofIntrinsics()
    out = []
    pitch = math.radians(pitch_deg)
    for i in range(count):
        yaw = math.radians(yaw_offset_deg + i * 360.0 / count)
        optical = np.array(
            [math.cos(yaw) * math.cos(pitch), math.sin(yaw) * math.cos(pitch), -math.sin(pitch)]
        )
        cols = np.array([-math.sin(yaw), math.cos(yaw), 0.0])
        rows = np.cross(optical, cols)
        rotation = np.column_stack([cols, rows, optical])
        position = np.array([ring_radius * math.cos(yaw), ring_radius * math.sin(yaw), z])
        ext = TofExtrinsics(f"{prefix}{i}", link_id, RigidTransform(rotation, position))
        out.append((ext, intr))
    return out


def _default_rig() -> tuple:
    sensors = (
        *_ring_sensors("b", "base_link", z=0.22, yaw_offset_deg=0.0, pitch_deg=28.0),
        *_ring_sensors("e", "arm_link", z=0.52, yaw_offset_deg=15.0, pitch_deg=0.0),
        *_ring_sensors("w", "arm_link", z=0.72, yaw_offset_deg=30.0, pitch_deg=-8.0),
    )
    return tuple(sensors)


def _default_robot_shape() -> RobotShape:
    return RobotShape(
        (
            ("base_link", Capsule((0.0, 0.0, 0.02), (0.0, 0.0, 0.62), 0.06)),
            ("arm_link", Capsule((0.10, 0.02, 0.64), (0.40, 0.18, 0.56), 0.05)),
        )
    )


def _mannequin() -> tuple[Primitive, ...]:
    return (
        Capsule((0.0, 0.0, 0.42), (0.0, 0.0, 1.02), 0.13),
        Sphere((0.0, 0.0, 1.14), 0.09),
        Capsule((-0.15, 0.0, 0.95), (-0.33, 0.0, 0.68), 0.045),
        Capsule((0.15, 0.0, 0.95), (0.33, 0.0, 0.68), 0.045),
        Capsule((0.0, 0.0, 0.10), (0.0, 0.0, 0.42), 0.10),
    )


def _default_background() -> tuple[Primitive, ...]:
    return (
        Disk((0.0, 0.0, 0.0), (0.0, 0.0, 1.0), 1.7),
        Disk((0.0, 1.45, 0.9), (0.0, -1.0, 0.0), 0.9),
    )


def _line_trajectory(start, end, speed: float) -> Trajectory:
    # logs span exactly the motion: recording starts with the first commanded step
    start = np.asarray(start, dtype=np.float64)
    end = np.asarray(end, dtype=np.float64)
    travel = float(np.linalg.norm(end - start))
    return Trajectory((Waypoint(0.0, tuple(start)), Waypoint(travel / speed, tuple(end))))


def _arm_path_trajectory() -> Trajectory:
    # end-effector detour: 0.15 m along -y with 0.05 m along +x, then 0.10 m
    # more in the same direction, 0.25 m/s on average
    leg1 = np.array([0.05, -0.15, 0.0])
    leg1_len = float(np.linalg.norm(leg1))
    leg2 = leg1 / leg1_len * 0.10
    t1 = leg1_len / 0.25
    t2 = t1 + 0.10 / 0.25
    return Trajectory(
        (
            Waypoint(0.0, (0.0, 0.0, 0.0)),
            Waypoint(t1, tuple(leg1)),
            Waypoint(t2, tuple(leg1 + leg2)),
        )
    )


PRESET_NAMES = ("approach-y", "lateral-x", "both-moving", "self-filter-demo")


def make_preset(
    name: str,
    speed: float = 0.15,
    seed: int = 0,
    noise_rel: float = 0.10,
    noise_model: str = NOISE_GAUSSIAN,
) -> Scenario:
    """Build one named scenario preset at a target speed and seed."""
    if name not in PRESET_NAMES:
        raise ConfigError(f"unknown preset {name!r}; choose from {PRESET_NAMES}")
    sensors = _default_rig()
    robot_shape = _default_robot_shape()
    static_links = (
        ("base_link", Trajectory.static()),
        ("arm_link", Trajectory.static()),
    )

    if name == "self-filter-demo":
        shape = RobotShape(
            (
                *robot_shape.parts,
                ("arm_link", Capsule((0.30, -0.12, 0.10), (0.34, 0.22, 0.80), 0.09)),
                ("arm_link", Capsule((-0.30, -0.22, 0.10), (-0.34, 0.12, 0.80), 0.09)),
            )
        )
        return Scenario(
            name=name,
            seed=seed,
            duration=0.2,
            sensors=sensors,
            robot_shape=shape,
            robot_trajectories=static_links,
            object_shape=_mannequin(),
            object_trajectory=Trajectory.static((0.0, 0.75, 0.0)),
            background=_default_background(),
            noise_rel=0.0,
            noise_model=noise_model,
        )

    if speed <= 0.0:
        raise ConfigError("target speed must be positive")
    if name == "approach-y":
        travel, start, end = 0.30, (0.0, 0.75, 0.0), (0.0, 0.45, 0.0)
    elif name == "lateral-x":
        travel, start, end = 0.25, (-0.125, 0.75, 0.0), (0.125, 0.75, 0.0)
    else:
        travel, start, end = 0.30, (0.0, 0.75, 0.0), (0.0, 0.45, 0.0)
    duration = travel / speed
    robot_trajectories = static_links
    if name == "both-moving":
        robot_trajectories = (
            ("base_link", Trajectory.static()),
            ("arm_link", _arm_path_trajectory()),
        )
    return Scenario(
        name=f"{name}@{speed:.2f}#s{seed}",
        seed=seed,
        duration=duration,
        sensors=sensors,
        robot_shape=robot_shape,
        robot_trajectories=robot_trajectories,
        object_shape=_mannequin(),
        object_trajectory=_line_trajectory(start, end, speed),
        background=_default_background(),
        noise_rel=noise_rel,
        noise_model=noise_model,
    )


def preset_scenarios() -> dict[str, Scenario]:
    """The full validation set: 3 motions x 4 speeds x 5 seeds, plus the
    self-filter demo."""
    out: dict[str, Scenario] = {}
    for name in ("approach-y", "lateral-x", "both-moving"):
        for speed in TARGET_SPEEDS:
            for seed in PRESET_SEEDS:
                scenario = make_preset(name, speed=speed, seed=seed)
                out[scenario.name] = scenario
    out["self-filter-demo"] = make_preset("self-filter-demo")
    return out


def parse_preset_key(key: str) -> Scenario:
    """Parse 'name[@speed][#sSEED]' into a preset scenario."""
    body = key
    seed = 0
    if "#s" in body:
        body, seed_text = body.rsplit("#s", 1)
        try:
            seed = int(seed_text)
        except ValueError as exc:
            raise ConfigError(f"bad seed suffix in preset key {key!r}") from exc
    speed = 0.15
    if "@" in body:
        body, speed_text = body.rsplit("@", 1)
        try:
            speed = float(speed_text)
        except ValueError as exc:
            raise ConfigError(f"bad speed in preset key {key!r}") from exc
    return make_preset(body, speed=speed, seed=seed)


# ---------------------------------------------------------------------------
# JSON round-trip


def _pose_config(pose: RigidTransform) -> dict:
    return {"R": [float(v) for v in pose.rotation.ravel()], "p": [float(v) for v in pose.translation]}


def _pose_from_config(doc: dict) -> RigidTransform:
    return RigidTransform(np.asarray(doc["R"]).reshape(3, 3), doc["p"])


def scenario_to_config(scenario: Scenario) -> dict:
    return {
        "name": scenario.name,
        "seed": scenario.seed,
        "duration": scenario.duration,
        "rate": scenario.rate,
        "noise_rel": scenario.noise_rel,
        "noise_model": scenario.noise_model,
        "sensors": [
            {
                "sensor_id": ext.sensor_id,
                "link_id": ext.link_id,
                "mount_pose": _pose_config(ext.mount_pose),
                "intrinsics": {
                    "grid_rows": intr.grid_rows,
                    "grid_cols": intr.grid_cols,
                    "diagonal_fov_deg": intr.diagonal_fov_deg,
                    "min_range": intr.min_range,
                    "max_range": intr.max_range,
                },
            }
            for ext, intr in scenario.sensors
        ],
        "robot_shape": [
            {"link_id": link, "primitive": to_config(prim)} for link, prim in scenario.robot_shape.parts
        ],
        "robot_trajectories": {
            link: [
                {"t": w.t, "p": list(w.position), "R": [float(v) for row in w.rotation for v in row]}
                for w in traj.waypoints
            ]
            for link, traj in scenario.robot_trajectories
        },
        "object_shape": [to_config(p) for p in scenario.object_shape],
        "object_trajectory": [
            {"t": w.t, "p": list(w.position), "R": [float(v) for row in w.rotation for v in row]}
            for w in scenario.object_trajectory.waypoints
        ],
        "background": [to_config(p) for p in scenario.background],
    }


def _trajectory_from_config(doc) -> Trajectory:
    return Trajectory(
        tuple(
            Waypoint(w["t"], w["p"], np.asarray(w["R"]).reshape(3, 3) if "R" in w else None)
            for w in doc
        )
    )


def scenario_from_config(doc: Mapping) -> Scenario:
    sensors = tuple(
        (
            TofExtrinsics(s["sensor_id"], s["link_id"], _pose_from_config(s["mount_pose"])),
            TofIntrinsics(**s.get("intrinsics", {})),
        )
        for s in doc["sensors"]
    )
    return Scenario(
        name=doc.get("name", "scenario"),
        seed=int(doc.get("seed", 0)),
        duration=float(doc["duration"]),
        sensors=sensors,
        robot_shape=RobotShape(
            tuple((p["link_id"], from_config(p["primitive"])) for p in doc.get("robot_shape", []))
        ),
        robot_trajectories=tuple(
            (link, _trajectory_from_config(traj))
            for link, traj in sorted(doc.get("robot_trajectories", {}).items())
        ),
        object_shape=tuple(from_config(p) for p in doc.get("object_shape", [])),
        object_trajectory=_trajectory_from_config(doc.get("object_trajectory", [{"t": 0.0, "p": [0, 0, 0]}])),
        background=tuple(from_config(p) for p in doc.get("background", [])),
        rate=float(doc.get("rate", 15.0)),
        noise_rel=float(doc.get("noise_rel", 0.10)),
        noise_model=doc.get("noise_model", NOISE_GAUSSIAN),
    )


def save_scenario(scenario: Scenario, path) -> None:
    with open(path, "w") as fh:
        json.dump(scenario_to_config(scenario), fh, indent=2)
        fh.write("\n")


def load_scenario(path) -> Scenario:
    with open(path) as fh:
        return scenario_from_config(json.load(fh))


def with_noise(scenario: Scenario, noise_rel: float, noise_model: str | None = None) -> Scenario:
    return replace(
        scenario,
        noise_rel=noise_rel,
        noise_model=noise_model or scenario.noise_model,
    )
