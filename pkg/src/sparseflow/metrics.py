"""Evaluation metrics: direction and magnitude error of estimated flow.

Per-trial aggregation follows a fixed order: point-wise metrics are averaged
within each frame pair first, then across frame pairs, and only steps where
the true speed is nonzero count. Metrics cover Moving-classified points;
true-moving points the estimator missed are reported as a recall diagnostic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .flow import MOVING, STATIONARY, UNCLASSIFIED
from .simulator import HIT_OBJECT

_SPEED_EPS = 1e-12


class ZeroVector(ValueError):
    """Angle deviation is undefined for a zero-length velocity."""


def angle_deviation(v_true, v_est) -> float:
    """Angle between two velocity vectors in degrees."""
    a = np.asarray(v_true, dtype=np.float64).reshape(3)
    b = np.asarray(v_est, dtype=np.float64).reshape(3)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ZeroVector("angle deviation needs two nonzero vectors")
    cos = np.clip(float(a @ b) / (na * nb), -1.0, 1.0)
    return math.degrees(math.acos(cos))


def velocity_error(v_true, v_est) -> float:
    """Euclidean norm of the velocity difference (m/s)."""
    a = np.asarray(v_true, dtype=np.float64).reshape(3)
    b = np.asarray(v_est, dtype=np.float64).reshape(3)
    return float(np.linalg.norm(a - b))


@dataclass(frozen=True)
class TrialMetrics:
    """Per-trial summary of one flow log against one truth log."""

    experiment: str
    target_speed: float
    n: int
    baseline: bool
    frames_evaluated: int
    angle_mean_deg: float | None
    velocity_error_mean: float | None
    moving_points: int
    stationary_points: int
    unclassified_points: int
    missed_moving_points: int
    no_moving_points: bool

    def to_doc(self) -> dict:
        return {
            "experiment": self.experiment,
            "target_speed": self.target_speed,
            "n": self.n,
            "baseline": self.baseline,
            "frames_evaluated": self.frames_evaluated,
            "angle_deviation_deg_mean": self.angle_mean_deg,
            "velocity_error_mean": self.velocity_error_mean,
            "points": {
                "Moving": self.moving_points,
                "Stationary": self.stationary_points,
                "Unclassified": self.unclassified_points,
            },
            "missed_moving_points": self.missed_moving_points,
            "no_moving_points": self.no_moving_points,
        }


def _object_zone_count(truth_record) -> int:
    return sum(
        1 for labels in truth_record.hits.values() for label in labels if label == HIT_OBJECT
    )


def aggregate_trial(flow_records, truth_records, target_speed: float, experiment: str = "") -> TrialMetrics:
    """Average point-wise metrics over one trial.

    Only frame pairs whose current step has nonzero true speed contribute.
    Estimated velocities with exactly zero norm are skipped for the angle
    (undefined) but still counted in the magnitude error.
    """
    truth_by_k = {r.k: r for r in truth_records}
    frame_angle_means: list[float] = []
    frame_vel_means: list[float] = []
    counts = {MOVING: 0, STATIONARY: 0, UNCLASSIFIED: 0}
    missed = 0
    frames_evaluated = 0
    n_gap = flow_records[0].n if flow_records else 0
    baseline = bool(flow_records[0].baseline) if flow_records else False

    for record in flow_records:
        truth = truth_by_k.get(record.k)
        if truth is None or np.linalg.norm(truth.velocity) <= _SPEED_EPS:
            continue
        frames_evaluated += 1
        v_true = truth.velocity
        angles: list[float] = []
        errors: list[float] = []
        moving_here = 0
        for cluster in record.clusters:
            counts[cluster.classification] = counts.get(cluster.classification, 0) + cluster.points.shape[0]
            if cluster.classification != MOVING:
                continue
            moving_here += cluster.velocities.shape[0]
            for vel in cluster.velocities:
                errors.append(velocity_error(v_true, vel))
                if np.linalg.norm(vel) > 0.0:
                    angles.append(angle_deviation(v_true, vel))
        source_truth = truth_by_k.get(record.k - record.n)
        if source_truth is not None:
            missed += max(0, _object_zone_count(source_truth) - moving_here)
        if errors:
            frame_vel_means.append(float(np.mean(errors)))
        if angles:
            frame_angle_means.append(float(np.mean(angles)))

    no_moving = not frame_vel_means
    return TrialMetrics(
        experiment=experiment,
        target_speed=float(target_speed),
        n=n_gap,
        baseline=baseline,
        frames_evaluated=frames_evaluated,
        angle_mean_deg=float(np.mean(frame_angle_means)) if frame_angle_means else None,
        velocity_error_mean=float(np.mean(frame_vel_means)) if frame_vel_means else None,
        moving_points=counts[MOVING],
        stationary_points=counts[STATIONARY],
        unclassified_points=counts[UNCLASSIFIED],
        missed_moving_points=missed,
        no_moving_points=no_moving,
    )


def target_speed_from_truth(truth_records) -> float:
    """Commanded speed of a trial: the peak true speed over all steps."""
    speeds = [float(np.linalg.norm(r.velocity)) for r in truth_records]
    return max(speeds) if speeds else 0.0


def experiment_name(path) -> str:
    """Experiment label from a log filename.

    'approach-y@0.15#s2.flow.jsonl' maps to 'approach-y': the seed token,
    speed suffix, and log-kind extensions are stripped.
    """
    stem = Path(path).name
    for ext in (".jsonl", ".json"):
        if stem.endswith(ext):
            stem = stem[: -len(ext)]
    for kind in (".flow", ".frames", ".truth", ".metrics"):
        if stem.endswith(kind):
            stem = stem[: -len(kind)]
    if "#s" in stem:
        stem = stem.rsplit("#s", 1)[0]
    if "@" in stem:
        stem = stem.rsplit("@", 1)[0]
    return stem


def summarize_trials(trials: list[TrialMetrics]) -> list[dict]:
    """Group trials by (experiment, speed) and report mean/std per group."""
    groups: dict[tuple[str, float], list[TrialMetrics]] = {}
    for trial in trials:
        groups.setdefault((trial.experiment, trial.target_speed), []).append(trial)
    rows = []
    for (experiment, speed) in sorted(groups):
        members = groups[(experiment, speed)]
        angles = [t.angle_mean_deg for t in members if t.angle_mean_deg is not None]
        errors = [t.velocity_error_mean for t in members if t.velocity_error_mean is not None]

        def _mean(vals):
            return float(np.mean(vals)) if vals else None

        def _std(vals):
            if not vals:
                return None
            return float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0

        rows.append(
            {
                "experiment": experiment,
                "speed": speed,
                "angle_mean": _mean(angles),
                "angle_std": _std(angles),
                "vel_mean": _mean(errors),
                "vel_std": _std(errors),
                "trials": len(members),
            }
        )
    return rows
