"""Scene-flow estimation over two sparse frames.

Merges the frame pair, clusters the union by density, registers each
cluster's temporal subsets with ICP, and gates the result: high-fitness
clusters split into stationary and moving by their mean per-point
displacement, low-fitness clusters shed their matched pairs and retry so a
mixed static/moving cluster can still yield the moving part. Moving
clusters carry one velocity vector per surviving earlier-frame point.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cloud import PointCloud
from .clustering import NOISE, ClusterParams, cluster_points
from .geometry import RigidTransform
from .registration import (
    DegenerateCluster,
    IcpParams,
    icp,
    displacement_matrix,
    mean_l21,
    remove_inliers,
)

STATIONARY = "Stationary"
MOVING = "Moving"
UNCLASSIFIED = "Unclassified"


class FrameMismatch(ValueError):
    """The two clouds are not a consistent (k-n, k) frame pair."""


@dataclass(frozen=True)
class FlowParams:
    """Gate thresholds and timing of the flow estimator.

    n is the frame gap, delta_t the sampling period; velocities scale by
    1 / (n * delta_t). n_min skips clusters that are noise-sized on both
    sides, gamma is the fitness gate, delta the stationary displacement
    gate. baseline_mode disables the gates and the inlier-removal retry.
    """

    n: int = 8
    delta_t: float = 1.0 / 15.0
    n_min: int = 60
    gamma: float = 0.7
    delta: float = 0.04
    max_retry: int = 5
    baseline_mode: bool = False

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("frame gap n must be >= 1")
        if self.delta_t <= 0.0:
            raise ValueError("delta_t must be positive")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.delta <= 0.0:
            raise ValueError("delta must be positive")
        if self.max_retry < 0:
            raise ValueError("max_retry must be >= 0")


@dataclass(frozen=True)
class ClusterReport:
    """Outcome for one cluster of the merged frame pair.

    source_points / source_ids are the surviving earlier-frame subset after
    any inlier-removal rounds; velocities align with them and are present
    exactly when the cluster is Moving. Removed ids record the pairs shed
    during retries, target_ids the surviving current-frame subset.
    """

    cluster_id: int
    classification: str
    transform: RigidTransform
    fitness: float
    mean_displacement: float
    retry_rounds: int
    source_points: np.ndarray
    source_ids: np.ndarray
    target_ids: np.ndarray
    removed_source_ids: np.ndarray
    removed_target_ids: np.ndarray
    velocities: np.ndarray | None = None
    note: str = ""

    def member_ids(self) -> np.ndarray:
        return np.concatenate(
            [self.source_ids, self.target_ids, self.removed_source_ids, self.removed_target_ids]
        )


@dataclass(frozen=True)
class FlowField:
    """All cluster reports for one (k-n, k) pair plus per-point diagnostics.

    Every merged input point lands in exactly one bucket: a report, noise,
    or the size skip; retry-exhausted residues stay inside their
    Unclassified report.
    """

    step_pair: tuple[int, int]
    reports: tuple[ClusterReport, ...]
    noise_ids: np.ndarray
    skipped_ids: np.ndarray
    n_points: int
    params: FlowParams = field(default_factory=FlowParams)

    def moving_reports(self) -> list[ClusterReport]:
        return [r for r in self.reports if r.classification == MOVING]


def velocity_field(displacements: np.ndarray, n: int, delta_t: float) -> np.ndarray:
    """Column-wise velocity 3 x s matrix: V = D / (n * delta_t)."""
    if n < 1 or delta_t <= 0.0:
        raise ValueError("need n >= 1 and delta_t > 0")
    return np.asarray(displacements, dtype=np.float64) / (n * delta_t)


def _report(
    cluster_id,
    classification,
    transform,
    fitness,
    mean_disp,
    rounds,
    work_kn,
    work_k,
    removed_s,
    removed_t,
    velocities=None,
    note="",
) -> ClusterReport:
    return ClusterReport(
        cluster_id=cluster_id,
        classification=classification,
        transform=transform,
        fitness=fitness,
        mean_displacement=mean_disp,
        retry_rounds=rounds,
        source_points=work_kn.xyz,
        source_ids=work_kn.ids,
        target_ids=work_k.ids,
        removed_source_ids=np.asarray(removed_s, dtype=np.int64),
        removed_target_ids=np.asarray(removed_t, dtype=np.int64),
        velocities=velocities,
        note=note,
    )


def classify_cluster(
    subset_k: PointCloud,
    subset_kn: PointCloud,
    params: FlowParams,
    icp_params: IcpParams | None = None,
    cluster_id: int = 0,
) -> ClusterReport:
    """Run the gate / retry state machine on one cluster.

    Registration failures and exhausted retries yield Unclassified rather
    than a forced label. In baseline mode the first registration is taken
    at face value and the cluster is Moving.
    """
    icp_params = icp_params or IcpParams()
    work_k, work_kn = subset_k, subset_kn
    removed_s: list[int] = []
    removed_t: list[int] = []
    rounds = 0
    last_fitness = 0.0
    last_disp = 0.0
    last_transform = RigidTransform.identity()

    while True:
        if len(work_k) < 3 or len(work_kn) < 3:
            return _report(
                cluster_id, UNCLASSIFIED, last_transform, last_fitness, last_disp,
                rounds, work_kn, work_k, removed_s, removed_t, note="thin side",
            )
        try:
            result = icp(work_k, work_kn, icp_params)
        except DegenerateCluster:
            result = None
        if result is None or result.degenerate:
            return _report(
                cluster_id, UNCLASSIFIED, last_transform, last_fitness, last_disp,
                rounds, work_kn, work_k, removed_s, removed_t, note="degenerate registration",
            )
        disp = displacement_matrix(work_kn, result.transform)
        mean_disp = mean_l21(disp)
        last_fitness, last_disp, last_transform = result.fitness, mean_disp, result.transform

        if params.baseline_mode:
            vel = velocity_field(disp, params.n, params.delta_t)
            return _report(
                cluster_id, MOVING, result.transform, result.fitness, mean_disp,
                rounds, work_kn, work_k, removed_s, removed_t, velocities=vel.T,
            )
        if result.fitness > params.gamma:
            if mean_disp < params.delta:
                return _report(
                    cluster_id, STATIONARY, result.transform, result.fitness, mean_disp,
                    rounds, work_kn, work_k, removed_s, removed_t,
                )
            vel = velocity_field(disp, params.n, params.delta_t)
            return _report(
                cluster_id, MOVING, result.transform, result.fitness, mean_disp,
                rounds, work_kn, work_k, removed_s, removed_t, velocities=vel.T,
            )
        if rounds >= params.max_retry:
            return _report(
                cluster_id, UNCLASSIFIED, result.transform, result.fitness, mean_disp,
                rounds, work_kn, work_k, removed_s, removed_t, note="retry exhausted",
            )
        removed_s.extend(result.inlier_pairs[:, 0].tolist())
        removed_t.extend(np.unique(result.inlier_pairs[:, 1]).tolist())
        work_k, work_kn = remove_inliers(work_k, work_kn, result)
        rounds += 1


def estimate_flow(
    p_k: PointCloud,
    p_kn: PointCloud,
    params: FlowParams | None = None,
    cluster_params: ClusterParams | None = None,
    icp_params: IcpParams | None = None,
) -> FlowField:
    """Estimate the dense flow field between frames k-n and k.

    Both clouds must be in the base frame with their points tagged by frame
    of origin; the tags must differ by exactly params.n steps. The output
    depends only on the two clouds (no hidden state between calls).
    """
    params = params or FlowParams()
    steps_k = np.unique(p_k.steps)
    steps_kn = np.unique(p_kn.steps)
    if len(steps_k) != 1 or len(steps_kn) != 1:
        raise FrameMismatch("each cloud must come from a single frame")
    k, kn = int(steps_k[0]), int(steps_kn[0])
    if k - kn != params.n:
        raise FrameMismatch(f"frame steps {kn} and {k} are not separated by n={params.n}")

    merged = PointCloud.concat([p_k, p_kn], renumber=True)
    labels = cluster_points(merged.xyz, cluster_params)

    reports: list[ClusterReport] = []
    skipped: list[np.ndarray] = []
    for cid in range(labels.n_clusters):
        members = labels.members(cid)
        sub = merged.subset(members)
        sub_k = sub.subset(sub.steps == k)
        sub_kn = sub.subset(sub.steps == kn)
        if len(sub_k) < params.n_min and len(sub_kn) < params.n_min:
            skipped.append(sub.ids)
            continue
        reports.append(classify_cluster(sub_k, sub_kn, params, icp_params, cluster_id=cid))

    return FlowField(
        step_pair=(kn, k),
        reports=tuple(reports),
        noise_ids=merged.ids[labels.labels == NOISE],
        skipped_ids=np.concatenate(skipped) if skipped else np.empty(0, dtype=np.int64),
        n_points=len(merged),
        params=params,
    )
