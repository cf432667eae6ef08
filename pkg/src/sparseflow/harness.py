"""Pipeline glue: replay frame logs through the estimator, sweep the frame gap.

The estimator consumes only the frame log (poses travel with the records).
When the generating scenario is supplied, its robot shape and link paths
drive the self filter and its per-sensor intrinsics replace the defaults.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .cloud import PointCloud
from .clustering import ClusterParams
from .flow import MOVING, FlowField, FlowParams, estimate_flow
from .logs import FlowClusterRecord, FlowRecord
from .metrics import target_speed_from_truth, velocity_error
from .registration import IcpParams
from .sensing import TofIntrinsics, frame_to_points, self_filter
from .simulator import Scenario

_SPEED_EPS = 1e-12


def worker_count() -> int:
    """Thread cap from SPARSEFLOW_THREADS, defaulting to the CPU count."""
    env = os.environ.get("SPARSEFLOW_THREADS", "").strip()
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return max(1, os.cpu_count() or 1)


def clouds_by_step(frame_records, scenario: Scenario | None = None) -> dict[int, PointCloud]:
    """Convert a frame log into one merged, optionally self-filtered cloud per step."""
    default_intr = TofIntrinsics()
    intrinsics = scenario.intrinsics() if scenario is not None else {}
    by_step: dict[int, list] = {}
    for record in frame_records:
        by_step.setdefault(record.k, []).append(record)
    out: dict[int, PointCloud] = {}
    for k in sorted(by_step):
        records = sorted(by_step[k], key=lambda r: r.sensor_id)
        parts = [
            frame_to_points(
                r.depth_frame(), intrinsics.get(r.sensor_id, default_intr), r.pose
            )
            for r in records
        ]
        cloud = PointCloud.concat(parts, renumber=True)
        if scenario is not None and scenario.robot_shape.parts and len(cloud):
            t = records[0].t
            cloud = self_filter(
                cloud,
                scenario.robot_shape,
                scenario.extrinsics(),
                scenario.link_poses_at(t),
            )
        out[k] = cloud
    return out


def flow_record_from_field(field: FlowField, elapsed_s: float = 0.0) -> FlowRecord:
    clusters = tuple(
        FlowClusterRecord(
            cluster_id=r.cluster_id,
            classification=r.classification,
            fitness=r.fitness,
            mean_disp=r.mean_displacement,
            points=r.source_points,
            velocities=r.velocities if r.velocities is not None else np.empty((0, 3)),
        )
        for r in field.reports
    )
    return FlowRecord(
        k=field.step_pair[1],
        n=field.params.n,
        clusters=clusters,
        elapsed_s=elapsed_s,
        baseline=field.params.baseline_mode,
    )


def estimate_over_clouds(
    clouds: dict[int, PointCloud],
    params: FlowParams,
    cluster_params: ClusterParams | None = None,
    icp_params: IcpParams | None = None,
    timing: bool = False,
) -> list[FlowRecord]:
    """Run the estimator on every (k - n, k) pair available in the log.

    Pairs with an empty side yield a record with no clusters. elapsed_s
    stays 0.0 unless timing is requested, keeping default logs byte-stable
    across reruns.
    """
    records: list[FlowRecord] = []
    for k in sorted(clouds):
        kn = k - params.n
        if kn not in clouds:
            continue
        p_k, p_kn = clouds[k], clouds[kn]
        if len(p_k) == 0 or len(p_kn) == 0:
            records.append(FlowRecord(k=k, n=params.n, baseline=params.baseline_mode))
            continue
        start = time.perf_counter() if timing else 0.0
        field = estimate_flow(p_k, p_kn, params, cluster_params, icp_params)
        elapsed = time.perf_counter() - start if timing else 0.0
        records.append(flow_record_from_field(field, elapsed))
    return records


def estimate_over_log(
    frame_records,
    params: FlowParams,
    cluster_params: ClusterParams | None = None,
    icp_params: IcpParams | None = None,
    scenario: Scenario | None = None,
    timing: bool = False,
) -> list[FlowRecord]:
    clouds = clouds_by_step(frame_records, scenario)
    return estimate_over_clouds(clouds, params, cluster_params, icp_params, timing)


@dataclass(frozen=True)
class SweepRow:
    """One (n, trial) cell of the frame-gap sweep.

    normalized_error_pct is None when no cluster spanned both frames at any
    evaluated step, the MISSING case.
    """

    n: int
    target_speed: float
    trial: str
    normalized_error_pct: float | None


def trial_normalized_error(
    clouds: dict[int, PointCloud],
    truth_records,
    n: int,
    params: FlowParams | None = None,
    cluster_params: ClusterParams | None = None,
    icp_params: IcpParams | None = None,
) -> float | None:
    """Mean velocity error of one trial at frame gap n, as % of target speed."""
    base = params or FlowParams()
    run_params = FlowParams(
        n=n,
        delta_t=base.delta_t,
        n_min=base.n_min,
        gamma=base.gamma,
        delta=base.delta,
        max_retry=base.max_retry,
        baseline_mode=base.baseline_mode,
    )
    truth_by_k = {r.k: r for r in truth_records}
    target_speed = target_speed_from_truth(truth_records)
    if target_speed <= _SPEED_EPS:
        return None
    frame_means: list[float] = []
    for record in estimate_over_clouds(clouds, run_params, cluster_params, icp_params):
        truth = truth_by_k.get(record.k)
        if truth is None or np.linalg.norm(truth.velocity) <= _SPEED_EPS:
            continue
        errors = [
            velocity_error(truth.velocity, vel)
            for cluster in record.clusters
            if cluster.classification == MOVING
            for vel in cluster.velocities
        ]
        if errors:
            frame_means.append(float(np.mean(errors)))
    if not frame_means:
        return None
    return 100.0 * float(np.mean(frame_means)) / target_speed


def sweep_n(
    trials,
    n_values,
    params: FlowParams | None = None,
    cluster_params: ClusterParams | None = None,
    icp_params: IcpParams | None = None,
    scenarios=None,
) -> list[SweepRow]:
    """Frame-gap sweep over a set of trials.

    ``trials`` is a list of (label, frame_records, truth_records); rows come
    back sorted by (n, speed, label). Work is spread over a thread pool
    capped by SPARSEFLOW_THREADS; results do not depend on scheduling.
    """
    scenarios = scenarios or {}
    prepared = []
    for label, frame_records, truth_records in trials:
        clouds = clouds_by_step(frame_records, scenarios.get(label))
        speed = target_speed_from_truth(truth_records)
        prepared.append((label, clouds, truth_records, speed))

    def run(job) -> SweepRow:
        label, clouds, truth_records, speed, n = job
        pct = trial_normalized_error(clouds, truth_records, n, params, cluster_params, icp_params)
        return SweepRow(n=n, target_speed=speed, trial=label, normalized_error_pct=pct)

    jobs = [
        (label, clouds, truth_records, speed, int(n))
        for n in n_values
        for label, clouds, truth_records, speed in prepared
    ]
    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        rows = list(pool.map(run, jobs))
    rows.sort(key=lambda r: (r.n, r.target_speed, r.trial))
    return rows


def sweep_cell_means(rows: list[SweepRow]) -> dict[tuple[int, float], float | None]:
    """Per-(n, speed) mean over non-missing trials; None when all are missing."""
    cells: dict[tuple[int, float], list] = {}
    for row in rows:
        cells.setdefault((row.n, row.target_speed), []).append(row.normalized_error_pct)
    out: dict[tuple[int, float], float | None] = {}
    for key, vals in cells.items():
        present = [v for v in vals if v is not None]
        out[key] = float(np.mean(present)) if present else None
    return out
