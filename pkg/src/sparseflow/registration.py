"""Point-to-point ICP between the two temporal subsets of a cluster.

The solver alternates nearest-neighbor correspondence search (source into
target through a k-d tree) with closed-form rigid alignment on the pairs
within the correspondence threshold. The fitness score is the fraction of
source points whose final correspondence lies within that threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cloud import PointCloud
from .geometry import DegenerateGeometry, RigidTransform, SpatialIndex, kabsch_align


class DegenerateCluster(ValueError):
    """A cluster side is too small to register."""


@dataclass(frozen=True)
class IcpParams:
    max_iterations: int = 50
    convergence_eps: float = 1e-6
    correspondence_threshold: float = 0.10

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.correspondence_threshold <= 0.0:
            raise ValueError("correspondence threshold must be positive")


@dataclass(frozen=True)
class IcpResult:
    """Registration outcome; the transform maps source points toward target.

    inlier_pairs holds (source_id, target_id) rows aligned with
    inlier_distances; fitness * |source| always equals the pair count.
    A degenerate run (no correspondence ever within threshold) is flagged
    with fitness 0 and an identity transform.
    """

    transform: RigidTransform
    fitness: float
    inlier_pairs: np.ndarray
    inlier_distances: np.ndarray
    rms_residual: float
    iterations_used: int
    rms_history: np.ndarray = field(default_factory=lambda: np.empty(0))
    degenerate: bool = False


def _cloud_like(points) -> PointCloud:
    if isinstance(points, PointCloud):
        return points
    return PointCloud(np.asarray(points, dtype=np.float64).reshape(-1, 3))


def _degenerate_result(n_iterations: int, history: list[float]) -> IcpResult:
    return IcpResult(
        transform=RigidTransform.identity(),
        fitness=0.0,
        inlier_pairs=np.empty((0, 2), dtype=np.int64),
        inlier_distances=np.empty(0),
        rms_residual=math.inf,
        iterations_used=n_iterations,
        rms_history=np.asarray(history),
        degenerate=True,
    )


def icp(
    target,
    source,
    params: IcpParams | None = None,
    initial: RigidTransform | None = None,
) -> IcpResult:
    """Register source (earlier frame) onto target (current frame).

    Iterates correspondence search and alignment until the inlier RMS
    residual changes by less than convergence_eps or max_iterations is hit;
    deterministic for fixed inputs. Raises DegenerateCluster when either
    side has fewer than 3 points; returns a flagged zero-fitness result when
    no correspondence ever falls within the threshold.
    """
    params = params or IcpParams()
    tgt = _cloud_like(target)
    src = _cloud_like(source)
    if len(src) < 3 or len(tgt) < 3:
        raise DegenerateCluster(f"need >= 3 points per side, got {len(src)} and {len(tgt)}")

    tau = params.correspondence_threshold
    index = SpatialIndex(tgt.xyz)
    transform = initial if initial is not None else RigidTransform.identity()
    prev_rms = None
    history: list[float] = []
    iterations = 0

    for _ in range(params.max_iterations):
        moved = transform.apply(src.xyz)
        tgt_rows, dists = index.query(moved)
        inlier = dists <= tau
        if not inlier.any():
            return _degenerate_result(iterations, history)
        rms = float(np.sqrt(np.mean(dists[inlier] ** 2)))
        history.append(rms)
        if prev_rms is not None and abs(prev_rms - rms) < params.convergence_eps:
            break
        prev_rms = rms
        try:
            transform = kabsch_align(src.xyz[inlier], tgt.xyz[tgt_rows[inlier]])
        except DegenerateGeometry:
            return _degenerate_result(iterations, history)
        iterations += 1

    moved = transform.apply(src.xyz)
    tgt_rows, dists = index.query(moved)
    inlier = dists <= tau
    if not inlier.any():
        return _degenerate_result(iterations, history)
    rms = float(np.sqrt(np.mean(dists[inlier] ** 2)))
    if not history or history[-1] != rms:
        history.append(rms)
    pairs = np.column_stack([src.ids[inlier], tgt.ids[tgt_rows[inlier]]]).astype(np.int64)
    return IcpResult(
        transform=transform,
        fitness=float(np.count_nonzero(inlier)) / len(src),
        inlier_pairs=pairs,
        inlier_distances=dists[inlier],
        rms_residual=rms,
        iterations_used=iterations,
        rms_history=np.asarray(history),
    )


def remove_inliers(
    cluster_k: PointCloud,
    cluster_kn: PointCloud,
    result: IcpResult,
) -> tuple[PointCloud, PointCloud]:
    """Strip the matched pairs of a registration from both cluster sides.

    Source ids leave the earlier-frame cloud, matched target ids leave the
    current-frame cloud; survivors keep their original ids. A zero-fitness
    result is a no-op.
    """
    if result.inlier_pairs.shape[0] == 0:
        return cluster_k, cluster_kn
    kept_k = ~np.isin(cluster_k.ids, result.inlier_pairs[:, 1])
    kept_kn = ~np.isin(cluster_kn.ids, result.inlier_pairs[:, 0])
    return cluster_k.subset(kept_k), cluster_kn.subset(kept_kn)


def displacement_matrix(source, transform: RigidTransform) -> np.ndarray:
    """Per-point displacement columns: D[:, i] = transform(p_i) - p_i, 3 x s."""
    pts = np.asarray(getattr(source, "xyz", source), dtype=np.float64).reshape(-1, 3)
    if pts.shape[0] < 1:
        raise ValueError("need at least one point")
    return (transform.apply(pts) - pts).T


def mean_l21(displacements: np.ndarray) -> float:
    """Average column norm of a 3 x s displacement matrix (meters)."""
    d = np.asarray(displacements, dtype=np.float64)
    if d.ndim != 2 or d.shape[0] != 3 or d.shape[1] < 1:
        raise ValueError(f"expected a 3 x s matrix with s >= 1, got {d.shape}")
    return float(np.mean(np.linalg.norm(d, axis=0)))
