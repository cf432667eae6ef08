"""Scene-flow estimation from distributed miniaturized ToF sensing."""

from .cloud import PointCloud
from .clustering import (
    NOISE,
    ClusterLabels,
    ClusterParams,
    TooFewPoints,
    cluster_points,
    core_distances,
    extract_clusters,
    mutual_reachability_mst,
)
from .flow import (
    MOVING,
    STATIONARY,
    UNCLASSIFIED,
    ClusterReport,
    FlowField,
    FlowParams,
    FrameMismatch,
    classify_cluster,
    estimate_flow,
    velocity_field,
)
from .geometry import (
    DegenerateGeometry,
    EmptyIndex,
    RigidTransform,
    SpatialIndex,
    axis_angle_rotation,
    kabsch_align,
    nearest_neighbor,
    transform_point,
)
from .metrics import ZeroVector, aggregate_trial, angle_deviation, velocity_error
from .registration import (
    DegenerateCluster,
    IcpParams,
    IcpResult,
    displacement_matrix,
    icp,
    mean_l21,
    remove_inliers,
)
from .sensing import (
    DepthFrame,
    MissingExtrinsics,
    RobotShape,
    TofExtrinsics,
    TofIntrinsics,
    UnitMismatch,
    frame_to_points,
    merge_frames,
    self_filter,
    zone_directions,
)
from .simulator import (
    ConfigError,
    Scenario,
    Trajectory,
    Waypoint,
    make_preset,
    preset_scenarios,
    raycast_frame,
    run_scenario,
)

__version__ = "0.1.0"
