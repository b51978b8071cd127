"""6DoF rigid-body pose tracking from angled 2D bounding-box measurements.

An unscented Kalman filter fuses angled-box pseudo-measurements into a full
pose belief; gating, re-detection logic, a synthetic front-end, metrics, and
a scenario CLI round out the package.
"""

from .dynamics import (
    CONSTANT_VELOCITY,
    DynamicsSpec,
    RigidBodyState,
    block_process_noise,
    propagate,
    register_model,
)
from .frontend_sim import (
    Event,
    EventKind,
    FrameRecord,
    NoiseSpec,
    Scenario,
    SyntheticSource,
    ground_truth_box,
    ground_truth_pose,
    load_recorded,
    save_recorded,
)
from .gating import (
    GateConfig,
    aspect_ratio_gate,
    chi2_gate,
    chi2_threshold,
    edge_distance_gate,
    edge_ztest,
    mahalanobis,
)
from .geometry import (
    AngledBox,
    AxisAlignedBox,
    CameraModel,
    Pose,
    Quaternion,
    VertexSet,
    convex_hull,
    min_area_rect,
    predict_measurement,
    project_points,
    to_axis_aligned,
)
from .metrics import FrameError, ecdf, pose_error, summarize
from .tracker import (
    Detection,
    Mode,
    ObjectModel,
    PoseEstimate,
    TrackerConfig,
    TrackerState,
    apply_symmetry,
    init_pose_from_box,
    select_detection,
    should_redetect,
    step,
)
from .ukf import MeasurementStats, StateBelief, UkfParams, predict, sigma_points, update

__version__ = "0.1.0"
