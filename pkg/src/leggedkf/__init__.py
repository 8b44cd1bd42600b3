"""Tightly coupled proprioceptive state estimation for legged robots.

A multiplicative EKF fuses IMU and contact wrench sensing through a
visco-elastic contact model, estimating the centroid kinematics, per-contact
rest poses and wrenches, gyro biases and the unmodeled external wrench in a
single loop.  The package also ships a rigid-body ground-truth simulator, the
classic contact-anchored legged odometry as a comparison baseline, and a CLI
harness that runs full scenarios and logs CSV traces.
"""

from .baseline import BaselineOdometry, ContactAnchor
from .config import EstimatorSettings, RunConfig, build_scenario, load_config
from .contact import (
    ContactKinematics,
    StiffnessDamping,
    contact_world_kinematics,
    discrepancy,
    viscoelastic_wrench,
)
from .dynamics import (
    GRAVITY,
    CentroidAccel,
    accelerations,
    angular_acceleration,
    integrate_kinematics,
    linear_acceleration,
    state_transition,
)
from .harness import RunMetrics, RunResult, compute_metrics, run, run_estimation
from .measurement import (
    assemble_measurement_prediction,
    predict_accelerometer,
    predict_contact_wrench,
    predict_gyro,
)
from .mekf import (
    InnovationNotPositiveDefinite,
    StepDiagnostics,
    measurement_jacobian,
    predict,
    step,
    transition_jacobian,
    update,
)
from .noise import NoiseConfig
from .odometry import (
    ContactTracker,
    OdometryMode,
    apply_mode,
    detect_contacts,
    init_rest_pose_6d,
)
from .scenarios import free_fall_scenario, standing_scenario, tripod_scenario, walk_scenario
from .simulator import (
    EffectorScript,
    ImuMount,
    SensorNoise,
    SimScenario,
    SlipEvent,
    WrenchWindow,
    simulate,
)
from .so3 import Rotation, interpolate, split_yaw_tilt
from .state import (
    ContactInput,
    ContactState,
    EstimatorState,
    ImuInput,
    InputFrame,
    MeasurementFrame,
    StateLayout,
    add_contact,
    boxminus,
    boxplus,
    remove_contact,
)

__version__ = "0.1.0"
