"""gaitgen: physics-consistent behavior cloning for floating-base gaits.

A mixture-of-experts network learns to predict the full kinematic state of
a biped from windowed state features; training adds a differentiable
support-foot velocity penalty on top of the usual regression loss, and
inference corrects autoregressive drift with proportional feedback on the
base pose. A deterministic, kinematically exact gait generator supplies
training data and serves as the physical-feasibility oracle.
"""

__version__ = "0.1.0"

from .kinematics import (KinematicState, KinematicTree,
                         base_velocity_from_constraint, forward_kinematics,
                         frame_jacobian, planar_biped)
from .synthdata import GaitParams, GaitSegment, generate_gait, verify_consistency
from .trajectory import MirrorMap, Trajectory, default_mirror_map, mirror_trajectory
from .features import (FeatureSample, build_dataset, extract_input,
                       extract_output, annotate_contacts)
from .mann import MannConfig, MannParams, blend_experts, gating_forward, predict
from .training import (TrainConfig, adamw_step, data_loss, pi_loss, total_loss,
                       train)
from .correction import (CorrectionGains, WaypointSchedule, correct_angular,
                         correct_linear)
from .rollout import (TrajectoryLog, integrate_base, metric_drift,
                      metric_foot_slide, metric_foot_traces, rollout)

__all__ = [name for name in dir() if not name.startswith("_")]
