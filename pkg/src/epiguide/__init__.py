"""Epipole-guided locally affine prediction and zonal mAP for fisheye video."""

from .camera import FisheyeIntrinsics, project, rho_to_theta, theta_to_rho, unproject
from .epipolar import (
    DepthCandidates,
    EpipoleTable,
    build_epipole_table,
    candidate_mvs,
    epipole_curve,
)
from .errors import CandidateUnavailable, DomainError, EpiguideError, SchemaError
from .motion import (
    EgoMotion,
    Pose,
    compose,
    invert,
    relative_camera_pose,
    vehicle_motion_pose,
)
from .predictor import (
    BlockSpec,
    EpipoleGuidedPredictor,
    PredictionResult,
    affine_subblock_mvs,
    best_depth_for_block,
    mse,
    predict_block,
    predict_frame,
    zero_motion_predict,
)
from .zonal import Box, EvalReport, Zone, ZoneSpec, average_precision, iou, zonal_map, zone_of

__version__ = "0.1.0"
