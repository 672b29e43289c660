"""Stereo distance measurement for thin objects such as tree branches.

Rectified stereo pair -> semi-global matching -> edge-preserving refinement
-> depth map -> one distance per segmentation mask.
"""

from .exceptions import (
    DimensionError,
    DomainError,
    EmptyMaskError,
    InconsistentPairError,
    MalformedHeaderError,
    MissingFileError,
    NoDataError,
    NoIntersectionError,
    ParameterError,
    ParseError,
    PipelineError,
    StereoError,
    TruncatedDataError,
    UnsupportedBitDepthError,
)
from .fusion import (
    BranchMask,
    DistanceEstimate,
    PipelineParams,
    StereoResult,
    estimate_distance,
    load_masks,
    rasterize_mask,
    run_pipeline,
    run_stereo,
)
from .geometry import (
    CameraIntrinsics,
    PixelCoord,
    Point3D,
    StereoRig,
    depth_map_from_disparity,
    disparity_to_depth,
    load_calibration,
    project,
    triangulate,
)
from .images import INVALID, gaussian_smooth, load_float_image, load_image, save_float_image
from .matching import SgbmParams, block_match, sgbm
from .metrics import Detection, EvalReport, iou_box, iou_mask, map_50_95, rmse
from .refine import WlsParams, fill_invalid, wls_filter
from .synth import SceneSpec, render, render_distance_suite

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
