"""Dense scale selection from quasi quadrature measures over spatial, temporal and joint scale spaces."""
from .calibration import CalibrationModel, CalibrationSolution, apply_calibration, solve
from .errors import (
    DenseScaleError,
    FormatError,
    KindError,
    NoRootError,
    ParameterError,
    StateError,
    UnsupportedError,
)
from .io import read_frames, read_image, read_signal, write_frames, write_image, write_signal
from .quadrature import QuadratureField, QuadratureParams, STQuadratureField, post_smooth, spatial_quadrature
from .scalespace import (
    FrameStream,
    ScaleLadder,
    Signal1D,
    TimeCausalCascade,
    build_spatial_scalespace,
    build_spatiotemporal_scalespace,
    build_temporal_scalespace,
)
from .selection import JointScaleMap, ScaleEstimate, ScaleMap, detect_extrema, select_dense, select_joint_st
from .synth import SyntheticSpec, generate, oracle_predict

__version__ = "0.1.0"

__all__ = [
    "CalibrationModel", "CalibrationSolution", "apply_calibration", "solve",
    "DenseScaleError", "FormatError", "KindError", "NoRootError", "ParameterError", "StateError",
    "UnsupportedError",
    "read_frames", "read_image", "read_signal", "write_frames", "write_image", "write_signal",
    "QuadratureField", "QuadratureParams", "STQuadratureField", "post_smooth", "spatial_quadrature",
    "FrameStream", "ScaleLadder", "Signal1D", "TimeCausalCascade", "build_spatial_scalespace",
    "build_spatiotemporal_scalespace", "build_temporal_scalespace",
    "JointScaleMap", "ScaleEstimate", "ScaleMap", "detect_extrema", "select_dense", "select_joint_st",
    "SyntheticSpec", "generate", "oracle_predict",
]
