"""Spherical-target LiDAR-camera extrinsic calibration.

The heavy lifting lives in the C++ extension module; this package re-exports
its public surface.
"""

from ._core import (
    CalibrationError,
    CalibrationResult,
    CameraConfig,
    CameraIntrinsics,
    CorruptionSpec,
    Ellipse,
    EllipseDetection,
    LidarConfig,
    LidarExtraction,
    NoiseModel,
    RigidTransform,
    ScanPattern,
    SceneSpec,
    SolverConfig,
    SphereParams,
    TruthMetrics,
    Verdict,
    __version__,
    calibrate,
    compensate_center,
    detect_ellipse,
    evaluate_against_truth,
    extract_center_2d,
    extract_sphere_center,
    fit_ellipse_direct,
    fit_sphere_4pts,
    generate_scan,
    project_point,
    render_mask,
    rotation_geodesic_deg,
    sphere_outline_ellipse,
)

__all__ = [
    "CalibrationError",
    "CalibrationResult",
    "CameraConfig",
    "CameraIntrinsics",
    "CorruptionSpec",
    "Ellipse",
    "EllipseDetection",
    "LidarConfig",
    "LidarExtraction",
    "NoiseModel",
    "RigidTransform",
    "ScanPattern",
    "SceneSpec",
    "SolverConfig",
    "SphereParams",
    "TruthMetrics",
    "Verdict",
    "__version__",
    "calibrate",
    "compensate_center",
    "detect_ellipse",
    "evaluate_against_truth",
    "extract_center_2d",
    "extract_sphere_center",
    "fit_ellipse_direct",
    "fit_sphere_4pts",
    "generate_scan",
    "project_point",
    "render_mask",
    "rotation_geodesic_deg",
    "sphere_outline_ellipse",
]
