"""Cheeger constants, p-Laplacian eigenvalues and the spectral ratio F_p on convex shapes."""

from .bounds import BoundReport, check_sandwich, evaluate_bound, run_suite, violations
from .cheeger import (
    CheegerResult,
    grid_cheeger,
    klr_cheeger,
    rectangle_cheeger,
    shape_cheeger,
)
from .geometry import (
    Ball,
    Box,
    ConvexPolygon,
    Grid,
    GridMask,
    Interval,
    Polygon,
    Product,
    extrude,
    load_shape,
    voxelize,
)
from .search import (
    ball_asymptotics,
    estimate_m,
    optimize_cylinder_height,
    sweep,
    verify_strict_decrease,
)
from .spectral import (
    SpectralResult,
    bessel_zero,
    grid_lambda_2,
    grid_lambda_p,
    lambda_p,
)

__version__ = "0.1.0"

__all__ = [
    "Ball",
    "BoundReport",
    "Box",
    "CheegerResult",
    "ConvexPolygon",
    "Grid",
    "GridMask",
    "Interval",
    "Polygon",
    "Product",
    "SpectralResult",
    "ball_asymptotics",
    "bessel_zero",
    "check_sandwich",
    "estimate_m",
    "evaluate_bound",
    "extrude",
    "grid_cheeger",
    "grid_lambda_2",
    "grid_lambda_p",
    "klr_cheeger",
    "lambda_p",
    "load_shape",
    "optimize_cylinder_height",
    "rectangle_cheeger",
    "run_suite",
    "shape_cheeger",
    "sweep",
    "verify_strict_decrease",
    "violations",
    "voxelize",
]
