"""Disruption attacks on conditional inference in multivariate Gaussian models.

The attacker corrupts evidence ``z`` within a box to maximize a weighted
trade-off between the divergence it causes in the posterior over ``Y`` and
the implausibility of the corrupted evidence. White-box attacks know the
joint; grey-box attacks only hold a prior over it.
"""
from .convexity import ConvexityReport, Curvature, analyze, weyl_bounds
from .errors import (
    CertificationError,
    DataError,
    DegenerateNormalization,
    DimensionError,
    InvalidJointError,
    MVGAttackError,
    SamplingError,
    SchemaError,
    SingularMatrixError,
    VertexLimitError,
)
from .gauss import GaussianJoint, Partition, condition, kl_gaussians
from .greybox import NIWPrior, PointMassPrior, SGAConfig, solve_saa, solve_sga
from .objective import AttackProblem, BoxRegion, ComponentObjectives, assemble_wb
from .solvers import SolveConfig, SolveReport, solve_white_box, white_box_components
from .stochastics import NIWParams, SeededStream

__version__ = "0.1.0"

__all__ = [
    "AttackProblem", "BoxRegion", "CertificationError", "ComponentObjectives", "ConvexityReport", "Curvature",
    "DataError", "DegenerateNormalization", "DimensionError", "GaussianJoint", "InvalidJointError",
    "MVGAttackError", "NIWParams", "NIWPrior", "Partition", "PointMassPrior", "SGAConfig", "SamplingError",
    "SchemaError", "SeededStream", "SingularMatrixError", "SolveConfig", "SolveReport", "VertexLimitError",
    "analyze", "assemble_wb", "condition", "kl_gaussians", "solve_saa", "solve_sga", "solve_white_box",
    "weyl_bounds", "white_box_components",
]
