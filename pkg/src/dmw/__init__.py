"""Distance-matrix Wasserstein statistics for comparing finite metric
measure spaces."""

__version__ = "0.1.0"

from .core import DimensionError, DmwError, NumericalError, ParameterError, avg_norm, make_rng
from .estimators import (
    DmwEstimate,
    EmpiricalMatrixLaw,
    ScaleWeights,
    empirical_dmw,
    enumerate_matrix_law,
    exact_dmw,
    hierarchy_check,
    multiscale_dmw,
    sample_matrix_law,
    sliced_dmw,
    softmin_weights,
)
from .gw import GwEstimate, gw_entropic, gw_permutation_min
from .kernels import (
    GramMatrix,
    TwoSampleResult,
    gram_from_dissimilarity,
    mmd2_unbiased,
    msdmw_dissimilarity_matrix,
    permutation_test,
)
from .ot import TransportPlan, assignment_ot, exact_ot, sinkhorn, w1d_pth_power
from .spaces import FiniteMetricMeasureSpace, GraphSpec, space_from_graph, load_tu_dataset

__all__ = [
    "DimensionError", "DmwError", "NumericalError", "ParameterError", "avg_norm", "make_rng",
    "DmwEstimate", "EmpiricalMatrixLaw", "ScaleWeights", "empirical_dmw", "enumerate_matrix_law", "exact_dmw",
    "hierarchy_check", "multiscale_dmw", "sample_matrix_law", "sliced_dmw", "softmin_weights",
    "GwEstimate", "gw_entropic", "gw_permutation_min",
    "GramMatrix", "TwoSampleResult", "gram_from_dissimilarity", "mmd2_unbiased", "msdmw_dissimilarity_matrix",
    "permutation_test",
    "TransportPlan", "assignment_ot", "exact_ot", "sinkhorn", "w1d_pth_power",
    "FiniteMetricMeasureSpace", "GraphSpec", "space_from_graph", "load_tu_dataset",
]
