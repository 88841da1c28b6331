"""Sequential and batch-sequential Kriging designs for global surrogate fitting."""

__version__ = "0.1.0"

from .batch_select import ClusterParams, ClusterPartition, select_batch
from .criteria import Criterion, argmax_over_candidates, score_candidates
from .design_space import DesignMatrix, latin_hypercube, md_optimized_design, mixture_discrepancy
from .kernels import KernelSpec
from .kriging import KrigingModel, fit
from .sequential import CampaignConfig, CampaignResult, run_campaign
from .testbed import TestFunction, get_function, run_comparison

__all__ = [
    "ClusterParams",
    "ClusterPartition",
    "select_batch",
    "Criterion",
    "argmax_over_candidates",
    "score_candidates",
    "DesignMatrix",
    "latin_hypercube",
    "md_optimized_design",
    "mixture_discrepancy",
    "KernelSpec",
    "KrigingModel",
    "fit",
    "CampaignConfig",
    "CampaignResult",
    "run_campaign",
    "TestFunction",
    "get_function",
    "run_comparison",
]
