"""Anchored decompositions, Lambda-subspace kernels and penalized least-squares approximation."""

from .decomposition import BlackBoxFunction, anchored_component, build_truncation_plan, eval_truncation
from .errors import (
    AnchoredApproxError,
    CapabilityError,
    CoercivityError,
    InputError,
    NumericalError,
    StepError,
)
from .index_sets import DownwardClosedFamily, SubsetMask, order_family
from .kernels import LambdaKernel, UnivariateKernel, gram, make_lambda_kernel
from .points import Anchor, Box, SamplingSet, sparse_sampling_set, uniform_sampling_set
from .regression import LambdaRule, fit_plain, fit_weighted, predict, select_lambda
from .weights import WeightScheme, epsilon, gamma_weight, select_order, tail_sum_bound, tail_sum_exact

__version__ = "0.1.0"

__all__ = [
    "AnchoredApproxError", "Anchor", "BlackBoxFunction", "Box", "CapabilityError", "CoercivityError",
    "DownwardClosedFamily", "InputError", "LambdaKernel", "LambdaRule", "NumericalError", "SamplingSet",
    "StepError", "SubsetMask", "UnivariateKernel", "WeightScheme", "anchored_component",
    "build_truncation_plan", "epsilon", "eval_truncation", "fit_plain", "fit_weighted", "gamma_weight",
    "gram", "make_lambda_kernel", "order_family", "predict", "select_lambda", "select_order",
    "sparse_sampling_set", "tail_sum_bound", "tail_sum_exact", "uniform_sampling_set",
]
