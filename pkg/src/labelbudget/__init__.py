"""labelbudget: simulate segmentation-labeling strategies on volumetric
datasets under controlled effort budgets and compute the optimal labeling
trajectory."""

from ._kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = ["KERNEL_BACKEND", "__version__"]
