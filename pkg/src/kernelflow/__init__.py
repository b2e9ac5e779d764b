"""Kernel regression with closed-form, early-stopped, sparse and robust solvers."""

__version__ = "0.1.0"

from ._backend import NAME as BACKEND
from .closed_form import DualCoefficients, FitModel, Regularizer, fit_kgf, fit_krr, predict
from .descent import DescentConfig, SolutionPath, run_descent, step_size_limit
from .errors import ConvergenceWarning, DivergenceError, InputError, NotPSDError, ParseError
from .estimators import METHODS, Estimator
from .kernels import Kernel, KernelSpec, cross_kernel_matrix, kernel_matrix
from .prox import ProxConfig, fit_prox, project_l1_ball, prox_linf, soft_threshold
from .spectral import SpectralDecomposition, SpectralFilter, eig_sym

__all__ = [
    "BACKEND", "ConvergenceWarning", "DescentConfig", "DivergenceError", "DualCoefficients",
    "Estimator", "FitModel", "InputError", "Kernel", "KernelSpec", "METHODS", "NotPSDError",
    "ParseError", "ProxConfig", "Regularizer", "SolutionPath", "SpectralDecomposition",
    "SpectralFilter", "cross_kernel_matrix", "eig_sym", "fit_kgf", "fit_krr", "fit_prox",
    "kernel_matrix", "predict", "project_l1_ball", "prox_linf", "run_descent",
    "soft_threshold", "step_size_limit",
]
