"""Eigenfunction decomposition and precoding for space-time channel kernels."""

__version__ = "0.1.0"

from .errors import DomainError, KernelFormatError, RankZeroError
from .hogmt import EigenSystem, TruncationPolicy, decompose_2d, decompose_4d, reconstruct
from .precoder import PrecoderConfig, PrecodeResult, precode_spatial, precode_st, solve_projection_coefficients
from .tensor_core import ChannelKernel, GridShape, SymbolFrame, apply_kernel, load_kernel, save_kernel

__all__ = [
    "ChannelKernel", "DomainError", "EigenSystem", "GridShape", "KernelFormatError", "PrecodeResult",
    "PrecoderConfig", "RankZeroError", "SymbolFrame", "TruncationPolicy", "apply_kernel", "decompose_2d",
    "decompose_4d", "load_kernel", "precode_spatial", "precode_st", "reconstruct", "save_kernel",
    "solve_projection_coefficients",
]
