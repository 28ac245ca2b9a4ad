"""Interference-cancelling precoders built on the kernel eigen-decomposition.

Given an intended frame ``s`` the eigenfunction precoder transmits

    x = sum_n (<s, psi_n> / sigma_n) * phi_n

where ``phi_n`` are the stored transmit-side eigenfunctions, so the channel
delivers ``K x = sum_n <s, psi_n> psi_n``: the projection of ``s`` onto the
kept output eigenfunctions, and ``s`` itself when every mode is kept.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .errors import ConvergenceError, DomainError, RankZeroError, SingularGramError
from .hogmt import DEFAULT_SIGMA_FLOOR, EigenSystem, TruncationPolicy, decompose_4d
from .tensor_core import ChannelKernel, GridShape, SymbolFrame


@dataclass(frozen=True)
class PrecoderConfig:
    """Precoder settings.

    ``sigma_floor`` is relative to the largest singular value: modes with
    ``sigma_n <= sigma_floor * sigma_1`` are never inverted.  ``power`` is
    ``None`` for no normalization, otherwise the target ``||x||^2``.
    """

    truncation: TruncationPolicy = field(default_factory=TruncationPolicy)
    sigma_floor: float = DEFAULT_SIGMA_FLOOR
    power: Optional[float] = None

    def __post_init__(self):
        if not self.sigma_floor > 0:
            raise DomainError(f"sigma_floor must be > 0, got {self.sigma_floor}")
        if self.power is not None and not self.power > 0:
            raise DomainError(f"power must be > 0 when set, got {self.power}")


@dataclass(frozen=True, eq=False)
class PrecodeResult:
    x: SymbolFrame
    coefficients: np.ndarray
    kept_modes: int
    predicted_residual: float
    power_scale: float = 1.0

    def summary(self) -> dict:
        return {
            "kept_modes": self.kept_modes,
            "predicted_residual": self.predicted_residual,
            "power_scale": self.power_scale,
        }


def _usable_modes(system: EigenSystem, cfg: PrecoderConfig) -> int:
    if system.num_modes == 0:
        raise RankZeroError("kernel numerically rank-zero: no modes kept by truncation")
    sigma_max = max(system.sigmas[0], system.dropped_sigmas.max(initial=0.0))
    floor = cfg.sigma_floor * sigma_max
    usable = int(np.count_nonzero(system.sigmas > floor))
    if usable == 0:
        raise RankZeroError(f"kernel numerically rank-zero: all sigmas <= {floor:.3g}")
    return usable


def precode_with_system(system: EigenSystem, s: SymbolFrame, cfg: PrecoderConfig = PrecoderConfig()) -> PrecodeResult:
    """Eigenfunction precoding from an already-truncated eigen-system."""
    if s.shape != system.out_shape:
        raise DomainError(f"frame shape {s.shape.dims} does not match kernel output shape {system.out_shape.dims}")
    keep = _usable_modes(system, cfg)
    psi = system.psi[:, :keep]
    projections = psi.conj().T @ s.data
    coefficients = projections / system.sigmas[:keep]
    x = system.phi[:, :keep] @ coefficients
    residual = float(np.linalg.norm(s.data - psi @ projections))

    scale = 1.0
    if cfg.power is not None:
        energy = float(np.vdot(x, x).real)
        if energy == 0.0:
            raise DomainError("cannot normalize power of an all-zero precoded frame")
        scale = float(np.sqrt(cfg.power / energy))
        x = x * scale
    coefficients.flags.writeable = False
    return PrecodeResult(SymbolFrame(system.in_shape, x), coefficients, keep, residual, scale)


def precode_st(kernel: ChannelKernel, s: SymbolFrame, cfg: PrecoderConfig = PrecoderConfig()) -> PrecodeResult:
    """Joint space-time precoding against a 4-D kernel."""
    if s.shape != kernel.out_shape:
        raise DomainError(f"frame shape {s.shape.dims} does not match kernel output shape {kernel.out_shape.dims}")
    return precode_with_system(decompose_4d(kernel, cfg.truncation), s, cfg)


def precode_spatial(kernel: Union[ChannelKernel, np.ndarray], s, cfg: PrecoderConfig = PrecoderConfig()) -> PrecodeResult:
    """Spatial-only precoding against a ``k[u, u']`` kernel.

    ``kernel`` may be an ``Nu x Nu`` array or a single-time-slot kernel; ``s`` a
    length-``Nu`` vector or frame.
    """
    if not isinstance(kernel, ChannelKernel):
        kernel = ChannelKernel.spatial(kernel)
    if kernel.out_shape.num_times != 1 or kernel.in_shape.num_times != 1:
        raise DomainError("spatial precoding needs a kernel with a single time slot")
    if not isinstance(s, SymbolFrame):
        s = SymbolFrame(GridShape(np.size(s), 1), s)
    return precode_st(kernel, s, cfg)


def spatial_slot_kernel(kernel: ChannelKernel, t: int) -> ChannelKernel:
    """Instantaneous spatial kernel ``k[u, t; u', t]`` of a space-time kernel."""
    tensor = kernel.as_tensor()
    return ChannelKernel.spatial(tensor[:, t, :, t])


# ---------------------------------------------------------------------------
# General projection solver
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GaussSeidel:
    iters: int = 500
    tol: float = 1e-12


def _as_vector(frame) -> np.ndarray:
    return frame.data if isinstance(frame, SymbolFrame) else np.asarray(frame, dtype=np.complex128).ravel()


def projection_system(kernel: ChannelKernel, s: SymbolFrame, basis: Sequence) -> tuple[np.ndarray, np.ndarray]:
    """Gram matrix ``G[n, n'] = <c_n', c_n>`` and ``b[n] = <s, c_n>`` for ``c_n = K phi_n``."""
    if not len(basis):
        raise DomainError("basis is empty")
    phis = np.column_stack([_as_vector(f) for f in basis])
    if phis.shape[0] != kernel.in_shape.size:
        raise DomainError(f"basis frames have length {phis.shape[0]}, kernel input needs {kernel.in_shape.size}")
    if not np.all(np.any(phis != 0, axis=0)):
        raise DomainError("basis contains an all-zero frame")
    if s.shape != kernel.out_shape:
        raise DomainError(f"frame shape {s.shape.dims} does not match kernel output shape {kernel.out_shape.dims}")
    projected = kernel.data @ phis
    if not np.any(projected):
        raise DomainError("every projected basis frame is zero")
    gram = projected.conj().T @ projected
    rhs = projected.conj().T @ s.data
    return gram, rhs


def _gauss_seidel(gram, rhs, iters, tol):
    x = np.zeros_like(rhs)
    diag = gram.diagonal()
    scale = max(np.linalg.norm(rhs), np.finfo(float).tiny)
    residual = np.inf
    for it in range(1, iters + 1):
        for n in range(len(x)):
            coupling = gram[n] @ x - diag[n] * x[n]
            x[n] = (rhs[n] - coupling) / diag[n]
        residual = float(np.linalg.norm(gram @ x - rhs) / scale)
        if residual <= tol:
            return x
    raise ConvergenceError(
        f"Gauss-Seidel did not converge in {iters} iterations (residual {residual:.3e})", residual, iters
    )


def solve_projection_coefficients(kernel: ChannelKernel, s: SymbolFrame, basis: Sequence,
                                  method: Union[str, GaussSeidel] = "gram_solve") -> np.ndarray:
    """Coefficients ``x_n`` minimizing ``||s - K sum_n x_n phi_n||^2`` over a given basis.

    ``method`` is ``"gram_solve"`` (direct solve of the stationarity system) or a
    :class:`GaussSeidel` instance, which sweeps the coupled per-coefficient
    update until the relative residual falls below ``tol``.
    """
    gram, rhs = projection_system(kernel, s, basis)
    diag = gram.diagonal().real
    rank = int(np.linalg.matrix_rank(gram, hermitian=True))
    if rank < len(rhs) or np.any(diag == 0):
        raise SingularGramError(f"Gram matrix is singular: numerical rank {rank} of {len(rhs)}", rank)
    if method == "gram_solve":
        return np.linalg.solve(gram, rhs)
    if isinstance(method, GaussSeidel):
        return _gauss_seidel(gram, rhs, method.iters, method.tol)
    raise DomainError(f"unknown method {method!r}")


def synthesize(basis: Sequence, coefficients, shape: GridShape) -> SymbolFrame:
    phis = np.column_stack([_as_vector(f) for f in basis])
    return SymbolFrame(shape, phis @ np.asarray(coefficients))


def projection_error(kernel: ChannelKernel, s: SymbolFrame, basis: Sequence, coefficients) -> float:
    """Squared residual ``||s - K x||^2`` for ``x = sum_n x_n phi_n``."""
    x = synthesize(basis, coefficients, kernel.in_shape)
    diff = s.data - kernel.data @ x.data
    return float(np.vdot(diff, diff).real)
