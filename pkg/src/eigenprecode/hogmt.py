"""Eigen-decomposition of 2-D and 4-D kernels into paired eigenfunctions.

A kernel ``k[u,t; u',t']`` is split into an output index group ``(u, t)`` and
an input index group ``(u', t')``.  Unfolding each group turns the kernel into
an ``M_out x M_in`` matrix whose SVD gives

    k[m, m'] = sum_n sigma_n * psi_n[m] * phi_n[m']

with ``{psi_n}`` and ``{phi_n}`` each orthonormal over their grid.

Storage convention
------------------
``EigenSystem.phi`` holds the *transmit-side* factor, i.e. the frames that are
actually sent through the channel.  Column ``n`` satisfies
``K @ phi[:, n] == sigma_n * psi[:, n]``.  The expansion factor ``phi_n`` in the
formula above is its complex conjugate, available as ``EigenSystem.expansion_phi``.

Gauge: every stored ``phi`` column is rotated so that its largest-magnitude
entry is real and positive; the compensating phase is absorbed into ``psi``.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DomainError
from .tensor_core import ChannelKernel, GridShape, SymbolFrame, apply_kernel

DEFAULT_SIGMA_FLOOR = 1e-12


@dataclass(frozen=True)
class TruncationPolicy:
    """Rule for how many leading modes to keep.

    ``mode`` is one of ``keep_all``, ``energy_threshold`` (``value`` = fraction of
    spectral energy that may be dropped), ``max_modes`` (``value`` = count) or
    ``sigma_floor`` (``value`` = smallest singular value kept).
    """

    mode: str = "keep_all"
    value: Optional[float] = None

    def __post_init__(self):
        if self.mode == "keep_all":
            return
        if self.value is None:
            raise DomainError(f"truncation mode {self.mode!r} needs a value")
        if self.mode == "energy_threshold":
            if not 0.0 < self.value < 1.0:
                raise DomainError(f"energy threshold must lie in (0, 1), got {self.value}")
        elif self.mode == "max_modes":
            if int(self.value) != self.value or self.value < 0:
                raise DomainError(f"max_modes must be a non-negative integer, got {self.value}")
            object.__setattr__(self, "value", int(self.value))
        elif self.mode == "sigma_floor":
            if not self.value > 0:
                raise DomainError(f"sigma floor must be positive, got {self.value}")
        else:
            raise DomainError(f"unknown truncation mode {self.mode!r}")

    @classmethod
    def keep_all(cls):
        return cls("keep_all")

    @classmethod
    def energy_threshold(cls, eps: float):
        return cls("energy_threshold", eps)

    @classmethod
    def max_modes(cls, n: int):
        return cls("max_modes", n)

    @classmethod
    def sigma_floor(cls, delta: float):
        return cls("sigma_floor", delta)

    def count(self, sigmas: np.ndarray) -> int:
        """Number of leading modes kept from descending ``sigmas``."""
        n = len(sigmas)
        if self.mode == "keep_all":
            return n
        if self.mode == "max_modes":
            return min(self.value, n)
        if self.mode == "sigma_floor":
            return int(np.count_nonzero(sigmas >= self.value))
        energy = np.cumsum(sigmas.astype(float) ** 2)
        if n == 0 or energy[-1] == 0.0:
            return 0
        target = (1.0 - self.value) * energy[-1]
        return int(np.searchsorted(energy, target, side="left")) + 1

    def describe(self) -> str:
        return self.mode if self.value is None else f"{self.mode}={self.value}"


@dataclass(frozen=True, eq=False)
class EigenSystem:
    """Singular values with paired output/input eigenfunctions.

    ``psi[:, n]`` is unfolded over ``out_shape``, ``phi[:, n]`` over ``in_shape``.
    ``dropped_sigmas`` lists the singular values removed by truncation, so
    ``sigmas`` and ``dropped_sigmas`` together form the full spectrum.
    """

    sigmas: np.ndarray
    psi: np.ndarray
    phi: np.ndarray
    out_shape: GridShape
    in_shape: GridShape
    source_norm: float
    dropped_sigmas: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def num_modes(self) -> int:
        return len(self.sigmas)

    @property
    def expansion_phi(self) -> np.ndarray:
        """Input factor in the ``sum sigma psi(m) phi(m')`` expansion (conjugate of ``phi``)."""
        return self.phi.conj()

    def psi_frame(self, n: int) -> SymbolFrame:
        self._check_mode(n)
        return SymbolFrame(self.out_shape, self.psi[:, n])

    def phi_frame(self, n: int) -> SymbolFrame:
        self._check_mode(n)
        return SymbolFrame(self.in_shape, self.phi[:, n])

    def psi_grid(self, n: int) -> np.ndarray:
        return self.psi_frame(n).as_grid()

    def phi_grid(self, n: int) -> np.ndarray:
        return self.phi_frame(n).as_grid()

    def truncate(self, policy: TruncationPolicy) -> "EigenSystem":
        keep = policy.count(self.sigmas)
        return EigenSystem(
            sigmas=self.sigmas[:keep],
            psi=self.psi[:, :keep],
            phi=self.phi[:, :keep],
            out_shape=self.out_shape,
            in_shape=self.in_shape,
            source_norm=self.source_norm,
            dropped_sigmas=np.concatenate([self.sigmas[keep:], self.dropped_sigmas]),
        )

    def _check_mode(self, n):
        if not 0 <= n < self.num_modes:
            raise DomainError(f"mode index {n} out of range [0, {self.num_modes})")


def _fix_gauge(psi: np.ndarray, phi: np.ndarray) -> None:
    """Make the largest-magnitude entry of each phi column real positive (in place)."""
    if phi.shape[1] == 0:
        return
    idx = np.argmax(np.abs(phi), axis=0)
    pivots = phi[idx, np.arange(phi.shape[1])]
    phases = np.ones_like(pivots)
    nz = pivots != 0
    phases[nz] = pivots[nz] / np.abs(pivots[nz])
    phi /= phases
    psi /= phases
    phi[idx, np.arange(phi.shape[1])] = np.abs(pivots)


def _decompose_matrix(matrix: np.ndarray, out_shape: GridShape, in_shape: GridShape) -> EigenSystem:
    if not np.all(np.isfinite(matrix)):
        raise DomainError("kernel contains non-finite entries")
    u, s, vh = np.linalg.svd(matrix, full_matrices=False)
    psi = np.array(u, dtype=np.complex128)
    phi = np.array(vh.conj().T, dtype=np.complex128)
    _fix_gauge(psi, phi)
    for arr in (s, psi, phi):
        arr.flags.writeable = False
    return EigenSystem(
        sigmas=s,
        psi=psi,
        phi=phi,
        out_shape=out_shape,
        in_shape=in_shape,
        source_norm=float(np.linalg.norm(matrix)),
    )


def decompose_2d(matrix, out_shape: Optional[GridShape] = None,
                 in_shape: Optional[GridShape] = None) -> EigenSystem:
    """Decompose a 2-D kernel ``K(t, t')`` given as a matrix.

    Without explicit grids the rows and columns are treated as a single-user
    time axis.
    """
    matrix = np.asarray(matrix, dtype=np.complex128)
    if matrix.ndim != 2 or min(matrix.shape) < 1:
        raise DomainError(f"expected a non-empty 2-D matrix, got shape {matrix.shape}")
    out_shape = out_shape or GridShape(1, matrix.shape[0])
    in_shape = in_shape or GridShape(1, matrix.shape[1])
    if (out_shape.size, in_shape.size) != matrix.shape:
        raise DomainError(f"grids {out_shape.dims}/{in_shape.dims} do not fit matrix {matrix.shape}")
    return _decompose_matrix(matrix, out_shape, in_shape)


def decompose_4d(kernel: ChannelKernel, policy: TruncationPolicy = TruncationPolicy()) -> EigenSystem:
    """Decompose ``k[u,t; u',t']`` by unfolding ``(u,t)`` and ``(u',t')`` and truncating."""
    system = _decompose_matrix(kernel.data, kernel.out_shape, kernel.in_shape)
    return system.truncate(policy)


def reconstruct(system: EigenSystem) -> ChannelKernel:
    data = (system.psi * system.sigmas) @ system.phi.conj().T
    return ChannelKernel(system.out_shape, system.in_shape, data)


def channel_eigen_identity_check(kernel: ChannelKernel, system: EigenSystem, n: int,
                                 floor: float = DEFAULT_SIGMA_FLOOR) -> float:
    """Relative residual of ``K phi_n = sigma_n psi_n`` for mode ``n``."""
    sent = system.phi_frame(n)
    received = apply_kernel(kernel, sent).data
    sigma = system.sigmas[n]
    return float(np.linalg.norm(received - sigma * system.psi[:, n]) / max(sigma, floor))


def sigmas_to_csv(system: EigenSystem) -> str:
    buf = io.StringIO()
    buf.write("n,sigma\n")
    for n, sigma in enumerate(system.sigmas):
        buf.write(f"{n},{float(sigma)!r}\n")
    return buf.getvalue()


def eigen_factor_kernels(system: EigenSystem) -> tuple[ChannelKernel, ChannelKernel]:
    """Pack ``psi`` and ``phi`` as kernels (grid x mode) for the HGMT container."""
    modes = GridShape(1, max(system.num_modes, 1))
    psi, phi = system.psi, system.phi
    if system.num_modes == 0:
        psi = np.zeros((system.out_shape.size, 1))
        phi = np.zeros((system.in_shape.size, 1))
    return (ChannelKernel(system.out_shape, modes, psi), ChannelKernel(system.in_shape, modes, phi))
