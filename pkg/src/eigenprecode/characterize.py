"""Second-order characterization: time correlation, stationarity, kernel slices."""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import DomainError
from .tensor_core import ChannelKernel, PathType


@dataclass(frozen=True, eq=False)
class StationarityReport:
    eta: float
    energy_profile: np.ndarray
    dominant_modes: int
    burn_in: int = 0

    def to_dict(self) -> dict:
        return {
            "eta": self.eta,
            "energy_profile": [float(v) for v in self.energy_profile],
            "dominant_modes": self.dominant_modes,
            "burn_in": self.burn_in,
        }


def time_correlation(kernel: ChannelKernel) -> np.ndarray:
    """``R[t, t2] = sum_{u, u', t'} k[u,t; u',t'] * conj(k[u,t2; u',t'])``."""
    k = kernel.as_tensor()
    return np.einsum("aibc,ajbc->ij", k, k.conj())


def memory_length(kernel: ChannelKernel) -> int:
    """Largest lag ``t - t'`` carrying a nonzero kernel entry (0 when memoryless)."""
    k = kernel.as_tensor()
    support = np.any(k != 0, axis=(0, 2))
    t, tp = np.nonzero(support)
    if t.size == 0:
        return 0
    return int(max(0, (t - tp).max()))


def toeplitz_average(R: np.ndarray) -> np.ndarray:
    """Replace every diagonal of ``R`` by its mean."""
    n = R.shape[0]
    out = np.empty_like(R)
    for offset in range(-(n - 1), n):
        diag = np.diagonal(R, offset)
        idx = np.arange(diag.size)
        rows, cols = (idx, idx + offset) if offset >= 0 else (idx - offset, idx)
        out[rows, cols] = diag.mean()
    return out


def stationarity_metric(R, burn_in: int = 0, energy: float = 0.99) -> StationarityReport:
    """Relative distance of ``R`` from its diagonal-averaged Toeplitz form.

    The first ``burn_in`` time indices are excluded; for a kernel with memory
    ``L - 1`` those rows see a truncated past even when the channel is stationary.
    """
    R = np.asarray(R, dtype=np.complex128)
    if R.ndim != 2 or R.shape[0] != R.shape[1]:
        raise DomainError(f"correlation must be square, got shape {R.shape}")
    if not 0 <= burn_in < R.shape[0]:
        raise DomainError(f"burn_in {burn_in} leaves no samples of {R.shape[0]}")
    R = R[burn_in:, burn_in:]
    norm = np.linalg.norm(R)
    if norm == 0.0:
        raise DomainError("degenerate correlation: zero matrix")
    eta = float(np.linalg.norm(R - toeplitz_average(R)) / norm)
    evals = np.clip(np.linalg.eigvalsh((R + R.conj().T) / 2)[::-1], 0.0, None)
    total = evals.sum()
    dominant = int(np.searchsorted(np.cumsum(evals), energy * total, side="left")) + 1 if total > 0 else 0
    return StationarityReport(eta, R.diagonal().real.copy(), min(dominant, len(evals)), burn_in)


def kernel_stationarity(kernel: ChannelKernel) -> StationarityReport:
    """Stationarity of a kernel's time correlation, skipping its start-up transient."""
    R = time_correlation(kernel)
    burn_in = min(memory_length(kernel), R.shape[0] - 1)
    return stationarity_metric(R, burn_in=burn_in)


def kernel_slice(kernel: ChannelKernel, u: int, t: int) -> np.ndarray:
    """``|k[u, t; u', t']|`` as a ``(Nu_in, T_in)`` matrix."""
    nu, T = kernel.out_shape.dims
    if not 0 <= u < nu:
        raise DomainError(f"user index u={u} out of range [0, {nu})")
    if not 0 <= t < T:
        raise DomainError(f"time index t={t} out of range [0, {T})")
    return np.abs(kernel.as_tensor()[u, t])


def _matrix_csv(mat: np.ndarray) -> str:
    return "".join(",".join(repr(float(v)) for v in row) + "\n" for row in mat)


def slice_filename(u: int, t: int) -> str:
    return f"slice_u{u}_t{t}.csv"


def slices_plot_script(u: int, times: Iterable[int]) -> str:
    times = list(times)
    lines = [
        "# gnuplot script: heatmaps of |k[u,t;u',t']| over (u', t')",
        "set datafile separator ','",
        "set terminal pngcairo size 1200,400",
        f"set output 'slices_u{u}.png'",
        "set xlabel \"t'\"",
        "set ylabel \"u'\"",
        "unset key",
        f"set multiplot layout 1,{len(times)}",
    ]
    for t in times:
        lines.append(f"set title 'u={u}, t={t}'")
        lines.append(f"plot '{slice_filename(u, t)}' matrix with image")
    lines.append("unset multiplot")
    return "\n".join(lines) + "\n"


def export_kernel_slices(kernel: ChannelKernel, u: int, times: Iterable[int], out_dir: PathType) -> list[str]:
    """Write one ``|k|`` matrix CSV per requested time plus a gnuplot script; returns paths."""
    times = list(times)
    slices = [kernel_slice(kernel, u, t) for t in times]
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for t, mat in zip(times, slices):
        path = os.path.join(out_dir, slice_filename(u, t))
        with open(path, "w") as fh:
            fh.write(_matrix_csv(mat))
        paths.append(path)
    script = os.path.join(out_dir, f"slices_u{u}.gp")
    with open(script, "w") as fh:
        fh.write(slices_plot_script(u, times))
    paths.append(script)
    return paths
