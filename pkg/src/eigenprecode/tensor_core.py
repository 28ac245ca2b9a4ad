"""Kernel and frame containers plus their on-disk formats.

A kernel ``k[u, t; u', t']`` is stored unfolded as an ``M_out x M_in`` complex
matrix, where a grid index ``(u, t)`` maps to the linear index ``u * T + t``
(user-major, time-minor).  Frames are stored as length-``M`` vectors in the
same order.  All integrals over ``(u, t)`` become plain sums with unit
weights, so ``<a, b> = sum(a * conj(b))``.
"""

from __future__ import annotations

import csv
import io
import struct
from dataclasses import dataclass
from os import PathLike
from typing import Union

import numpy as np

from .errors import (
    BadMagicError,
    DimensionOverflowError,
    DomainError,
    FrameFormatError,
    KernelFormatError,
    TruncatedPayloadError,
    VersionMismatchError,
)

PathType = Union[str, PathLike]

MAGIC = b"HGMT"
VERSION = 1
_HEADER = struct.Struct("<4sI4I")
# Refuse to allocate more than this many complex entries from a file header.
MAX_ENTRIES = 1 << 31


@dataclass(frozen=True)
class GridShape:
    """Discrete ``(user, time)`` index set."""

    num_users: int
    num_times: int

    def __post_init__(self):
        for name in ("num_users", "num_times"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
                raise DomainError(f"{name} must be a positive integer, got {value!r}")
            object.__setattr__(self, name, int(value))

    @property
    def size(self) -> int:
        return self.num_users * self.num_times

    @property
    def dims(self) -> tuple[int, int]:
        return (self.num_users, self.num_times)


def flatten(u: int, t: int, shape: GridShape) -> int:
    if not 0 <= u < shape.num_users:
        raise DomainError(f"user index u={u} out of range [0, {shape.num_users})")
    if not 0 <= t < shape.num_times:
        raise DomainError(f"time index t={t} out of range [0, {shape.num_times})")
    return u * shape.num_times + t


def unflatten(m: int, shape: GridShape) -> tuple[int, int]:
    if not 0 <= m < shape.size:
        raise DomainError(f"linear index m={m} out of range [0, {shape.size})")
    return divmod(m, shape.num_times)


class IndexMap:
    """Bijection between ``(u, t)`` pairs and linear indices for one grid."""

    def __init__(self, shape: GridShape):
        self.shape = shape

    def flatten(self, u: int, t: int) -> int:
        return flatten(u, t, self.shape)

    def unflatten(self, m: int) -> tuple[int, int]:
        return unflatten(m, self.shape)

    def __len__(self):
        return self.shape.size

    def __iter__(self):
        for m in range(self.shape.size):
            yield self.unflatten(m)


def _frozen_complex(data, ndim: int, what: str) -> np.ndarray:
    arr = np.array(data, dtype=np.complex128, copy=True)
    if arr.ndim != ndim:
        raise DomainError(f"{what} must be {ndim}-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{what} contains non-finite entries")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class ChannelKernel:
    """Discrete channel operator in unfolded ``(out, in)`` form."""

    out_shape: GridShape
    in_shape: GridShape
    data: np.ndarray

    def __post_init__(self):
        data = _frozen_complex(self.data, 2, "kernel data")
        expected = (self.out_shape.size, self.in_shape.size)
        if data.shape != expected:
            raise DomainError(f"kernel data shape {data.shape} does not match grids {expected}")
        object.__setattr__(self, "data", data)

    @classmethod
    def from_tensor(cls, tensor) -> "ChannelKernel":
        """Build from a 4-D array indexed ``[u, t, u', t']``."""
        tensor = np.asarray(tensor)
        if tensor.ndim != 4:
            raise DomainError(f"expected a 4-D tensor, got shape {tensor.shape}")
        nu, t, nu_in, t_in = tensor.shape
        out_shape, in_shape = GridShape(nu, t), GridShape(nu_in, t_in)
        return cls(out_shape, in_shape, tensor.reshape(out_shape.size, in_shape.size))

    @classmethod
    def identity(cls, shape: GridShape) -> "ChannelKernel":
        return cls(shape, shape, np.eye(shape.size))

    @classmethod
    def spatial(cls, matrix) -> "ChannelKernel":
        """Wrap a ``k[u, u']`` spatial kernel as a single-time-slot kernel."""
        matrix = np.asarray(matrix)
        if matrix.ndim != 2:
            raise DomainError(f"spatial kernel must be 2-D, got shape {matrix.shape}")
        return cls(GridShape(matrix.shape[0], 1), GridShape(matrix.shape[1], 1), matrix)

    def as_tensor(self) -> np.ndarray:
        return self.data.reshape(self.out_shape.dims + self.in_shape.dims)

    @property
    def fro_norm(self) -> float:
        return float(np.linalg.norm(self.data))

    def __eq__(self, other):
        if not isinstance(other, ChannelKernel):
            return NotImplemented
        return (
            self.out_shape == other.out_shape
            and self.in_shape == other.in_shape
            and np.array_equal(self.data, other.data)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class SymbolFrame:
    """Samples on a ``(user, time)`` grid, unfolded to a vector."""

    shape: GridShape
    data: np.ndarray

    def __post_init__(self):
        data = _frozen_complex(np.ravel(self.data), 1, "frame data")
        if data.size != self.shape.size:
            raise DomainError(f"frame length {data.size} does not match grid size {self.shape.size}")
        object.__setattr__(self, "data", data)

    @classmethod
    def from_grid(cls, grid) -> "SymbolFrame":
        grid = np.asarray(grid)
        if grid.ndim != 2:
            raise DomainError(f"expected a (users, times) array, got shape {grid.shape}")
        return cls(GridShape(*grid.shape), grid)

    def as_grid(self) -> np.ndarray:
        return self.data.reshape(self.shape.dims)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.data))

    def __eq__(self, other):
        if not isinstance(other, SymbolFrame):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self.data, other.data)

    __hash__ = None


def inner(a, b) -> complex:
    """Unit-weight inner product ``sum(a * conj(b))`` over the grid."""
    a = a.data if isinstance(a, SymbolFrame) else np.asarray(a)
    b = b.data if isinstance(b, SymbolFrame) else np.asarray(b)
    return complex(np.vdot(b, a))


def apply_kernel(kernel: ChannelKernel, x: SymbolFrame) -> SymbolFrame:
    """Pass a frame through the kernel: ``r[u,t] = sum k[u,t;u',t'] x[u',t']``."""
    if x.shape != kernel.in_shape:
        raise DomainError(f"frame shape {x.shape.dims} does not match kernel input shape {kernel.in_shape.dims}")
    return SymbolFrame(kernel.out_shape, kernel.data @ x.data)


# ---------------------------------------------------------------------------
# HGMT v1 container
# ---------------------------------------------------------------------------

def kernel_to_bytes(kernel: ChannelKernel) -> bytes:
    header = _HEADER.pack(MAGIC, VERSION, *kernel.out_shape.dims, *kernel.in_shape.dims)
    payload = np.ascontiguousarray(kernel.data, dtype="<c16").tobytes()
    return header + payload


def kernel_from_bytes(buf: bytes) -> ChannelKernel:
    if len(buf) < 4:
        raise TruncatedPayloadError("truncated payload: file shorter than magic")
    if buf[:4] != MAGIC:
        raise BadMagicError(f"bad magic {buf[:4]!r}, expected {MAGIC!r}")
    if len(buf) < _HEADER.size:
        raise TruncatedPayloadError(f"truncated payload: header needs {_HEADER.size} bytes, got {len(buf)}")
    _, version, nu_out, t_out, nu_in, t_in = _HEADER.unpack_from(buf)
    if version != VERSION:
        raise VersionMismatchError(f"version mismatch: file has {version}, reader supports {VERSION}")
    dims = (nu_out, t_out, nu_in, t_in)
    if min(dims) == 0:
        raise DimensionOverflowError(f"dimension overflow: zero-sized dimension in {dims}")
    entries = nu_out * t_out * nu_in * t_in
    if entries > MAX_ENTRIES:
        raise DimensionOverflowError(f"dimension overflow: {dims} implies {entries} entries")
    expected = _HEADER.size + 16 * entries
    if len(buf) < expected:
        raise TruncatedPayloadError(f"truncated payload: expected {expected} bytes, got {len(buf)}")
    if len(buf) > expected:
        raise KernelFormatError(f"trailing data: expected {expected} bytes, got {len(buf)}")
    data = np.frombuffer(buf, dtype="<c16", count=entries, offset=_HEADER.size)
    out_shape, in_shape = GridShape(nu_out, t_out), GridShape(nu_in, t_in)
    return ChannelKernel(out_shape, in_shape, data.reshape(out_shape.size, in_shape.size))


def save_kernel(kernel: ChannelKernel, path: PathType) -> None:
    with open(path, "wb") as fh:
        fh.write(kernel_to_bytes(kernel))


def load_kernel(path: PathType) -> ChannelKernel:
    with open(path, "rb") as fh:
        return kernel_from_bytes(fh.read())


# ---------------------------------------------------------------------------
# Frame CSV
# ---------------------------------------------------------------------------

FRAME_HEADER = ("u", "t", "re", "im")


def frame_to_csv(frame: SymbolFrame) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(FRAME_HEADER)
    for m, value in enumerate(frame.data):
        u, t = divmod(m, frame.shape.num_times)
        writer.writerow((u, t, repr(float(value.real)), repr(float(value.imag))))
    return buf.getvalue()


def frame_from_csv(text: str) -> SymbolFrame:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(c.strip() for c in rows[0]) != FRAME_HEADER:
        raise FrameFormatError(f"frame CSV must start with header {','.join(FRAME_HEADER)}")
    body = [r for r in rows[1:] if r]
    if not body:
        raise FrameFormatError("frame CSV has no samples")
    try:
        us = [int(r[0]) for r in body]
        ts = [int(r[1]) for r in body]
        values = [complex(float(r[2]), float(r[3])) for r in body]
    except (ValueError, IndexError) as exc:
        raise FrameFormatError(f"malformed frame CSV row: {exc}") from None
    shape = GridShape(max(us) + 1, max(ts) + 1)
    if len(body) != shape.size:
        raise FrameFormatError(f"frame CSV has {len(body)} rows, grid {shape.dims} needs {shape.size}")
    for m, (u, t) in enumerate(zip(us, ts)):
        if flatten(u, t, shape) != m:
            raise FrameFormatError(f"frame CSV row {m + 2} out of flatten order: (u={u}, t={t})")
    return SymbolFrame(shape, np.array(values))


def save_frame(frame: SymbolFrame, path: PathType) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(frame_to_csv(frame))


def load_frame(path: PathType) -> SymbolFrame:
    with open(path, newline="") as fh:
        return frame_from_csv(fh.read())
