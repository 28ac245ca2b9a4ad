"""Stationary and non-stationary discrete channel kernel generators.

Every generator is a pure function of its spec; random quantities are drawn
from ``numpy.random.default_rng(seed)`` at spec-construction time so that the
spec itself fully determines the kernel.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DomainError
from .tensor_core import ChannelKernel, GridShape


def _crandn(rng: np.random.Generator, size) -> np.ndarray:
    """Circularly-symmetric complex normal samples with unit variance."""
    return (rng.standard_normal(size) + 1j * rng.standard_normal(size)) / np.sqrt(2.0)


@dataclass(frozen=True, eq=False)
class StationarySpec:
    """Time-invariant channel: ``impulse[u, u', tau]`` for ``0 <= tau < L``."""

    shape: GridShape
    impulse: np.ndarray
    seed: Optional[int] = None

    def __post_init__(self):
        h = np.array(self.impulse, dtype=np.complex128)
        if h.ndim == 1:
            if self.shape.num_users != 1:
                raise DomainError("a 1-D impulse response is only valid for a single user")
            h = h.reshape(1, 1, -1)
        nu = self.shape.num_users
        if h.ndim != 3 or h.shape[:2] != (nu, nu) or h.shape[2] < 1:
            raise DomainError(f"impulse must have shape ({nu}, {nu}, L), got {h.shape}")
        h.flags.writeable = False
        object.__setattr__(self, "impulse", h)

    @property
    def num_taps(self) -> int:
        return self.impulse.shape[2]

    @classmethod
    def random(cls, shape: GridShape, num_taps: int, seed: int, decay: float = 0.5) -> "StationarySpec":
        """Random impulse response with exponentially decaying tap power."""
        rng = np.random.default_rng(seed)
        nu = shape.num_users
        h = _crandn(rng, (nu, nu, num_taps)) * decay ** np.arange(num_taps)
        return cls(shape, h, seed)


def gen_stationary(spec: StationarySpec) -> ChannelKernel:
    shape, h = spec.shape, spec.impulse
    T = shape.num_times
    if spec.num_taps > T:
        raise DomainError(f"impulse length {spec.num_taps} exceeds frame length {T}")
    tensor = np.zeros(shape.dims + shape.dims, dtype=np.complex128)
    for tau in range(spec.num_taps):
        t = np.arange(tau, T)
        tensor[:, t, :, t - tau] = h[:, :, tau]
    return ChannelKernel.from_tensor(tensor)


@dataclass(frozen=True, eq=False)
class Tap:
    """One propagation path: integer delay and complex gain per output time, and user mixing."""

    delay: np.ndarray
    gain: np.ndarray
    mixing: np.ndarray

    def __post_init__(self):
        delay = np.array(self.delay)
        if delay.size and not np.all(np.equal(np.mod(delay, 1), 0)):
            raise DomainError("tap delays must be integer sample counts")
        delay = delay.astype(np.int64)
        gain = np.array(self.gain, dtype=np.complex128)
        mixing = np.array(self.mixing, dtype=np.complex128)
        if delay.ndim != 1 or gain.shape != delay.shape:
            raise DomainError(f"delay and gain trajectories must be equal-length vectors, got {delay.shape}, {gain.shape}")
        if mixing.ndim != 2 or mixing.shape[0] != mixing.shape[1]:
            raise DomainError(f"mixing matrix must be square, got {mixing.shape}")
        if not (np.all(np.isfinite(gain)) and np.all(np.isfinite(mixing))):
            raise DomainError("tap gain and mixing must be finite")
        for arr in (delay, gain, mixing):
            arr.flags.writeable = False
        object.__setattr__(self, "delay", delay)
        object.__setattr__(self, "gain", gain)
        object.__setattr__(self, "mixing", mixing)

    @property
    def time_varying(self) -> bool:
        return bool(np.any(self.delay != self.delay[0]) or np.any(self.gain != self.gain[0]))


@dataclass(frozen=True, eq=False)
class NsChannelSpec:
    """Tapped-delay-line channel whose taps vary over the block.

    ``k[u,t; u',t'] = sum_l gain_l[t] * mixing_l[u,u'] * [t' == t - delay_l[t]]``.
    Paths whose source sample ``t - delay_l[t]`` precedes the frame are not
    realized, matching the stationary generator's edge behaviour.
    """

    shape: GridShape
    taps: Sequence[Tap]
    seed: Optional[int] = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        taps = tuple(self.taps)
        if not taps:
            raise DomainError("spec needs at least one tap")
        T, nu = self.shape.num_times, self.shape.num_users
        for i, tap in enumerate(taps):
            if tap.delay.shape != (T,):
                raise DomainError(f"tap {i}: trajectories must have length {T}, got {tap.delay.shape[0]}")
            if tap.mixing.shape != (nu, nu):
                raise DomainError(f"tap {i}: mixing must be {nu}x{nu}, got {tap.mixing.shape}")
        object.__setattr__(self, "taps", taps)

    @property
    def num_taps(self) -> int:
        return len(self.taps)

    def frozen(self, t0: int = 0) -> "NsChannelSpec":
        """Counterpart with every trajectory held at its value at time ``t0``."""
        T = self.shape.num_times
        taps = [Tap(np.full(T, tap.delay[t0]), np.full(T, tap.gain[t0]), tap.mixing) for tap in self.taps]
        return NsChannelSpec(self.shape, taps, self.seed, dict(self.params, frozen_at=t0))

    def to_stationary(self) -> StationarySpec:
        """Equivalent stationary spec; only valid when no trajectory varies."""
        if any(tap.time_varying for tap in self.taps):
            raise DomainError("spec has time-varying taps")
        nu = self.shape.num_users
        length = max(int(tap.delay[0]) for tap in self.taps) + 1
        h = np.zeros((nu, nu, length), dtype=np.complex128)
        for tap in self.taps:
            h[:, :, tap.delay[0]] += tap.gain[0] * tap.mixing
        return StationarySpec(self.shape, h, self.seed)


def gen_nonstationary(spec: NsChannelSpec) -> ChannelKernel:
    shape = spec.shape
    T = shape.num_times
    tensor = np.zeros(shape.dims + shape.dims, dtype=np.complex128)
    for i, tap in enumerate(spec.taps):
        if np.any(tap.delay < 0):
            t_bad = int(np.argmax(tap.delay < 0))
            raise DomainError(f"tap {i} is non-causal: delay {tap.delay[t_bad]} at t={t_bad}")
        for t in range(T):
            src = t - tap.delay[t]
            if src >= 0:
                tensor[:, t, :, src] += tap.gain[t] * tap.mixing
    return ChannelKernel.from_tensor(tensor)


def drifting_spec(shape: GridShape, num_taps: int = 3, seed: int = 0, *, max_drift: int = 2,
                  drift_period: Optional[float] = None, doppler: float = 0.02,
                  gain_decay: float = 0.5, gain_ripple: float = 0.3, leakage: float = 0.15) -> NsChannelSpec:
    """Seeded non-stationary spec with drifting delays plus cross-user leakage.

    Tap 0 is the direct path (zero delay, mixing close to identity).  Tap ``l``
    has base delay ``l`` plus a slow integer drift of up to ``max_drift`` samples;
    its gain decays as ``gain_decay**l`` with a sinusoidal ripple and a Doppler
    phase ramp of normalized frequency drawn from ``[-doppler, doppler]``.
    """
    if num_taps < 1:
        raise DomainError(f"num_taps must be >= 1, got {num_taps}")
    rng = np.random.default_rng(seed)
    nu, T = shape.dims
    period = float(drift_period) if drift_period else float(max(T, 2))
    t = np.arange(T)
    taps = []
    for ell in range(num_taps):
        nu_ell = rng.uniform(-doppler, doppler)
        phase0 = rng.uniform(0, 2 * np.pi)
        ripple_phase = rng.uniform(0, 2 * np.pi)
        mixing = leakage * _crandn(rng, (nu, nu))
        if ell == 0:
            mixing += np.eye(nu)
            delay = np.zeros(T, dtype=np.int64)
        else:
            wobble = 0.5 * (1 - np.cos(2 * np.pi * t / period + ripple_phase))
            delay = ell + np.rint(max_drift * wobble).astype(np.int64)
        amplitude = gain_decay ** ell * (1 + gain_ripple * np.sin(2 * np.pi * t / period + ripple_phase))
        gain = amplitude * np.exp(1j * (2 * np.pi * nu_ell * t + phase0))
        taps.append(Tap(delay, gain, mixing))
    params = dict(num_taps=num_taps, max_drift=max_drift, drift_period=period, doppler=doppler,
                  gain_decay=gain_decay, gain_ripple=gain_ripple, leakage=leakage)
    return NsChannelSpec(shape, taps, seed, params)


def gen_random(shape: GridShape, seed: int, condition_target: Optional[float] = None,
               in_shape: Optional[GridShape] = None) -> ChannelKernel:
    """Complex standard-normal kernel, optionally reshaped to a target condition number.

    With ``condition_target`` the singular values are replaced by a geometric
    (log-uniform) ladder from the original largest value down to
    ``sigma_1 / condition_target``.
    """
    in_shape = in_shape or shape
    rng = np.random.default_rng(seed)
    data = _crandn(rng, (shape.size, in_shape.size))
    if condition_target is not None:
        if not condition_target >= 1:
            raise DomainError(f"condition_target must be >= 1, got {condition_target}")
        u, s, vh = np.linalg.svd(data, full_matrices=False)
        k = len(s)
        ladder = s[0] * condition_target ** (-np.arange(k) / max(k - 1, 1))
        data = (u * ladder) @ vh
    return ChannelKernel(shape, in_shape, data)


def paired_corpus(seed: int = 0, count: int = 4):
    """``(non-stationary, frozen-at-t0)`` spec pairs over a few grid sizes."""
    rng = np.random.default_rng(seed)
    grids = [GridShape(1, 32), GridShape(2, 32), GridShape(4, 64), GridShape(3, 48)]
    pairs = []
    for i in range(count):
        shape = grids[i % len(grids)]
        spec = drifting_spec(shape, num_taps=2 + i % 3, seed=int(rng.integers(2**32)))
        pairs.append((spec, spec.frozen(0)))
    return pairs
