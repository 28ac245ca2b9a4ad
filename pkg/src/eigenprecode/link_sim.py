"""Monte-Carlo link simulation: modulate, precode, channel, noise, demodulate.

SNR bookkeeping: symbols have unit average energy and the complex noise
variance per received sample is ``10 ** (-snr_db / 10)``.

Random streams: trial ``j`` of SNR point ``i`` draws bits and noise from
``SeedSequence(seed, spawn_key=(i, j))``, so results do not depend on the
order trials run in or on the number of worker threads.
"""

from __future__ import annotations

import hashlib
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from .errors import DomainError
from .hogmt import decompose_4d
from .precoder import PrecoderConfig, precode_with_system, spatial_slot_kernel
from .tensor_core import ChannelKernel, GridShape, SymbolFrame, kernel_to_bytes

PRECODING_MODES = ("none", "spatial", "spatio_temporal")


def _gray(i):
    return i ^ (i >> 1)


def _gray_inverse(g):
    g = np.asarray(g).copy()
    shift = g >> 1
    while np.any(shift):
        g ^= shift
        shift >>= 1
    return g


@dataclass(frozen=True)
class ModScheme:
    """Gray-coded square constellation with unit average symbol energy.

    Bits map MSB-first; for QAM the first half of a symbol's bits selects the
    in-phase level and the second half the quadrature level.  Level index
    ``i`` on an axis with ``L`` levels sits at amplitude ``L - 1 - 2 i`` and
    carries the Gray code of ``i``, so an all-zero label is the upper-right
    corner (BPSK: 0 -> +1, QPSK: 00 -> (1 + j) / sqrt 2).
    """

    name: str
    bits_per_symbol: int

    @property
    def is_real(self) -> bool:
        return self.bits_per_symbol == 1

    @property
    def bits_per_axis(self) -> int:
        return 1 if self.is_real else self.bits_per_symbol // 2

    @property
    def levels(self) -> int:
        return 1 << self.bits_per_axis

    @property
    def scale(self) -> float:
        """Amplitude divisor giving unit average energy."""
        L = self.levels
        per_axis = (L * L - 1) / 3.0
        return math.sqrt(per_axis if self.is_real else 2.0 * per_axis)

    @cached_property
    def constellation(self) -> np.ndarray:
        """Point for every bit label ``0 .. 2**bits_per_symbol - 1``."""
        labels = np.arange(1 << self.bits_per_symbol)
        return self._map_labels(labels)

    def _axis_amplitude(self, gray_label):
        return (self.levels - 1 - 2 * _gray_inverse(gray_label)).astype(float)

    def _map_labels(self, labels):
        if self.is_real:
            return self._axis_amplitude(labels) / self.scale + 0j
        k = self.bits_per_axis
        i_lab, q_lab = labels >> k, labels & ((1 << k) - 1)
        return (self._axis_amplitude(i_lab) + 1j * self._axis_amplitude(q_lab)) / self.scale

    def _slice_axis(self, values):
        L = self.levels
        idx = np.clip(np.rint((L - 1 - values * self.scale) / 2.0), 0, L - 1).astype(np.int64)
        return _gray(idx)

    def map_bits(self, bits) -> np.ndarray:
        bits = np.asarray(bits, dtype=np.int64).ravel()
        k = self.bits_per_symbol
        if bits.size % k:
            raise DomainError(f"{bits.size} bits is not a multiple of {k} bits per symbol")
        if np.any((bits != 0) & (bits != 1)):
            raise DomainError("bits must be 0 or 1")
        weights = 1 << np.arange(k - 1, -1, -1)
        labels = bits.reshape(-1, k) @ weights
        return self._map_labels(labels)

    def slice_symbols(self, symbols) -> np.ndarray:
        """Minimum-distance decisions, returned as bits."""
        symbols = np.asarray(symbols).ravel()
        if self.is_real:
            labels = self._slice_axis(symbols.real)
        else:
            k = self.bits_per_axis
            labels = (self._slice_axis(symbols.real) << k) | self._slice_axis(symbols.imag)
        k = self.bits_per_symbol
        shifts = np.arange(k - 1, -1, -1)
        return ((labels[:, None] >> shifts) & 1).astype(np.uint8).ravel()


SCHEMES = {
    "BPSK": ModScheme("BPSK", 1),
    "QPSK": ModScheme("QPSK", 2),
    "QAM16": ModScheme("QAM16", 4),
    "QAM64": ModScheme("QAM64", 6),
}


def get_scheme(scheme) -> ModScheme:
    if isinstance(scheme, ModScheme):
        return scheme
    try:
        return SCHEMES[str(scheme).upper()]
    except KeyError:
        raise DomainError(f"unknown modulation {scheme!r}; choose from {sorted(SCHEMES)}") from None


def modulate(bits, scheme, shape: GridShape) -> SymbolFrame:
    scheme = get_scheme(scheme)
    bits = np.asarray(bits).ravel()
    need = scheme.bits_per_symbol * shape.size
    if bits.size != need:
        raise DomainError(f"got {bits.size} bits, grid {shape.dims} with {scheme.name} needs {need}")
    return SymbolFrame(shape, scheme.map_bits(bits))


def demodulate(frame: SymbolFrame, scheme) -> np.ndarray:
    return get_scheme(scheme).slice_symbols(frame.data)


def noise_variance(snr_db: float) -> float:
    return 0.0 if math.isinf(snr_db) and snr_db > 0 else 10.0 ** (-snr_db / 10.0)


def _complex_noise(rng: np.random.Generator, size: int, variance: float) -> np.ndarray:
    return math.sqrt(variance / 2.0) * (rng.standard_normal(size) + 1j * rng.standard_normal(size))


def awgn(frame: SymbolFrame, snr_db: float, rng: np.random.Generator) -> SymbolFrame:
    """Add circularly-symmetric complex Gaussian noise; ``snr_db=inf`` adds none."""
    var = noise_variance(snr_db)
    if var == 0.0:
        return frame
    return SymbolFrame(frame.shape, frame.data + _complex_noise(rng, frame.data.size, var))


def trial_rng(seed: int, point: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(point, trial)))


@dataclass(frozen=True, eq=False)
class LinkConfig:
    kernel: ChannelKernel
    scheme: ModScheme = SCHEMES["QPSK"]
    snr_db: Sequence[float] = (0.0, 5.0, 10.0)
    trials: int = 100
    precoding: str = "spatio_temporal"
    precoder: PrecoderConfig = field(default_factory=PrecoderConfig)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "scheme", get_scheme(self.scheme))
        snr = tuple(float(v) for v in self.snr_db)
        if not snr:
            raise DomainError("snr_db list is empty")
        object.__setattr__(self, "snr_db", snr)
        if int(self.trials) != self.trials or self.trials < 1:
            raise DomainError(f"trials must be a positive integer, got {self.trials}")
        if self.precoding not in PRECODING_MODES:
            raise DomainError(f"precoding must be one of {PRECODING_MODES}, got {self.precoding!r}")
        if self.kernel.in_shape != self.kernel.out_shape:
            raise DomainError("link simulation needs a square kernel (same input and output grid)")

    def to_dict(self) -> dict:
        return {
            "scheme": self.scheme.name,
            "snr_db": list(self.snr_db),
            "trials": int(self.trials),
            "precoding": self.precoding,
            "truncation": self.precoder.truncation.describe(),
            "sigma_floor": self.precoder.sigma_floor,
            "power": self.precoder.power,
            "seed": int(self.seed),
            "grid": list(self.kernel.out_shape.dims),
            "kernel_sha256": hashlib.sha256(kernel_to_bytes(self.kernel)).hexdigest(),
        }

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


@dataclass(frozen=True)
class PointResult:
    snr_db: float
    bit_errors: int
    bits_sent: int
    residual: float
    kept_modes: int
    tx_power: float

    @property
    def ber(self) -> float:
        return self.bit_errors / self.bits_sent


@dataclass(frozen=True)
class LinkReport:
    points: tuple
    seed: int
    digest: str
    config: dict

    def summary(self) -> dict:
        return {
            "seed": self.seed,
            "config_digest": self.digest,
            "config": self.config,
            "points": [
                {"snr_db": p.snr_db, "ber": p.ber, "bit_errors": p.bit_errors, "bits_sent": p.bits_sent,
                 "residual": p.residual, "kept_modes": p.kept_modes, "tx_power": p.tx_power}
                for p in self.points
            ],
        }


class _Transmitter:
    """Precodes frames for one link configuration, reusing the kernel decomposition."""

    def __init__(self, cfg: LinkConfig):
        self.cfg = cfg
        self.shape = cfg.kernel.in_shape
        unscaled = PrecoderConfig(cfg.precoder.truncation, cfg.precoder.sigma_floor, None)
        self._unscaled = unscaled
        if cfg.precoding == "spatio_temporal":
            self._systems = [decompose_4d(cfg.kernel, unscaled.truncation)]
        elif cfg.precoding == "spatial":
            self._systems = [decompose_4d(spatial_slot_kernel(cfg.kernel, t), unscaled.truncation)
                             for t in range(self.shape.num_times)]
        else:
            self._systems = []

    def precode(self, s: SymbolFrame) -> tuple[np.ndarray, float, int]:
        """Return the transmitted samples together with bookkeeping for the report."""
        if self.cfg.precoding == "none":
            x, kept = s.data, 0
        elif self.cfg.precoding == "spatio_temporal":
            res = precode_with_system(self._systems[0], s, self._unscaled)
            x, kept = res.x.data, res.kept_modes
        else:
            grid = s.as_grid()
            cols, kept = [], 0
            for t, system in enumerate(self._systems):
                res = precode_with_system(system, SymbolFrame(GridShape(grid.shape[0], 1), grid[:, t]), self._unscaled)
                cols.append(res.x.data)
                kept += res.kept_modes
            x = np.column_stack(cols).ravel()
        scale = 1.0
        if self.cfg.precoder.power is not None:
            energy = float(np.vdot(x, x).real)
            if energy == 0.0:
                raise DomainError("cannot normalize power of an all-zero transmit frame")
            scale = math.sqrt(self.cfg.precoder.power / energy)
            x = x * scale
        return x, scale, kept


def _run_trial(cfg: LinkConfig, tx: _Transmitter, point: int, trial: int):
    scheme, shape = cfg.scheme, tx.shape
    rng = trial_rng(cfg.seed, point, trial)
    bits = rng.integers(0, 2, size=scheme.bits_per_symbol * shape.size, dtype=np.uint8)
    s = modulate(bits, scheme, shape)
    x, scale, kept = tx.precode(s)
    clean = cfg.kernel.data @ x
    residual = float(np.linalg.norm(clean / scale - s.data) / np.linalg.norm(s.data))
    var = noise_variance(cfg.snr_db[point])
    received = clean if var == 0.0 else clean + _complex_noise(rng, clean.size, var)
    decided = scheme.slice_symbols(received / scale)
    errors = int(np.count_nonzero(decided != bits))
    return errors, bits.size, residual, kept, float(np.vdot(x, x).real)


def run_link(cfg: LinkConfig, threads: int = 1) -> LinkReport:
    tx = _Transmitter(cfg)
    jobs = [(i, j) for i in range(len(cfg.snr_db)) for j in range(cfg.trials)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda ij: _run_trial(cfg, tx, *ij), jobs))
    else:
        results = [_run_trial(cfg, tx, i, j) for i, j in jobs]

    points = []
    for i, snr in enumerate(cfg.snr_db):
        block = results[i * cfg.trials:(i + 1) * cfg.trials]
        points.append(PointResult(
            snr_db=snr,
            bit_errors=sum(r[0] for r in block),
            bits_sent=sum(r[1] for r in block),
            residual=math.fsum(r[2] for r in block) / cfg.trials,
            kept_modes=block[0][3],
            tx_power=math.fsum(r[4] for r in block) / cfg.trials,
        ))
    points.sort(key=lambda p: p.snr_db)
    return LinkReport(tuple(points), int(cfg.seed), cfg.digest(), cfg.to_dict())


BER_HEADER = "snr_db,ber,bit_errors,bits_sent,residual,kept_modes"


def report_to_csv(report: LinkReport) -> str:
    buf = io.StringIO()
    buf.write(BER_HEADER + "\n")
    for p in report.points:
        buf.write(f"{p.snr_db!r},{p.ber!r},{p.bit_errors},{p.bits_sent},{p.residual!r},{p.kept_modes}\n")
    return buf.getvalue()


def ber_sweep(cfg: LinkConfig, threads: int = 1) -> str:
    """Run the link over every SNR point and return the BER CSV text."""
    return report_to_csv(run_link(cfg, threads))


def ber_plot_script(csv_name: str, title: str = "BER") -> str:
    return (
        "# gnuplot script: BER versus SNR\n"
        "set datafile separator ','\n"
        "set terminal pngcairo size 800,600\n"
        f"set output '{csv_name.rsplit('.', 1)[0]}.png'\n"
        "set logscale y\n"
        "set xlabel 'SNR (dB)'\n"
        "set ylabel 'BER'\n"
        "set grid\n"
        f"set title '{title}'\n"
        f"plot '{csv_name}' every ::1 using 1:2 with linespoints title 'simulated'\n"
    )


def q_function(x: float) -> float:
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def bpsk_theory(snr_db: float) -> float:
    """Bit error rate of BPSK in AWGN under this module's SNR convention."""
    return q_function(math.sqrt(2.0 * 10.0 ** (snr_db / 10.0)))


def binomial_std(p: float, n: int) -> float:
    return math.sqrt(p * (1.0 - p) / n)
