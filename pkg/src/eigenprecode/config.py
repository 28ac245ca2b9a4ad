"""TOML experiment configuration: parsing and validation with field diagnostics."""

from __future__ import annotations

import os
import re
from typing import Any, Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .channel_models import (
    StationarySpec,
    drifting_spec,
    gen_nonstationary,
    gen_random,
    gen_stationary,
)
from .errors import DomainError
from .hogmt import TruncationPolicy
from .precoder import PrecoderConfig
from .tensor_core import ChannelKernel, GridShape, load_kernel

KERNEL_TYPES = ("identity", "random", "stationary", "nonstationary", "file")


class ConfigError(ValueError):
    def __init__(self, message, field=None, line=None):
        where = []
        if field:
            where.append(f"field '{field}'")
        if line:
            where.append(f"line {line}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.field = field
        self.line = line


class Config:
    """Parsed TOML document that remembers where each key was written."""

    def __init__(self, text: str, source: str = "<config>"):
        self.text = text
        self.source = source
        try:
            self.doc = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{source}: {exc}") from None

    @classmethod
    def load(cls, path) -> "Config":
        with open(path, encoding="utf-8") as fh:
            return cls(fh.read(), str(path))

    def line_of(self, section: str, key: str) -> Optional[int]:
        current = ""
        for lineno, raw in enumerate(self.text.splitlines(), 1):
            line = raw.strip()
            header = re.match(r"^\[([^\[\]]+)\]", line)
            if header:
                current = header.group(1).strip()
            elif current == section and re.match(rf"^{re.escape(key)}\s*=", line):
                return lineno
        return None

    def section(self, name: str, required: bool = True) -> "Section":
        table = self.doc.get(name)
        if table is None:
            if required:
                raise ConfigError(f"missing section [{name}]", field=name)
            table = {}
        if not isinstance(table, dict):
            raise ConfigError("expected a table", field=name, line=self.line_of("", name))
        return Section(self, name, table)


_MISSING = object()


class Section:
    def __init__(self, config: Config, name: str, table: dict):
        self.config = config
        self.name = name
        self.table = table

    def __contains__(self, key):
        return key in self.table

    def error(self, key: str, message: str) -> ConfigError:
        return ConfigError(message, field=f"{self.name}.{key}", line=self.config.line_of(self.name, key))

    def get(self, key: str, kind, default: Any = _MISSING, check=None, describe: str = ""):
        if key not in self.table:
            if default is _MISSING:
                raise self.error(key, "required field is missing")
            return default
        value = self.table[key]
        kinds = kind if isinstance(kind, tuple) else (kind,)
        ok = isinstance(value, kinds) and not (isinstance(value, bool) and bool not in kinds)
        if float in kinds and isinstance(value, int) and not isinstance(value, bool):
            value, ok = float(value), True
        if not ok or (check is not None and not check(value)):
            names = "/".join(k.__name__ for k in kinds)
            raise self.error(key, f"expected {describe or names}, got {value!r}")
        return value


def _positive_int(section: Section, key: str, default=_MISSING) -> int:
    return section.get(key, int, default, lambda v: v >= 1, "a positive integer")


def kernel_from_config(config: Config, seed: Optional[int] = None, base_dir: str = ".") -> tuple[ChannelKernel, dict]:
    """Build the kernel described by ``[kernel]``; returns it with its metadata."""
    sec = config.section("kernel")
    ktype = sec.get("type", str, check=lambda v: v in KERNEL_TYPES, describe=f"one of {KERNEL_TYPES}")
    meta: dict = {"type": ktype}
    if ktype == "file":
        path = sec.get("path", str)
        full = path if os.path.isabs(path) else os.path.join(base_dir, path)
        if not os.path.exists(full):
            raise sec.error("path", f"kernel file not found: {full}")
        meta["path"] = path
        return load_kernel(full), meta

    shape = GridShape(_positive_int(sec, "num_users"), _positive_int(sec, "num_times"))
    meta["grid"] = list(shape.dims)
    if ktype == "identity":
        return ChannelKernel.identity(shape), meta

    if seed is None:
        seed = sec.get("seed", int, 0, lambda v: v >= 0, "a non-negative integer")
    meta["seed"] = seed
    try:
        if ktype == "random":
            target = sec.get("condition_target", float, None, lambda v: v >= 1, "a number >= 1")
            meta["condition_target"] = target
            return gen_random(shape, seed, target), meta
        if ktype == "stationary":
            taps = _positive_int(sec, "num_taps", 2)
            decay = sec.get("decay", float, 0.5, lambda v: v > 0, "a positive number")
            if taps > shape.num_times:
                raise sec.error("num_taps", f"num_taps {taps} exceeds num_times {shape.num_times}")
            meta.update(num_taps=taps, decay=decay)
            return gen_stationary(StationarySpec.random(shape, taps, seed, decay)), meta
        kwargs = dict(
            max_drift=sec.get("max_drift", int, 2, lambda v: v >= 0, "a non-negative integer"),
            doppler=sec.get("doppler", float, 0.02, lambda v: v >= 0, "a non-negative number"),
            gain_decay=sec.get("gain_decay", float, 0.5, lambda v: v > 0, "a positive number"),
            gain_ripple=sec.get("gain_ripple", float, 0.3, lambda v: v >= 0, "a non-negative number"),
            leakage=sec.get("leakage", float, 0.15, lambda v: v >= 0, "a non-negative number"),
        )
        period = sec.get("drift_period", float, None, lambda v: v > 0, "a positive number")
        taps = _positive_int(sec, "num_taps", 3)
        frozen = sec.get("frozen", bool, False)
        spec = drifting_spec(shape, taps, seed, drift_period=period, **kwargs)
        if frozen:
            spec = spec.frozen(0)
        meta.update(spec.params, frozen=frozen)
        return gen_nonstationary(spec), meta
    except DomainError as exc:
        raise ConfigError(str(exc), field="kernel") from None


TRUNCATION_MODES = ("keep_all", "energy_threshold", "max_modes", "sigma_floor")


def precoder_from_config(config: Config, frame_size: Optional[int] = None) -> PrecoderConfig:
    """``[precoder]``: truncation, truncation_value, sigma_floor, power.

    ``power`` is a positive number, ``"none"`` (default) or ``"frame"`` for the
    frame size ``M`` (unit energy per sample).
    """
    sec = config.section("precoder", required=False)
    mode = sec.get("truncation", str, "keep_all", lambda v: v in TRUNCATION_MODES, f"one of {TRUNCATION_MODES}")
    value = None
    if mode != "keep_all":
        value = sec.get("truncation_value", (int, float), check=lambda v: v > 0, describe="a positive number")
    try:
        policy = TruncationPolicy(mode, value)
    except DomainError as exc:
        raise sec.error("truncation_value", str(exc)) from None
    floor = sec.get("sigma_floor", float, 1e-12, lambda v: v > 0, "a number > 0")
    power = sec.get("power", (float, str), "none",
                    lambda v: v in ("none", "frame") if isinstance(v, str) else v > 0,
                    '"none", "frame" or a positive number')
    if power == "none":
        power = None
    elif power == "frame":
        if frame_size is None:
            raise sec.error("power", '"frame" power needs a known frame size')
        power = float(frame_size)
    return PrecoderConfig(policy, floor, power)


def link_from_config(config: Config, seed: Optional[int] = None, base_dir: str = "."):
    """``[kernel]``, ``[precoder]`` and ``[link]`` combined into a :class:`LinkConfig`."""
    from .link_sim import PRECODING_MODES, SCHEMES, LinkConfig

    kernel, meta = kernel_from_config(config, seed, base_dir)
    sec = config.section("link")
    scheme = sec.get("scheme", str, "QPSK", lambda v: v.upper() in SCHEMES, f"one of {sorted(SCHEMES)}")
    snr = sec.get("snr_db", list, check=lambda v: len(v) > 0 and all(
        isinstance(x, (int, float)) and not isinstance(x, bool) for x in v), describe="a non-empty list of numbers")
    trials = _positive_int(sec, "trials")
    precoding = sec.get("precoding", str, "spatio_temporal", lambda v: v in PRECODING_MODES,
                        f"one of {PRECODING_MODES}")
    if seed is None:
        seed = sec.get("seed", int, 0, lambda v: v >= 0, "a non-negative integer")
    precoder = precoder_from_config(config, kernel.in_shape.size)
    cfg = LinkConfig(kernel, scheme.upper(), [float(v) for v in snr], trials, precoding, precoder, seed)
    return cfg, meta
