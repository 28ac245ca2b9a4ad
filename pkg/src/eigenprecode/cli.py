"""Command-line front end: ``eigenprecode {gen,decompose,precode,ber,characterize}``.

Every data file written is a deterministic function of the inputs and seed.
Errors go to stderr as ``error_code: <code>: <message>``.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys

import numpy as np

from . import __version__
from .characterize import export_kernel_slices, kernel_stationarity
from .config import Config, ConfigError, kernel_from_config, link_from_config, precoder_from_config
from .errors import (
    ConvergenceError,
    DomainError,
    FrameFormatError,
    KernelFormatError,
    RankZeroError,
    SingularGramError,
)
from .hogmt import TruncationPolicy, decompose_4d, eigen_factor_kernels, sigmas_to_csv
from .link_sim import ber_plot_script, report_to_csv, run_link
from .precoder import PrecoderConfig, precode_spatial, precode_st
from .tensor_core import (
    ChannelKernel,
    apply_kernel,
    kernel_to_bytes,
    load_frame,
    load_kernel,
    save_frame,
    save_kernel,
)

VERIFY_TOL = 1e-9


class CliError(Exception):
    def __init__(self, code, message, exit_code=1):
        super().__init__(message)
        self.code = code
        self.exit_code = exit_code


def _write_text(path, text):
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _write_json(path, obj):
    _write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _out_path(args, name):
    os.makedirs(args.out_dir, exist_ok=True)
    return os.path.join(args.out_dir, name)


def _kernel_meta(kernel: ChannelKernel) -> dict:
    return {
        "out_grid": list(kernel.out_shape.dims),
        "in_grid": list(kernel.in_shape.dims),
        "sha256": hashlib.sha256(kernel_to_bytes(kernel)).hexdigest(),
    }


def _truncation(args) -> TruncationPolicy:
    if args.energy_threshold is not None:
        return TruncationPolicy.energy_threshold(args.energy_threshold)
    if args.max_modes is not None:
        return TruncationPolicy.max_modes(args.max_modes)
    if args.min_sigma is not None:
        return TruncationPolicy.sigma_floor(args.min_sigma)
    return TruncationPolicy.keep_all()


def _load_kernel_arg(args):
    if args.kernel:
        return load_kernel(args.kernel), {"path": args.kernel}
    if getattr(args, "config", None):
        cfg = Config.load(args.config)
        return kernel_from_config(cfg, args.seed, os.path.dirname(os.path.abspath(args.config)))
    raise CliError("missing_input", "give --kernel or --config", 2)


def cmd_gen(args):
    config = Config.load(args.config)
    kernel, meta = kernel_from_config(config, args.seed, os.path.dirname(os.path.abspath(args.config)))
    path = _out_path(args, f"{args.name}.hgmt")
    save_kernel(kernel, path)
    _write_json(_out_path(args, f"{args.name}.json"), {"kernel": meta, **_kernel_meta(kernel)})
    print(path)


def cmd_decompose(args):
    kernel, _ = _load_kernel_arg(args)
    system = decompose_4d(kernel, _truncation(args))
    _write_text(_out_path(args, "sigmas.csv"), sigmas_to_csv(system))
    psi, phi = eigen_factor_kernels(system)
    save_kernel(psi, _out_path(args, "eigen_psi.hgmt"))
    save_kernel(phi, _out_path(args, "eigen_phi.hgmt"))
    kept = float(np.sum(system.sigmas ** 2))
    total = system.source_norm ** 2
    _write_json(_out_path(args, "decompose.json"), {
        "kept_modes": system.num_modes,
        "dropped_modes": int(system.dropped_sigmas.size),
        "source_norm": system.source_norm,
        "kept_energy_fraction": kept / total if total else 1.0,
        "truncation": _truncation(args).describe(),
        "kernel": _kernel_meta(kernel),
    })
    print(f"{system.num_modes} modes kept")


def cmd_precode(args):
    kernel, _ = _load_kernel_arg(args)
    s = load_frame(args.frame)
    if s.shape != kernel.out_shape:
        raise CliError("shape_mismatch",
                       f"frame grid {s.shape.dims} does not match kernel output grid {kernel.out_shape.dims}")
    if args.precoder_config:
        cfg = precoder_from_config(Config.load(args.precoder_config), kernel.in_shape.size)
    else:
        power = args.power
        if power == "frame":
            power = float(kernel.in_shape.size)
        elif power is not None:
            power = float(power)
        cfg = PrecoderConfig(_truncation(args), args.sigma_floor, power)
    result = precode_spatial(kernel, s, cfg) if args.spatial else precode_st(kernel, s, cfg)
    save_frame(result.x, _out_path(args, "precoded.csv"))
    summary = result.summary()
    if args.verify:
        delivered = apply_kernel(kernel, result.x).data / result.power_scale
        residual = float(np.linalg.norm(delivered - s.data))
        gap = abs(residual - result.predicted_residual) / max(s.norm, np.finfo(float).tiny)
        summary["verified_residual"] = residual / max(s.norm, np.finfo(float).tiny)
        print(f"residual {summary['verified_residual']:.3e} (predicted {result.predicted_residual / max(s.norm, 1e-300):.3e})")
        if gap > VERIFY_TOL:
            _write_text(_out_path(args, "precode.jsonl"), json.dumps(summary, sort_keys=True) + "\n")
            raise CliError("verify_failed", f"delivered frame deviates from prediction by {gap:.3e}", 4)
    _write_text(_out_path(args, "precode.jsonl"), json.dumps(summary, sort_keys=True) + "\n")


def cmd_ber(args):
    config = Config.load(args.config)
    link, meta = link_from_config(config, args.seed, os.path.dirname(os.path.abspath(args.config)))
    report = run_link(link, threads=args.threads)
    csv_path = _out_path(args, "ber.csv")
    _write_text(csv_path, report_to_csv(report))
    _write_json(_out_path(args, "ber.json"), {**report.summary(), "kernel": meta})
    _write_text(_out_path(args, "ber.gp"), ber_plot_script("ber.csv", f"{link.scheme.name}, {link.precoding}"))
    print(csv_path)


def cmd_characterize(args):
    kernel, meta = _load_kernel_arg(args)
    report = kernel_stationarity(kernel)
    export_kernel_slices(kernel, args.user, args.times, args.out_dir)
    _write_json(_out_path(args, "stationarity.json"), {**report.to_dict(), "kernel": _kernel_meta(kernel)})
    print(f"eta {report.eta:.6g}")


def _common(parser, suppress):
    default = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--seed", type=int, default=default(None), help="override every seed in the config")
    parser.add_argument("--out-dir", default=default("."), help="directory for output files")
    parser.add_argument("--threads", type=int, default=default(1), help="worker threads (results unchanged)")


def _truncation_args(parser):
    group = parser.add_mutually_exclusive_group()
    group.add_argument("--energy-threshold", type=float, help="drop at most this fraction of spectral energy")
    group.add_argument("--max-modes", type=int, help="keep at most this many modes")
    group.add_argument("--min-sigma", type=float, help="keep modes with sigma >= this value")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eigenprecode", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    _common(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a kernel file from a config")
    _common(p, suppress=True)
    p.add_argument("--config", required=True)
    p.add_argument("--name", default="kernel", help="output file stem")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("decompose", help="eigen-decompose a kernel")
    _common(p, suppress=True)
    p.add_argument("--kernel")
    p.add_argument("--config")
    _truncation_args(p)
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("precode", help="precode a frame against a kernel")
    _common(p, suppress=True)
    p.add_argument("--kernel")
    p.add_argument("--config", help="kernel config (alternative to --kernel)")
    p.add_argument("--frame", required=True, help="intended frame CSV (u,t,re,im)")
    p.add_argument("--precoder-config", help="TOML file with a [precoder] table")
    _truncation_args(p)
    p.add_argument("--sigma-floor", type=float, default=1e-12, help="relative singular-value floor (> 0)")
    p.add_argument("--power", help='target ||x||^2, or "frame" for the frame size')
    p.add_argument("--spatial", action="store_true", help="spatial-only precoding (single time slot)")
    p.add_argument("--verify", action="store_true", help="re-apply the kernel and check the residual")
    p.set_defaults(func=cmd_precode)

    p = sub.add_parser("ber", help="run a BER sweep")
    _common(p, suppress=True)
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_ber)

    p = sub.add_parser("characterize", help="stationarity report and kernel slices")
    _common(p, suppress=True)
    p.add_argument("--kernel")
    p.add_argument("--config")
    p.add_argument("--user", type=int, default=0)
    p.add_argument("--times", type=int, nargs="+", default=[0])
    p.set_defaults(func=cmd_characterize)
    return parser


def _fail(code, message, exit_code):
    print(f"error_code: {code}: {message}", file=sys.stderr)
    return exit_code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        return _fail("invalid_argument", "--threads must be >= 1", 2)
    try:
        args.func(args)
    except CliError as exc:
        return _fail(exc.code, exc, exc.exit_code)
    except ConfigError as exc:
        return _fail("config_invalid", exc, 2)
    except (KernelFormatError, FrameFormatError) as exc:
        return _fail("parse_error", exc, 3)
    except RankZeroError as exc:
        return _fail("rank_zero", exc, 1)
    except (SingularGramError, ConvergenceError) as exc:
        return _fail("numerical_error", exc, 1)
    except DomainError as exc:
        return _fail("domain_error", exc, 1)
    except OSError as exc:
        return _fail("io_error", exc, 1)
    return 0


if __name__ == "__main__":
    sys.exit(main())
