import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from eigenprecode.channel_models import gen_random
from eigenprecode.cli import main
from eigenprecode.tensor_core import (
    ChannelKernel,
    GridShape,
    SymbolFrame,
    load_frame,
    load_kernel,
    save_frame,
    save_kernel,
)

from oracles import jacobi_singular_values

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def write(path, text):
    path.write_text(text)
    return path


@pytest.fixture
def identity_kernel(tmp_path):
    path = tmp_path / "id.hgmt"
    save_kernel(ChannelKernel.identity(GridShape(2, 3)), path)
    return path


def sigmas_from_csv(path):
    lines = path.read_text().splitlines()
    assert lines[0] == "n,sigma"
    return np.array([float(line.split(",")[1]) for line in lines[1:]])


def test_gen_identity(tmp_path):
    assert main(["gen", "--config", str(CONFIGS / "identity.toml"), "--out-dir", str(tmp_path)]) == 0
    k = load_kernel(tmp_path / "kernel.hgmt")
    assert k == ChannelKernel.identity(GridShape(2, 8))
    meta = json.loads((tmp_path / "kernel.json").read_text())
    assert meta["kernel"]["type"] == "identity"


def test_gen_ns_twice_identical(tmp_path):
    for d in ("a", "b"):
        assert main(["gen", "--config", str(CONFIGS / "nonstationary.toml"), "--out-dir", str(tmp_path / d)]) == 0
    assert (tmp_path / "a" / "kernel.hgmt").read_bytes() == (tmp_path / "b" / "kernel.hgmt").read_bytes()
    assert (tmp_path / "a" / "kernel.json").read_bytes() == (tmp_path / "b" / "kernel.json").read_bytes()


def test_gen_seed_flag_overrides(tmp_path):
    cfg = str(CONFIGS / "nonstationary.toml")
    main(["gen", "--config", cfg, "--out-dir", str(tmp_path / "a")])
    main(["--seed", "8", "gen", "--config", cfg, "--out-dir", str(tmp_path / "b")])
    meta = json.loads((tmp_path / "b" / "kernel.json").read_text())
    assert meta["kernel"]["seed"] == 8
    assert (tmp_path / "a" / "kernel.hgmt").read_bytes() != (tmp_path / "b" / "kernel.hgmt").read_bytes()


def test_gen_bad_field_names_field(tmp_path, capsys):
    cfg = write(tmp_path / "bad.toml", '[kernel]\ntype = "random"\nnum_users = 2\nnum_times = -3\n')
    assert main(["gen", "--config", str(cfg), "--out-dir", str(tmp_path)]) != 0
    err = capsys.readouterr().err
    assert err.startswith("error_code: config_invalid")
    assert "kernel.num_times" in err and "line 4" in err


def test_gen_unknown_type(tmp_path, capsys):
    cfg = write(tmp_path / "bad.toml", '[kernel]\ntype = "weird"\n')
    assert main(["gen", "--config", str(cfg)]) == 2
    assert "kernel.type" in capsys.readouterr().err


def test_gen_toml_syntax_error_has_line(tmp_path, capsys):
    cfg = write(tmp_path / "bad.toml", '[kernel]\ntype = "identity"\nnum_users = \n')
    assert main(["gen", "--config", str(cfg)]) == 2
    assert "line 3" in capsys.readouterr().err


def test_decompose_identity(identity_kernel, tmp_path):
    out = tmp_path / "dec"
    assert main(["decompose", "--kernel", str(identity_kernel), "--out-dir", str(out)]) == 0
    assert np.array_equal(sigmas_from_csv(out / "sigmas.csv"), np.ones(6))
    assert load_kernel(out / "eigen_phi.hgmt").data.shape == (6, 6)


def test_decompose_rank_one(tmp_path):
    path = tmp_path / "r1.hgmt"
    save_kernel(ChannelKernel(GridShape(1, 3), GridShape(1, 3), np.outer([1, 2, 0], [0, 1j, 1])), path)
    assert main(["decompose", "--kernel", str(path), "--out-dir", str(tmp_path)]) == 0
    sig = sigmas_from_csv(tmp_path / "sigmas.csv")
    assert np.count_nonzero(sig > 1e-12 * sig[0]) == 1


def test_decompose_random_matches_oracle(tmp_path):
    k = gen_random(GridShape(2, 4), seed=3)
    save_kernel(k, tmp_path / "k.hgmt")
    assert main(["decompose", "--kernel", str(tmp_path / "k.hgmt"), "--out-dir", str(tmp_path)]) == 0
    sig = sigmas_from_csv(tmp_path / "sigmas.csv")
    assert np.all(np.diff(sig) <= 0)
    assert np.abs(sig - jacobi_singular_values(k.data)).max() <= 1e-9


def test_decompose_parse_error(tmp_path, capsys):
    bad = tmp_path / "bad.hgmt"
    bad.write_bytes(b"XXXX" + bytes(20))
    assert main(["decompose", "--kernel", str(bad)]) == 3
    assert capsys.readouterr().err.startswith("error_code: parse_error: bad magic")


def test_precode_identity(identity_kernel, tmp_path):
    frame = SymbolFrame(GridShape(2, 3), [1, 1j, -1, -1j, 0.5, 2])
    save_frame(frame, tmp_path / "s.csv")
    out = tmp_path / "out"
    assert main(["precode", "--kernel", str(identity_kernel), "--frame", str(tmp_path / "s.csv"),
                 "--out-dir", str(out)]) == 0
    assert np.abs(load_frame(out / "precoded.csv").data - frame.data).max() <= 1e-15
    summary = json.loads((out / "precode.jsonl").read_text().splitlines()[0])
    assert summary["kept_modes"] == 6 and summary["power_scale"] == 1.0


def test_precode_verify_full_rank(tmp_path, capsys):
    k = gen_random(GridShape(2, 4), seed=5)
    save_kernel(k, tmp_path / "k.hgmt")
    rng = np.random.default_rng(1)
    save_frame(SymbolFrame(k.out_shape, rng.standard_normal(8) + 1j * rng.standard_normal(8)), tmp_path / "s.csv")
    assert main(["precode", "--kernel", str(tmp_path / "k.hgmt"), "--frame", str(tmp_path / "s.csv"),
                 "--verify", "--out-dir", str(tmp_path)]) == 0
    assert capsys.readouterr().out.startswith("residual")
    summary = json.loads((tmp_path / "precode.jsonl").read_text())
    assert summary["verified_residual"] <= 1e-9


def test_precode_power_frame(tmp_path):
    k = gen_random(GridShape(2, 4), seed=5)
    save_kernel(k, tmp_path / "k.hgmt")
    save_frame(SymbolFrame(k.out_shape, np.ones(8)), tmp_path / "s.csv")
    assert main(["precode", "--kernel", str(tmp_path / "k.hgmt"), "--frame", str(tmp_path / "s.csv"),
                 "--power", "frame", "--verify", "--out-dir", str(tmp_path)]) == 0
    x = load_frame(tmp_path / "precoded.csv").data
    assert np.vdot(x, x).real == pytest.approx(8.0, rel=1e-12)


def test_precode_singular_kernel_zero_floor_errors(tmp_path, capsys):
    save_kernel(ChannelKernel(GridShape(1, 2), GridShape(1, 2), np.zeros((2, 2))), tmp_path / "z.hgmt")
    save_frame(SymbolFrame(GridShape(1, 2), [1, 1]), tmp_path / "s.csv")
    args = ["precode", "--kernel", str(tmp_path / "z.hgmt"), "--frame", str(tmp_path / "s.csv"),
            "--out-dir", str(tmp_path)]
    assert main(args + ["--sigma-floor", "0"]) == 1
    assert "sigma_floor must be > 0" in capsys.readouterr().err
    assert main(args) == 1
    assert capsys.readouterr().err.startswith("error_code: rank_zero")


def test_precode_shape_mismatch_message(identity_kernel, tmp_path, capsys):
    save_frame(SymbolFrame(GridShape(1, 6), np.ones(6)), tmp_path / "s.csv")
    assert main(["precode", "--kernel", str(identity_kernel), "--frame", str(tmp_path / "s.csv")]) == 1
    err = capsys.readouterr().err
    assert err.startswith("error_code: shape_mismatch") and "(1, 6)" in err and "(2, 3)" in err


def test_precode_spatial_flag(tmp_path):
    rot = np.array([[0, 1j], [1, 0]])
    save_kernel(ChannelKernel.spatial(rot), tmp_path / "k.hgmt")
    save_frame(SymbolFrame(GridShape(2, 1), [1, 2]), tmp_path / "s.csv")
    assert main(["precode", "--kernel", str(tmp_path / "k.hgmt"), "--frame", str(tmp_path / "s.csv"),
                 "--spatial", "--verify", "--out-dir", str(tmp_path)]) == 0
    x = load_frame(tmp_path / "precoded.csv").data
    assert np.abs(rot @ x - [1, 2]).max() <= 1e-12


def test_ber_outputs(tmp_path):
    cfg = write(tmp_path / "ber.toml", """
[kernel]
type = "nonstationary"
num_users = 2
num_times = 16
seed = 3

[precoder]
power = "frame"

[link]
scheme = "QPSK"
snr_db = [10, 0]
trials = 5
precoding = "spatio_temporal"
""")
    assert main(["ber", "--config", str(cfg), "--out-dir", str(tmp_path / "out")]) == 0
    lines = (tmp_path / "out" / "ber.csv").read_text().splitlines()
    assert lines[0] == "snr_db,ber,bit_errors,bits_sent,residual,kept_modes"
    assert [line.split(",")[0] for line in lines[1:]] == ["0.0", "10.0"]
    summary = json.loads((tmp_path / "out" / "ber.json").read_text())
    assert summary["seed"] == 0 and len(summary["config_digest"]) == 64
    assert "ber.csv" in (tmp_path / "out" / "ber.gp").read_text()


def test_ber_threads_byte_identical(tmp_path):
    outs = []
    for threads in ("1", "3"):
        out = tmp_path / f"t{threads}"
        assert main(["--threads", threads, "ber", "--config", str(CONFIGS / "ber_ns.toml"),
                     "--out-dir", str(out)]) == 0
        outs.append(out)
    for name in ("ber.csv", "ber.json", "ber.gp"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


def test_ber_empty_trials(tmp_path, capsys):
    cfg = write(tmp_path / "b.toml", '[kernel]\ntype="identity"\nnum_users=1\nnum_times=2\n'
                                     '[link]\nsnr_db=[0]\ntrials=0\n')
    assert main(["ber", "--config", str(cfg)]) == 2
    assert "link.trials" in capsys.readouterr().err


def test_characterize_outputs(tmp_path):
    assert main(["characterize", "--config", str(CONFIGS / "nonstationary.toml"), "--user", "1",
                 "--times", "1", "10", "50", "--out-dir", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "stationarity.json").read_text())
    assert report["eta"] > 1e-3
    for t in (1, 10, 50):
        mat = np.loadtxt(tmp_path / f"slice_u1_t{t}.csv", delimiter=",")
        assert mat.shape == (4, 64)
    assert (tmp_path / "slices_u1.gp").exists()


def test_characterize_identity_slice(identity_kernel, tmp_path):
    assert main(["characterize", "--kernel", str(identity_kernel), "--out-dir", str(tmp_path)]) == 0
    mat = np.loadtxt(tmp_path / "slice_u0_t0.csv", delimiter=",")
    assert mat[0, 0] == 1.0 and mat.sum() == 1.0


def test_characterize_out_of_range(identity_kernel, capsys):
    assert main(["characterize", "--kernel", str(identity_kernel), "--user", "5"]) == 1
    assert capsys.readouterr().err.startswith("error_code: domain_error")


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "eigenprecode", "gen", "--config", str(CONFIGS / "identity.toml"),
                           "--out-dir", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "kernel.hgmt").exists()


def test_precode_malformed_frame_is_parse_error(identity_kernel, tmp_path, capsys):
    (tmp_path / "s.csv").write_text("u,t,re,im\n0,0,1.0,zero\n")
    assert main(["precode", "--kernel", str(identity_kernel), "--frame", str(tmp_path / "s.csv")]) == 3
    assert capsys.readouterr().err.startswith("error_code: parse_error: malformed frame CSV")
