import numpy as np
import pytest

from eigenprecode.channel_models import (
    StationarySpec,
    drifting_spec,
    gen_nonstationary,
    gen_random,
    gen_stationary,
    paired_corpus,
)
from eigenprecode.characterize import (
    export_kernel_slices,
    kernel_slice,
    kernel_stationarity,
    memory_length,
    stationarity_metric,
    time_correlation,
    toeplitz_average,
)
from eigenprecode.errors import DomainError
from eigenprecode.tensor_core import ChannelKernel, GridShape


def assert_psd(R):
    assert np.abs(R - R.conj().T).max() <= 1e-10 * max(np.abs(R).max(), 1.0)
    evals = np.linalg.eigvalsh(R)
    assert evals.min() >= -1e-10 * np.trace(R).real / R.shape[0]


def test_identity_correlation():
    R = time_correlation(ChannelKernel.identity(GridShape(3, 5)))
    assert np.array_equal(R, 3 * np.eye(5))


def test_correlation_definition_by_loops():
    k = gen_random(GridShape(2, 3), seed=1, in_shape=GridShape(2, 2))
    t = k.as_tensor()
    R = time_correlation(k)
    for a in range(3):
        for b in range(3):
            ref = sum(t[u, a, up, tp] * np.conj(t[u, b, up, tp]) for u in range(2) for up in range(2) for tp in range(2))
            assert R[a, b] == pytest.approx(ref, abs=1e-12)


def test_stationary_correlation_toeplitz_on_interior():
    spec = StationarySpec.random(GridShape(2, 20), num_taps=3, seed=4)
    R = time_correlation(gen_stationary(spec))
    L = spec.num_taps
    interior = R[L - 1:, L - 1:]
    for lag in range(-3, 4):
        diag = np.diagonal(interior, lag)
        assert np.abs(diag - diag[0]).max() <= 1e-12


def test_phase_ramp_correlation_diagonal_constant():
    T = 6
    k = ChannelKernel(GridShape(1, T), GridShape(1, T), np.diag(np.exp(2j * np.pi * 0.1 * np.arange(T))))
    R = time_correlation(k)
    assert np.allclose(np.abs(R), np.eye(T), atol=1e-15)


@pytest.mark.parametrize("seed", range(4))
def test_correlation_psd(seed):
    assert_psd(time_correlation(gen_random(GridShape(2, 6), seed=seed)))
    assert_psd(time_correlation(gen_nonstationary(drifting_spec(GridShape(3, 30), seed=seed))))


def test_toeplitz_matrix_has_zero_eta():
    c = np.array([3.0, 1.0 + 0.5j, 0.2])
    R = np.array([[c[abs(i - j)] if i >= j else np.conj(c[abs(i - j)]) for j in range(3)] for i in range(3)])
    assert stationarity_metric(R).eta == 0.0


def test_diag_eta_hand_value():
    report = stationarity_metric(np.diag([1.0, 2.0, 3.0]))
    assert report.eta == pytest.approx(np.sqrt(2) / np.sqrt(14), rel=1e-15)
    assert list(report.energy_profile) == [1.0, 2.0, 3.0]


def test_eta_bounded():
    rng = np.random.default_rng(0)
    for _ in range(20):
        a = rng.standard_normal((6, 6)) + 1j * rng.standard_normal((6, 6))
        eta = stationarity_metric(a @ a.conj().T).eta
        assert 0.0 <= eta <= 1 + 1e-12


def test_zero_matrix_degenerate():
    with pytest.raises(DomainError, match="degenerate"):
        stationarity_metric(np.zeros((3, 3)))


def test_toeplitz_average_preserves_diagonal_means():
    rng = np.random.default_rng(3)
    R = rng.standard_normal((5, 5))
    T = toeplitz_average(R)
    for off in range(-4, 5):
        assert np.allclose(np.diagonal(T, off), np.diagonal(R, off).mean())


def test_dominant_modes():
    report = stationarity_metric(np.diag([98.0, 1.0, 1.0]))
    assert report.dominant_modes == 2
    assert stationarity_metric(np.eye(4)).dominant_modes == 4


def test_memory_length():
    assert memory_length(ChannelKernel.identity(GridShape(2, 4))) == 0
    assert memory_length(gen_stationary(StationarySpec(GridShape(1, 5), [1, 0.5, 0.25]))) == 2


def test_stationary_generator_eta_zero():
    for seed in range(5):
        k = gen_stationary(StationarySpec.random(GridShape(2, 24), num_taps=4, seed=seed))
        assert kernel_stationarity(k).eta <= 1e-10


@pytest.mark.parametrize("pair", paired_corpus(seed=1, count=4), ids=lambda p: str(p[0].shape.dims))
def test_paired_corpus_eta_ordering(pair):
    ns, frozen = pair
    eta_ns = kernel_stationarity(gen_nonstationary(ns)).eta
    eta_frozen = kernel_stationarity(gen_nonstationary(frozen)).eta
    assert eta_frozen <= 1e-10
    assert eta_ns > eta_frozen


def test_slice_identity():
    sl = kernel_slice(ChannelKernel.identity(GridShape(2, 3)), 0, 0)
    expected = np.zeros((2, 3))
    expected[0, 0] = 1
    assert np.array_equal(sl, expected)


def test_slice_out_of_range():
    k = ChannelKernel.identity(GridShape(2, 3))
    with pytest.raises(DomainError):
        kernel_slice(k, 2, 0)
    with pytest.raises(DomainError):
        kernel_slice(k, 0, 3)


def test_stationary_slices_shift():
    k = gen_stationary(StationarySpec.random(GridShape(2, 12), num_taps=3, seed=6))
    for t in range(2, 10):
        a, b = kernel_slice(k, 1, t), kernel_slice(k, 1, t + 1)
        assert np.array_equal(b[:, 1:t + 2], a[:, 0:t + 1])


def test_ns_slices_pairwise_distinct():
    k = gen_nonstationary(drifting_spec(GridShape(4, 101), seed=3))
    slices = [kernel_slice(k, 1, t) for t in (1, 10, 50, 100)]
    for i in range(4):
        for j in range(i + 1, 4):
            assert np.linalg.norm(slices[i] - slices[j]) > 0


def test_export_slices_files(tmp_path):
    k = ChannelKernel.identity(GridShape(2, 3))
    paths = export_kernel_slices(k, 0, [0, 2], tmp_path)
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["slice_u0_t0.csv", "slice_u0_t2.csv", "slices_u0.gp"]
    assert (tmp_path / "slice_u0_t0.csv").read_text() == "1.0,0.0,0.0\n0.0,0.0,0.0\n"
    script = (tmp_path / "slices_u0.gp").read_text()
    assert "slice_u0_t2.csv" in script and "matrix with image" in script
    assert len(paths) == 3
