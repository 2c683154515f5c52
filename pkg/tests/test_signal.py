import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aspen.errors import ParameterError
from aspen.signal import (
    StftConfig,
    Trial,
    bandpass_filter,
    config_identifier,
    downsample,
    generate_stft_search_space,
    power_spectrogram,
    stft,
    stft_resolution,
    trial_to_spectral_tensor,
    window_candidates,
    zscore_normalize,
)
from oracles import naive_stft


def amplitude(x, f, fs):
    t = np.arange(x.shape[-1]) / fs
    return 2 * abs(np.mean(x * np.exp(-2j * np.pi * f * t)))


# ---------------------------------------------------------------- filtering


def test_bandpass_removes_dc():
    y = bandpass_filter(np.full((2, 1000), 3.0), 4, 40, 250)
    assert np.max(np.abs(y)) < 1e-6


def test_bandpass_passes_10hz():
    fs = 250
    t = np.arange(2500) / fs
    x = np.sin(2 * np.pi * 10 * t)
    y = bandpass_filter(x, 4, 40, fs)
    mid = slice(500, 2000)
    assert abs(amplitude(y[mid], 10, fs) - 1) < 0.05


def test_bandpass_attenuates_60hz():
    fs = 250
    t = np.arange(2500) / fs
    y = bandpass_filter(np.sin(2 * np.pi * 60 * t), 1, 24, fs)
    assert amplitude(y[500:2000], 60, fs) <= 0.1


@pytest.mark.parametrize("low,high", [(0, 10), (10, 5), (4, 125)])
def test_bandpass_rejects_bad_edges(low, high):
    with pytest.raises(ParameterError):
        bandpass_filter(np.zeros(500), low, high, 250)


def test_zscore_known_values():
    out = zscore_normalize(np.array([[1.0, 2.0, 3.0]]))
    assert np.allclose(out, [[-1.2247, 0, 1.2247]], atol=1e-4)


def test_zscore_idempotent():
    x = zscore_normalize(np.random.default_rng(0).normal(size=(4, 500)))
    assert np.allclose(zscore_normalize(x), x, atol=1e-6)


def test_zscore_constant_channel_warns():
    with pytest.warns(RuntimeWarning):
        out = zscore_normalize(np.array([[5.0, 5.0, 5.0], [1.0, 2.0, 3.0]]))
    assert np.all(out[0] == 0)


def test_downsample_identity():
    x = np.random.default_rng(1).normal(size=(3, 200))
    assert np.array_equal(downsample(x, 250, 250), x)


def test_downsample_length_and_tone():
    fs_in = 1000
    t = np.arange(4000) / fs_in
    y = downsample(np.sin(2 * np.pi * 5 * t), fs_in, 250)
    assert y.shape == (1000,)
    assert abs(amplitude(y[100:900], 5, 250) - 1) < 0.05


def test_downsample_rejects_fractional_ratio():
    with pytest.raises(ParameterError):
        downsample(np.zeros(300), 250, 100)


# ---------------------------------------------------------------- STFT


def test_stft_of_zeros():
    z = stft(np.zeros(256), StftConfig(250, 64, 32, 64))
    assert z.dtype.kind == "c" and not np.any(z)


def test_stft_matches_naive_dft_small():
    x = np.random.default_rng(2).normal(size=64)
    got = stft(x, StftConfig(250, 32, 16, 32))
    ref = naive_stft(x, 32, 16, 32)
    assert got.shape == ref.shape == (17, 3)
    assert np.max(np.abs(got - ref)) / np.max(np.abs(ref)) < 1e-9


def test_stft_peak_at_exact_bin():
    fs, n = 256, 64
    k0 = 7
    t = np.arange(512) / fs
    z = stft(np.cos(2 * np.pi * k0 * fs / n * t), StftConfig(fs, n, n // 2, n))
    assert np.all(np.argmax(np.abs(z), axis=0) == k0)


def test_power_spectrogram_arithmetic():
    assert power_spectrogram(np.array([3 + 4j]))[0] == 25
    assert not np.any(power_spectrogram(np.zeros(4, complex)))
    z = np.random.default_rng(3).normal(size=(5, 6)) + 1j * np.random.default_rng(4).normal(size=(5, 6))
    assert np.allclose(power_spectrogram(z), z.real**2 + z.imag**2, atol=1e-12, rtol=0)


def test_spectral_tensor_linearity():
    x = np.random.default_rng(5).normal(size=250)
    spec = trial_to_spectral_tensor(np.stack([x, 2 * x]), StftConfig(250, 128, 64, 256)).power
    assert np.allclose(spec[1], 4 * spec[0], rtol=1e-9, atol=0)


@pytest.mark.parametrize("T,n_perseg,hop,n_fft,shape", [(250, 128, 64, 256, (129, 2)), (1000, 512, 256, 512, (257, 2))])
def test_spectral_tensor_shape(T, n_perseg, hop, n_fft, shape):
    trial = Trial(np.zeros((3, T)), 0, 0, 0, 250.0)
    s = trial_to_spectral_tensor(trial, StftConfig(250, n_perseg, n_perseg - hop, n_fft))
    assert s.power.shape == (3, *shape)
    assert s.freq_axis.shape == (shape[0],) and s.time_axis.shape == (shape[1],)


def test_stft_rejects_short_signal():
    with pytest.raises(ParameterError):
        stft(np.zeros(100), StftConfig(250, 128, 64, 256))


def test_resolution():
    assert stft_resolution(StftConfig(250, 128, 64, 256))[0] == 0.9765625
    assert stft_resolution(StftConfig(250, 256, 128, 256))[1] == 0.512
    assert stft_resolution(StftConfig(256, 64, 63, 64))[1] == 1 / 256


@settings(max_examples=30, deadline=None)
@given(
    n_perseg=st.integers(4, 24),
    ratio=st.floats(0, 0.95),
    extra=st.integers(0, 8),
    length=st.integers(0, 40),
    seed=st.integers(0, 2**31),
)
def test_stft_property_against_naive(n_perseg, ratio, extra, length, seed):
    n_overlap = min(int(ratio * n_perseg), n_perseg - 1)
    x = np.random.default_rng(seed).normal(size=n_perseg + length)
    got = stft(x, StftConfig(100, n_perseg, n_overlap, n_perseg + extra))
    ref = naive_stft(x, n_perseg, n_perseg - n_overlap, n_perseg + extra)
    assert np.allclose(got, ref, rtol=0, atol=1e-9 * max(1.0, np.max(np.abs(ref))))


# ---------------------------------------------------------------- search space


def test_window_candidates():
    assert window_candidates(128, 250) == [64, 128, 250]
    assert window_candidates(32, 256) == [32, 64]


def test_identifiers():
    assert config_identifier(StftConfig(250, 256, 128, 512), 0.5) == "nperseg256_ov50_nfft512"
    assert config_identifier(StftConfig(250, 32, 30, 32), 0.9375) == "nperseg32_ov93.75_nfft32"


def test_unconstrained_space_has_27():
    space = generate_stft_search_space(StftConfig(250, 256, 128, 512), 4000)
    assert len(space) == 27 and not space.pruned
    assert len(set(space.ids)) == 27


def test_constrained_space_is_valid_and_logged(caplog):
    caplog.set_level("INFO", logger="aspen.signal")
    space = generate_stft_search_space(StftConfig(250, 128, 64, 256), 100)
    assert len(space) == 18
    for cfg in space.configs:
        cfg.validate(100)
    assert len(set(space.ids)) == len(space.ids)
    assert space.pruned == [("nperseg128", "n_perseg > trial_len (128 > 100)")]
    assert "128 > 100" in caplog.text
