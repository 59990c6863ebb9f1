"""Feature pipeline: hand-checkable values, format round-trips, invariants."""

import numpy as np
import pytest

from attentron.dsp import (LOG_FLOOR, N_FFT, WIN_LENGTH, MelSpectrogram,
                           Waveform, default_filterbank, griffin_lim, hz_to_mel,
                           load_mel, load_wav, log_mel, mel_cepstrum,
                           mel_filterbank, mel_to_hz, resample_linear, save_mel,
                           save_wav, stft, trim_silence, wav_to_mel)
from attentron.errors import ConfigError, FormatError, LengthError, ShapeError


def sine(freq, seconds=1.0, sr=16000, amp=0.5):
    t = np.arange(int(seconds * sr)) / sr
    return Waveform(amp * np.sin(2 * np.pi * freq * t), sr)


# ---------------------------------------------------------------- wav io

def test_wav_roundtrip_zeros(tmp_path):
    p = tmp_path / "z.wav"
    save_wav(p, Waveform(np.zeros(16000), 16000))
    w = load_wav(p)
    assert len(w) == 16000
    assert w.sample_rate == 16000
    np.testing.assert_array_equal(w.samples, 0.0)


def test_wav_full_scale_sample(tmp_path):
    p = tmp_path / "f.wav"
    save_wav(p, Waveform(np.array([32767.0 / 32768.0]), 16000))
    w = load_wav(p)
    assert abs(w.samples[0] - 32767.0 / 32768.0) < 1e-9
    assert w.samples[0] < 1.0


def test_wav_stereo_averaged(tmp_path):
    import wave as wave_mod
    p = tmp_path / "s.wav"
    left = (np.ones(100) * 8000).astype("<i2")
    right = (np.ones(100) * 16000).astype("<i2")
    inter = np.empty(200, dtype="<i2")
    inter[0::2], inter[1::2] = left, right
    with wave_mod.open(str(p), "wb") as wf:
        wf.setnchannels(2)
        wf.setsampwidth(2)
        wf.setframerate(16000)
        wf.writeframes(inter.tobytes())
    w = load_wav(p)
    np.testing.assert_allclose(w.samples, 12000.0 / 32768.0)


def test_wav_rejects_8bit(tmp_path):
    import wave as wave_mod
    p = tmp_path / "b.wav"
    with wave_mod.open(str(p), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(1)
        wf.setframerate(16000)
        wf.writeframes(bytes(100))
    with pytest.raises(FormatError):
        load_wav(p)


def test_wav_truncated_raises(tmp_path):
    p = tmp_path / "t.wav"
    save_wav(p, Waveform(np.zeros(4000), 16000))
    data = p.read_bytes()
    p.write_bytes(data[:len(data) // 2])
    with pytest.raises((IOError, FormatError)):
        load_wav(p)


def test_resample_8k_doubles_length(tmp_path):
    p = tmp_path / "r.wav"
    ramp = np.linspace(-0.5, 0.5, 8000)
    save_wav(p, Waveform(ramp, 8000))
    w = load_wav(p)
    assert w.sample_rate == 16000
    assert len(w) == 16000


def test_resample_linear_interpolation_on_ramp():
    # on a straight ramp interpolation is exact
    ramp = Waveform(np.arange(8, dtype=np.float64), 8000)
    up = resample_linear(ramp, 16000)
    assert len(up) == 16
    np.testing.assert_allclose(up.samples[:14], np.arange(14) / 2.0)


# ---------------------------------------------------------------- trim

def test_trim_pure_silence_empty():
    w = trim_silence(Waveform(np.zeros(16000), 16000))
    assert len(w) == 0


def test_trim_no_silence_unchanged():
    w = sine(440, 0.5)
    out = trim_silence(w)
    assert abs(len(out) - len(w)) <= 400  # at most one frame of slack


def test_trim_silence_boundaries():
    sr = 16000
    sil = np.zeros(sr // 2)
    tone = 0.5 * np.sin(2 * np.pi * 440 * np.arange(sr) / sr)
    w = Waveform(np.concatenate([sil, tone, sil]), sr)
    out = trim_silence(w)
    assert abs(len(out) - sr) <= 400


# ---------------------------------------------------------------- stft

def test_stft_frame_count_and_config():
    w = sine(440, 1.0)
    mag = stft(w)
    assert mag.shape == (1 + (16000 - 1024) // 256, 1025)


def test_stft_pure_tone_bin():
    mag = stft(sine(1000, 0.5))
    # 1000 Hz * 2048 / 16000 = bin 128 exactly
    assert (mag.argmax(axis=1) == 128).all()


def test_stft_zero_input():
    mag = stft(Waveform(np.zeros(4096), 16000))
    np.testing.assert_array_equal(mag, 0.0)


def test_stft_too_short_raises():
    with pytest.raises(LengthError):
        stft(Waveform(np.zeros(1000), 16000))


def test_stft_sign_flip_invariance():
    w = sine(333, 0.3)
    np.testing.assert_array_equal(stft(w), stft(Waveform(-w.samples, w.sample_rate)))


# ---------------------------------------------------------------- mel filterbank

def test_mel_formula_at_700hz():
    assert abs(hz_to_mel(700.0) - 2595.0 * np.log10(2.0)) < 1e-9


def test_filterbank_centers_increasing():
    fb = default_filterbank()
    centers = fb.weights.argmax(axis=1)
    assert (np.diff(centers) > 0).all()


def test_filterbank_covers_passband():
    fb = default_filterbank()
    bin_hz = np.arange(1025) * (16000 / N_FFT)
    inside = (bin_hz > 125.0 + 16000 / N_FFT) & (bin_hz < 7600.0 - 16000 / N_FFT)
    assert (fb.weights.sum(axis=0)[inside] > 0).all()


def test_filterbank_rows_unimodal_and_bounded():
    fb = default_filterbank()
    bin_hz = np.arange(1025) * (16000 / N_FFT)
    for row in fb.weights:
        assert (row >= 0).all()
        assert row.max() > 0
        support = np.flatnonzero(row > 0)
        assert bin_hz[support[0]] >= 125.0 - 16000 / N_FFT
        assert bin_hz[support[-1]] <= 7600.0 + 16000 / N_FFT
        # single peak: once the row starts decreasing it never rises again
        d = np.diff(row[support])
        falling = False
        for step in d:
            if step < -1e-12:
                falling = True
            elif step > 1e-12:
                assert not falling, "row rises after falling"


def test_filterbank_bad_edges():
    with pytest.raises(ConfigError):
        mel_filterbank(fmin=8000, fmax=125)


# ---------------------------------------------------------------- log mel

def test_log_mel_zero_input_hits_floor():
    fb = default_filterbank()
    m = log_mel(np.zeros((3, 1025)), fb)
    np.testing.assert_array_equal(m.frames, np.float32(np.log(LOG_FLOOR)))


def test_log_mel_scaling_adds_log_c():
    fb = default_filterbank()
    rng = np.random.default_rng(0)
    mag = rng.random((4, 1025)) + 0.5
    a = log_mel(mag, fb).frames.astype(np.float64)
    b = log_mel(3.0 * mag, fb).frames.astype(np.float64)
    unclamped = a > np.log(LOG_FLOOR) + 1e-6
    np.testing.assert_allclose(b[unclamped] - a[unclamped], np.log(3.0), atol=1e-5)


def test_log_mel_shape():
    fb = default_filterbank()
    m = log_mel(np.ones((7, 1025)), fb)
    assert m.frames.shape == (7, 80)


def test_log_mel_shape_mismatch():
    with pytest.raises(ShapeError):
        log_mel(np.ones((7, 100)), default_filterbank())


# ---------------------------------------------------------------- cepstrum

def test_cepstrum_constant_frame_is_zero():
    m = MelSpectrogram(frames=np.full((2, 80), 3.25, dtype=np.float32))
    c = mel_cepstrum(m)
    np.testing.assert_allclose(c, 0.0, atol=1e-12)


def test_cepstrum_picks_out_basis_vector():
    n = 80
    k = 5
    basis = np.cos(np.pi * (np.arange(n) + 0.5) * k / n) * np.sqrt(2.0 / n)
    c = mel_cepstrum(MelSpectrogram(frames=basis[None, :]), n_coeffs=13)
    expected = np.zeros(13)
    expected[k - 1] = 1.0
    np.testing.assert_allclose(c[0], expected, atol=1e-10)


def test_cepstrum_offset_invariance():
    rng = np.random.default_rng(1)
    frame = rng.random(80)
    m = MelSpectrogram(frames=np.stack([frame, frame + 2.5]))
    c = mel_cepstrum(m)
    np.testing.assert_allclose(c[0], c[1], atol=1e-10)


def test_cepstrum_truncation_is_monotone():
    rng = np.random.default_rng(2)
    a, b = rng.random(80), rng.random(80)
    m = MelSpectrogram(frames=np.stack([a, b]))
    full = mel_cepstrum(m, n_coeffs=79)
    kept = mel_cepstrum(m, n_coeffs=13)
    assert np.linalg.norm(full[0] - full[1]) >= np.linalg.norm(kept[0] - kept[1])


# ---------------------------------------------------------------- pipeline

def test_pipeline_deterministic(tmp_path):
    p = tmp_path / "d.wav"
    rng = np.random.default_rng(3)
    save_wav(p, Waveform(0.3 * rng.standard_normal(8000), 16000))
    a = wav_to_mel(load_wav(p))
    b = wav_to_mel(load_wav(p))
    assert a.frames.tobytes() == b.frames.tobytes()


def test_mels_cache_roundtrip_bitwise(tmp_path):
    rng = np.random.default_rng(4)
    m = MelSpectrogram(frames=rng.standard_normal((11, 80)).astype(np.float32))
    p = tmp_path / "x.mels"
    save_mel(p, m)
    again = load_mel(p)
    assert again.frames.tobytes() == m.frames.tobytes()
    save_mel(tmp_path / "y.mels", again)
    assert (tmp_path / "x.mels").read_bytes() == (tmp_path / "y.mels").read_bytes()


def test_mels_cache_bad_magic(tmp_path):
    p = tmp_path / "bad.mels"
    p.write_bytes(b"NOPE" + bytes(12))
    with pytest.raises(FormatError):
        load_mel(p)


# ---------------------------------------------------------------- griffin-lim

def test_griffin_lim_zero_spectrogram():
    floor = np.full((10, 80), np.log(LOG_FLOOR), dtype=np.float32)
    w = griffin_lim(MelSpectrogram(frames=floor), iters=4)
    assert np.abs(w.samples).max() < 1e-3


def test_griffin_lim_output_length():
    m = MelSpectrogram(frames=np.zeros((9, 80), dtype=np.float32))
    w = griffin_lim(m, iters=1)
    assert len(w) == (9 - 1) * 256 + 1024


def test_griffin_lim_recovers_tone_bin():
    from attentron.dsp import mel_to_linear
    # place the tone on an FFT bin that is also a mel filter peak so the
    # filterbank round trip is unambiguous
    fb = default_filterbank()
    tone_bin = int(fb.weights[30].argmax())
    freq = tone_bin * 16000 / N_FFT
    mel = wav_to_mel(sine(freq, 0.6), trim=False)
    lin = mel_to_linear(mel)
    assert np.bincount(lin.argmax(axis=1)).argmax() == tone_bin
    w = griffin_lim(mel, iters=24)
    mag = stft(w)
    med = np.median(mag.argmax(axis=1))
    # phase recovery may wander within the filter triangle (half-width ~6 bins)
    assert abs(med - tone_bin) <= 3
