"""Feature pipeline: silence trim, STFT, mel filterbank, log compression,
and the DCT cepstra used by the distortion metric.

Framing is exact and uncentered: frame t covers samples [t*hop, t*hop+win),
L = 1 + (n - win) // hop. The 1024-sample Hann window is zero-padded to a
2048-point transform. Log-mel uses natural log with a 1e-5 clamp.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.fft import dct

from ..errors import ConfigError, LengthError, ShapeError
from .wav import Waveform

WIN_LENGTH = 1024
HOP_LENGTH = 256
N_FFT = 2048
N_MELS = 80
FMIN = 125.0
FMAX = 7600.0
LOG_FLOOR = 1e-5
HOP_SECONDS = HOP_LENGTH / 16000.0


@dataclass
class MelSpectrogram:
    frames: np.ndarray                 # [L, n_mels] float32 log-mel energies
    hop_seconds: float = HOP_SECONDS

    def __post_init__(self):
        self.frames = np.asarray(self.frames)

    @property
    def n_mels(self) -> int:
        return self.frames.shape[1]

    def __len__(self):
        return self.frames.shape[0]


@dataclass
class MelFilterbank:
    weights: np.ndarray                # [n_mels, n_fft//2 + 1]
    fmin: float = FMIN
    fmax: float = FMAX


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def trim_silence(w: Waveform, threshold_db: float = 60.0) -> Waveform:
    """Drop leading/trailing 25 ms frames quieter than max-frame RMS minus threshold."""
    frame = int(round(0.025 * w.sample_rate))
    hop = int(round(0.010 * w.sample_rate))
    n = len(w.samples)
    if n == 0:
        return Waveform(np.zeros(0), w.sample_rate)
    if n <= frame:
        starts = [0]
        frame = n
    else:
        starts = list(range(0, n - frame + 1, hop))
    rms = np.array([np.sqrt(np.mean(w.samples[s:s + frame] ** 2)) for s in starts])
    cutoff = rms.max() * 10.0 ** (-threshold_db / 20.0)
    loud = rms > cutoff
    if not loud.any():
        return Waveform(np.zeros(0), w.sample_rate)
    first = int(np.argmax(loud))
    last = len(loud) - 1 - int(np.argmax(loud[::-1]))
    begin = starts[first]
    # a quiet frame follows, so everything from its start on is droppable;
    # when the last frame is loud the signal runs to the end
    end = n if last == len(starts) - 1 else min(starts[last] + hop, n)
    return Waveform(w.samples[begin:end].copy(), w.sample_rate)


def _hann(n: int) -> np.ndarray:
    # periodic Hann
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def stft(w: Waveform) -> np.ndarray:
    """Magnitude spectrogram [L, 1025]; raises when shorter than one window."""
    x = np.asarray(w.samples, dtype=np.float64)
    if len(x) < WIN_LENGTH:
        raise LengthError(f"stft: need at least {WIN_LENGTH} samples, got {len(x)}")
    n_frames = 1 + (len(x) - WIN_LENGTH) // HOP_LENGTH
    idx = np.arange(WIN_LENGTH)[None, :] + HOP_LENGTH * np.arange(n_frames)[:, None]
    frames = x[idx] * _hann(WIN_LENGTH)
    spec = np.fft.rfft(frames, n=N_FFT, axis=1)
    return np.abs(spec)


def mel_filterbank(n_fft: int = N_FFT, n_mels: int = N_MELS, fmin: float = FMIN,
                   fmax: float = FMAX, sr: int = 16000) -> MelFilterbank:
    """Peak-1 triangular filters with centers uniform on the mel scale."""
    if not (0 <= fmin < fmax <= sr / 2):
        raise ConfigError(f"mel_filterbank: need 0 <= fmin < fmax <= sr/2, "
                          f"got fmin={fmin}, fmax={fmax}, sr={sr}")
    edges_hz = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    bin_hz = np.arange(n_fft // 2 + 1) * (sr / n_fft)
    weights = np.zeros((n_mels, n_fft // 2 + 1), dtype=np.float64)
    for i in range(n_mels):
        lo, center, hi = edges_hz[i], edges_hz[i + 1], edges_hz[i + 2]
        rising = (bin_hz - lo) / (center - lo)
        falling = (hi - bin_hz) / (hi - center)
        weights[i] = np.clip(np.minimum(rising, falling), 0.0, None)
    return MelFilterbank(weights=weights, fmin=fmin, fmax=fmax)


def log_mel(mag: np.ndarray, fb: MelFilterbank) -> MelSpectrogram:
    """Natural-log mel energies clamped at 1e-5, stored as float32."""
    mag = np.asarray(mag, dtype=np.float64)
    if mag.ndim != 2 or mag.shape[1] != fb.weights.shape[1]:
        raise ShapeError(f"log_mel: magnitude shape {mag.shape} incompatible with "
                         f"filterbank {fb.weights.shape}")
    energy = mag @ fb.weights.T
    out = np.log(np.maximum(energy, LOG_FLOOR)).astype(np.float32)
    floor32 = np.float32(np.log(LOG_FLOOR))
    return MelSpectrogram(frames=np.maximum(out, floor32))


def mel_cepstrum(m: MelSpectrogram, n_coeffs: int = 13) -> np.ndarray:
    """Orthonormal DCT-II per frame; keeps coefficients 1..n_coeffs (c0 dropped)."""
    frames = np.asarray(m.frames, dtype=np.float64)
    if n_coeffs > frames.shape[1]:
        raise ShapeError(f"mel_cepstrum: {n_coeffs} coefficients from {frames.shape[1]} bins")
    full = dct(frames, type=2, norm="ortho", axis=1)
    return full[:, 1:n_coeffs + 1]


def wav_to_mel(w: Waveform, fb: MelFilterbank | None = None,
               trim: bool = True) -> MelSpectrogram:
    """Full front end: trim, STFT, mel, log. Raises LengthError on tiny input."""
    if trim:
        w = trim_silence(w)
    if len(w) < WIN_LENGTH:
        raise LengthError(f"wav_to_mel: {len(w)} samples left after trimming, "
                          f"need at least {WIN_LENGTH}")
    if fb is None:
        fb = default_filterbank()
    return log_mel(stft(w), fb)


_FB_CACHE: dict = {}


def default_filterbank() -> MelFilterbank:
    if "fb" not in _FB_CACHE:
        _FB_CACHE["fb"] = mel_filterbank()
    return _FB_CACHE["fb"]
