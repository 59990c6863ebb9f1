"""Phase reconstruction from log-mel features, for optional audible output.

Mel energies are mapped back to a linear magnitude spectrogram with the
filterbank pseudo-inverse, then phases are estimated by alternating
STFT/iSTFT projections starting from zero phase. Spectral convergence is
measured per iteration and returned on request; it is not guaranteed to
decrease.
"""

import numpy as np

from .pipeline import (HOP_LENGTH, N_FFT, WIN_LENGTH, MelFilterbank,
                       MelSpectrogram, _hann, default_filterbank)
from .wav import Waveform


def _istft(spec: np.ndarray) -> np.ndarray:
    """Overlap-add inverse of the uncentered zero-padded STFT."""
    n_frames = spec.shape[0]
    window = _hann(WIN_LENGTH)
    out_len = (n_frames - 1) * HOP_LENGTH + WIN_LENGTH
    acc = np.zeros(out_len)
    norm = np.zeros(out_len)
    frames = np.fft.irfft(spec, n=N_FFT, axis=1)[:, :WIN_LENGTH]
    for t in range(n_frames):
        s = t * HOP_LENGTH
        acc[s:s + WIN_LENGTH] += frames[t] * window
        norm[s:s + WIN_LENGTH] += window ** 2
    # only divide where the window overlap has real mass; the few samples at
    # the extreme edges otherwise get deconvolved by a near-zero window tail
    solid = norm > 1e-2 * norm.max()
    acc[solid] /= norm[solid]
    return acc


def _stft_complex(x: np.ndarray) -> np.ndarray:
    n_frames = 1 + (len(x) - WIN_LENGTH) // HOP_LENGTH
    idx = np.arange(WIN_LENGTH)[None, :] + HOP_LENGTH * np.arange(n_frames)[:, None]
    return np.fft.rfft(x[idx] * _hann(WIN_LENGTH), n=N_FFT, axis=1)


def mel_to_linear(m: MelSpectrogram, fb: MelFilterbank | None = None) -> np.ndarray:
    """Approximate linear magnitudes [L, 1025] via the filterbank pseudo-inverse."""
    fb = fb or default_filterbank()
    energy = np.exp(np.asarray(m.frames, dtype=np.float64))
    pinv = np.linalg.pinv(fb.weights)
    return np.clip(energy @ pinv.T, 0.0, None)


def griffin_lim(m: MelSpectrogram, iters: int = 32, fb: MelFilterbank | None = None,
                with_history: bool = False):
    """Reconstruct a waveform; optionally also return spectral-convergence history."""
    target = mel_to_linear(m, fb)
    phase = np.zeros_like(target)
    spec = target * np.exp(1j * phase)
    history = []
    x = _istft(spec)
    for _ in range(iters):
        est = _stft_complex(x)
        history.append(float(np.linalg.norm(np.abs(est) - target) /
                             max(np.linalg.norm(target), 1e-10)))
        angles = est / np.maximum(np.abs(est), 1e-10)
        x = _istft(target * angles)
    w = Waveform(np.clip(x, -1.0, 1.0), 16000)
    if with_history:
        return w, history
    return w
