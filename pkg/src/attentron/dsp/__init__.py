"""Audio I/O and the mel feature pipeline."""

from .cache import load_mel, save_mel
from .griffin_lim import griffin_lim, mel_to_linear
from .pipeline import (FMAX, FMIN, HOP_LENGTH, HOP_SECONDS, LOG_FLOOR, N_FFT,
                       N_MELS, WIN_LENGTH, MelFilterbank, MelSpectrogram,
                       default_filterbank, hz_to_mel, log_mel, mel_cepstrum,
                       mel_filterbank, mel_to_hz, stft, trim_silence,
                       wav_to_mel)
from .wav import TARGET_SR, Waveform, load_wav, resample_linear, save_wav

__all__ = [
    "load_mel", "save_mel", "griffin_lim", "mel_to_linear",
    "FMAX", "FMIN", "HOP_LENGTH", "HOP_SECONDS", "LOG_FLOOR", "N_FFT",
    "N_MELS", "WIN_LENGTH", "MelFilterbank", "MelSpectrogram",
    "default_filterbank", "hz_to_mel", "log_mel", "mel_cepstrum",
    "mel_filterbank", "mel_to_hz", "stft", "trim_silence", "wav_to_mel",
    "TARGET_SR", "Waveform", "load_wav", "resample_linear", "save_wav",
]
