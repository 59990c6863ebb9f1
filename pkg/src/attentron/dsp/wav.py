"""RIFF/WAVE PCM-16 reading and writing plus linear resampling to 16 kHz."""

import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import FormatError

TARGET_SR = 16000


@dataclass
class Waveform:
    samples: np.ndarray      # float64 in [-1, 1]
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.sample_rate <= 0:
            raise FormatError(f"sample rate must be positive, got {self.sample_rate}")

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    def __len__(self):
        return len(self.samples)


def resample_linear(w: Waveform, target_sr: int = TARGET_SR) -> Waveform:
    if w.sample_rate == target_sr:
        return w
    n = len(w.samples)
    new_n = int(round(n * target_sr / w.sample_rate))
    if n == 0 or new_n == 0:
        return Waveform(np.zeros(0), target_sr)
    positions = np.arange(new_n) * (w.sample_rate / target_sr)
    out = np.interp(positions, np.arange(n), w.samples)
    return Waveform(out, target_sr)


def load_wav(path, target_sr: int = TARGET_SR) -> Waveform:
    """Read a PCM-16 mono/stereo WAV, scale to [-1, 1], resample to 16 kHz."""
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as wf:
            n_channels = wf.getnchannels()
            width = wf.getsampwidth()
            sr = wf.getframerate()
            n_frames = wf.getnframes()
            raw = wf.readframes(n_frames)
    except (wave.Error, EOFError) as exc:
        raise FormatError(f"{path}: not a readable RIFF/WAVE PCM file ({exc})") from exc
    except OSError as exc:
        raise IOError(f"{path}: {exc}") from exc
    if width != 2:
        raise FormatError(f"{path}: only 16-bit PCM supported, got sample width {width}")
    if len(raw) < n_frames * n_channels * 2:
        raise IOError(f"{path}: truncated payload "
                      f"({len(raw)} bytes for {n_frames} frames x {n_channels} ch)")
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64)
    if n_channels > 1:
        samples = samples.reshape(-1, n_channels).mean(axis=1)
    samples = samples / 32768.0
    return resample_linear(Waveform(samples, sr), target_sr)


def save_wav(path, w: Waveform):
    """Write mono PCM-16; samples are clipped to [-1, 1) before quantizing."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    clipped = np.clip(w.samples, -1.0, 32767.0 / 32768.0)
    pcm = np.round(clipped * 32768.0).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(w.sample_rate)
        wf.writeframes(pcm.tobytes())
