"""Binary mel feature cache.

Layout: magic "MELS", u32 version=1, u32 L, u32 n_mels, then L*n_mels
little-endian float32 values row-major.
"""

import struct
from pathlib import Path

import numpy as np

from ..errors import FormatError
from .pipeline import MelSpectrogram

MAGIC = b"MELS"
VERSION = 1


def save_mel(path, m: MelSpectrogram):
    frames = np.ascontiguousarray(np.asarray(m.frames, dtype="<f4"))
    n_frames, n_mels = frames.shape
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<III", VERSION, n_frames, n_mels))
        fh.write(frames.tobytes())


def load_mel(path) -> MelSpectrogram:
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
        header = fh.read(12)
        if len(header) != 12:
            raise FormatError(f"{path}: truncated header")
        version, n_frames, n_mels = struct.unpack("<III", header)
        if version != VERSION:
            raise FormatError(f"{path}: unsupported version {version}")
        payload = fh.read(4 * n_frames * n_mels)
        if len(payload) != 4 * n_frames * n_mels:
            raise FormatError(f"{path}: truncated payload")
    frames = np.frombuffer(payload, dtype="<f4").reshape(n_frames, n_mels).copy()
    return MelSpectrogram(frames=frames)
