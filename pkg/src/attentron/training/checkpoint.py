"""Binary checkpoints.

Layout: magic "ATRN", u32 version=1, u64 step (within the current phase),
u8 phase, u32 tensor_count, then per tensor: u16 name length, UTF-8 name,
u8 dtype (0 = float32), u8 rank, rank x u32 dims, little-endian payload.
Tensors are written in sorted name order so identical state produces
identical bytes.

Besides parameters, the tensor list carries optimizer moments as
"<param>.m"/"<param>.v", the Adam step counter as "state.adam_steps", and
the model configuration as scalar "config.*" tensors (modes stored as
enum indices), which keeps everything inside the one wire format.
"""

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..config import FINE_MODES, VALUE_PATHS, HyperParams
from ..errors import CheckpointMismatchError, FormatError
from ..nn import AdamState
from ..synthesizer import Synthesizer

MAGIC = b"ATRN"
VERSION = 1

_CONFIG_FIELDS = ("n_mels", "d_char", "d_m", "d_v", "d_g", "conv_channels",
                  "kernel", "lstm_cells", "d_dec", "prenet_width",
                  "max_frames_factor")


@dataclass
class Checkpoint:
    version: int
    step: int                        # step within `phase`
    phase: int
    tensors: dict[str, np.ndarray]

    @property
    def hyperparams(self) -> HyperParams:
        hp = HyperParams(
            **{f: int(self.tensors[f"config.{f}"][()]) for f in _CONFIG_FIELDS},
            dropout=float(self.tensors["config.dropout"][()]),
            fine_mode=FINE_MODES[int(self.tensors["config.fine_mode"][()])],
            value_path=VALUE_PATHS[int(self.tensors["config.value_path"][()])],
            use_coarse=bool(int(self.tensors["config.use_coarse"][()])))
        return hp.validate()


def _config_tensors(hp: HyperParams) -> dict[str, np.ndarray]:
    out = {f"config.{f}": np.float32(getattr(hp, f)) for f in _CONFIG_FIELDS}
    out["config.dropout"] = np.float32(hp.dropout)
    out["config.fine_mode"] = np.float32(FINE_MODES.index(hp.fine_mode))
    out["config.value_path"] = np.float32(VALUE_PATHS.index(hp.value_path))
    out["config.use_coarse"] = np.float32(1.0 if hp.use_coarse else 0.0)
    return out


def write_tensors(path, tensors: dict[str, np.ndarray], step: int, phase: int):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<IQB", VERSION, step, phase)
    blob += struct.pack("<I", len(tensors))
    for name in sorted(tensors):
        arr = np.ascontiguousarray(np.asarray(tensors[name], dtype="<f4"))
        encoded = name.encode("utf-8")
        blob += struct.pack("<H", len(encoded))
        blob += encoded
        blob += struct.pack("<BB", 0, arr.ndim)
        blob += struct.pack(f"<{arr.ndim}I", *arr.shape)
        blob += arr.tobytes()
    path.write_bytes(bytes(blob))


def read_checkpoint(path) -> Checkpoint:
    path = Path(path)
    data = path.read_bytes()
    if data[:4] != MAGIC:
        raise FormatError(f"{path}: bad magic {data[:4]!r}, expected {MAGIC!r}")
    try:
        version, step, phase = struct.unpack_from("<IQB", data, 4)
        if version != VERSION:
            raise FormatError(f"{path}: unsupported version {version}")
        (count,) = struct.unpack_from("<I", data, 17)
        offset = 21
        tensors: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", data, offset)
            offset += 2
            name = data[offset:offset + name_len].decode("utf-8")
            offset += name_len
            dtype_code, rank = struct.unpack_from("<BB", data, offset)
            offset += 2
            if dtype_code != 0:
                raise FormatError(f"{path}: unknown dtype code {dtype_code} for {name}")
            dims = struct.unpack_from(f"<{rank}I", data, offset)
            offset += 4 * rank
            n = int(np.prod(dims)) if rank else 1
            payload = data[offset:offset + 4 * n]
            if len(payload) != 4 * n:
                raise FormatError(f"{path}: truncated payload for tensor {name}")
            offset += 4 * n
            tensors[name] = np.frombuffer(payload, dtype="<f4").reshape(dims).copy()
    except struct.error as exc:
        raise FormatError(f"{path}: truncated checkpoint ({exc})") from exc
    return Checkpoint(version=version, step=step, phase=phase, tensors=tensors)


def save_checkpoint(path, model: Synthesizer, opt_state: AdamState | None,
                    step: int, phase: int):
    tensors: dict[str, np.ndarray] = {}
    for p in model.parameters():
        tensors[p.name] = p.data
    if opt_state is not None:
        for name, m in opt_state.first_moment.items():
            tensors[f"{name}.m"] = m
        for name, v in opt_state.second_moment.items():
            tensors[f"{name}.v"] = v
        tensors["state.adam_steps"] = np.float32(opt_state.step_count)
    tensors.update(_config_tensors(model.hp))
    write_tensors(path, tensors, step, phase)


def load_into_model(ckpt: Checkpoint, model: Synthesizer,
                    opt_state: AdamState | None = None):
    """Copy parameters (and moments) in; names and shapes must match exactly."""
    params = {p.name: p for p in model.parameters()}
    stored = {k: v for k, v in ckpt.tensors.items()
              if not k.startswith("config.") and not k.startswith("state.")
              and not k.endswith(".m") and not k.endswith(".v")}
    missing = sorted(set(params) - set(stored))
    unexpected = sorted(set(stored) - set(params))
    if missing or unexpected:
        raise CheckpointMismatchError(
            f"parameter names do not match current config; missing: {missing}, "
            f"unexpected: {unexpected}")
    bad_shapes = [f"{name} (file {stored[name].shape}, model {params[name].data.shape})"
                  for name in params if stored[name].shape != params[name].data.shape]
    if bad_shapes:
        raise CheckpointMismatchError(f"tensor shape mismatch: {'; '.join(bad_shapes)}")
    for name, p in params.items():
        p.data = stored[name].astype(model.dtype)
    if opt_state is not None:
        opt_state.step_count = int(ckpt.tensors.get("state.adam_steps", np.float32(0))[()])
        for name in params:
            if f"{name}.m" in ckpt.tensors:
                opt_state.first_moment[name] = ckpt.tensors[f"{name}.m"].astype(model.dtype)
                opt_state.second_moment[name] = ckpt.tensors[f"{name}.v"].astype(model.dtype)


def load_model(path, dtype=np.float32) -> tuple[Synthesizer, Checkpoint]:
    """Build a model from a checkpoint's stored configuration and weights."""
    ckpt = read_checkpoint(path)
    model = Synthesizer(ckpt.hyperparams, seed=0, dtype=dtype)
    load_into_model(ckpt, model)
    return model, ckpt
