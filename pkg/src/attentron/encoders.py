"""Reference encoders.

The fine-grained encoder turns N same-speaker reference spectrograms into
attention keys (via conv x2 -> biLSTM x2) and values (via one fully
connected layer over the raw frames), then serves one context vector per
decoder step through masked scaled dot-product attention over all N*L_r
frames. The coarse-grained encoder compresses a whole utterance into a
single global embedding by masked temporal averaging; at inference the
embeddings of several references are averaged.

Padded reference frames are masked out of the softmax, so appending
padding never changes any output.
"""

from dataclasses import dataclass, field

import numpy as np

from .config import HyperParams
from .dsp import MelSpectrogram
from .errors import AttentionError, LengthError
from .nn import (LSTMWeights, Parameter, Tensor, attn_mix, bilstm, concat,
                 conv1d, fixed_mask_mul, init_lstm, linear, masked_mean_time,
                 masked_softmax, qk_scores, relu, reshape, scale)
from .nn.tensor import as_tensor


@dataclass
class ReferenceBatch:
    """N reference spectrograms zero-padded to a common length."""
    spectrograms: np.ndarray          # [N, L_r, n_mels]
    valid_lengths: list[int]

    @classmethod
    def from_mels(cls, mels: list) -> "ReferenceBatch":
        if not mels:
            raise AttentionError("reference batch is empty")
        arrays = [np.asarray(m.frames if isinstance(m, MelSpectrogram) else m,
                             dtype=np.float32) for m in mels]
        lengths = [a.shape[0] for a in arrays]
        if min(lengths) == 0:
            raise AttentionError("a reference spectrogram is empty")
        l_max = max(lengths)
        n_mels = arrays[0].shape[1]
        out = np.zeros((len(arrays), l_max, n_mels), dtype=np.float32)
        for i, a in enumerate(arrays):
            out[i, :a.shape[0]] = a
        return cls(spectrograms=out, valid_lengths=lengths)

    @property
    def mask(self) -> np.ndarray:
        n, l_r, _ = self.spectrograms.shape
        return np.arange(l_r)[None, :] < np.asarray(self.valid_lengths)[:, None]


@dataclass
class ReferenceEncoding:
    """Attention keys/values plus the padding mask, flattened over N*L_r.

    keys/values are per-batch-item [B, N*L_r, d]; `intermediate` holds the
    recurrent reference embeddings [B, N, L_r, d_r] when the key path ran.
    """
    keys: Tensor | None
    values: Tensor | None
    mask: np.ndarray                  # [B, N*L_r] bool
    intermediate: Tensor | None
    n_refs: int
    l_r: int
    fixed_context: Tensor | None = None


@dataclass
class GlobalEmbedding:
    vector: np.ndarray                # [d_g]


@dataclass
class ContextFrame:
    vector: np.ndarray                # [d_v]


class EncoderStack:
    """conv x2 (ReLU) followed by two bidirectional LSTM layers."""

    def __init__(self, name: str, hp: HyperParams, d_in: int,
                 rng: np.random.Generator, dtype=np.float32,
                 cells: int | None = None):
        self.hp = hp
        cells = cells if cells is not None else hp.lstm_cells
        k, ch = hp.kernel, hp.conv_channels
        self.params: list[Parameter] = []

        def xavier(fan_in, fan_out, shape):
            lim = np.sqrt(6.0 / (fan_in + fan_out))
            return rng.uniform(-lim, lim, size=shape).astype(dtype)

        self.conv1_k = Parameter(f"{name}.conv1.k", xavier(k * d_in, k * ch, (k, d_in, ch)))
        self.conv1_b = Parameter(f"{name}.conv1.b", np.zeros(ch, dtype=dtype))
        self.conv2_k = Parameter(f"{name}.conv2.k", xavier(k * ch, k * ch, (k, ch, ch)))
        self.conv2_b = Parameter(f"{name}.conv2.b", np.zeros(ch, dtype=dtype))
        self.lstm1_fw = init_lstm(f"{name}.lstm1.fw", ch, cells, rng, dtype)
        self.lstm1_bw = init_lstm(f"{name}.lstm1.bw", ch, cells, rng, dtype)
        self.lstm2_fw = init_lstm(f"{name}.lstm2.fw", 2 * cells, cells, rng, dtype)
        self.lstm2_bw = init_lstm(f"{name}.lstm2.bw", 2 * cells, cells, rng, dtype)
        self.params = [self.conv1_k, self.conv1_b, self.conv2_k, self.conv2_b]
        for w in (self.lstm1_fw, self.lstm1_bw, self.lstm2_fw, self.lstm2_bw):
            self.params.extend([w.w, w.u, w.b])
        self.out_width = 2 * cells

    def forward(self, x: Tensor, mask: np.ndarray) -> Tensor:
        # zero conv outputs at padded frames so stacked layers see exactly
        # what they would see processing each sequence alone
        pad = mask[..., None].astype(x.dtype)
        h = fixed_mask_mul(relu(conv1d(x, self.conv1_k, self.conv1_b)), pad)
        h = fixed_mask_mul(relu(conv1d(h, self.conv2_k, self.conv2_b)), pad)
        h = bilstm(h, self.lstm1_fw, self.lstm1_bw, mask=mask)
        return bilstm(h, self.lstm2_fw, self.lstm2_bw, mask=mask)


def _flatten_refs(x: np.ndarray | Tensor, expect_rank: int = 4):
    """[B, N, L, D] tensor/array -> ([B*N, L, D] tensor, B, N)."""
    t = as_tensor(x)
    if t.ndim == 3:                    # single batch item [N, L, D]
        t = reshape(t, (1,) + t.shape)
    b, n, l_r, d = t.shape
    return reshape(t, (b * n, l_r, d)), b, n


class FineGrainedEncoder:
    """Multi-reference attention over frame-level keys and raw-frame values."""

    def __init__(self, hp: HyperParams, rng: np.random.Generator, dtype=np.float32):
        hp.validate()
        self.hp = hp
        self.dtype = dtype
        self.params: list[Parameter] = []

        def xavier(fan_in, fan_out, shape):
            lim = np.sqrt(6.0 / (fan_in + fan_out))
            return rng.uniform(-lim, lim, size=shape).astype(dtype)

        if hp.fine_mode == "none":
            self.stack = None
            return
        self.stack = EncoderStack("fine", hp, hp.n_mels, rng, dtype)
        self.w_q = Parameter("fine.w_q", xavier(hp.d_dec, hp.d_m, (hp.d_dec, hp.d_m)))
        self.w_k = Parameter("fine.w_k", xavier(hp.d_r, hp.d_m, (hp.d_r, hp.d_m)))
        self.params = list(self.stack.params) + [self.w_q, self.w_k]
        if hp.value_path == "raw_fc":
            # the one fully-connected layer over raw spectrogram frames
            self.w_v = Parameter("fine.w_v", xavier(hp.n_mels, hp.d_v, (hp.n_mels, hp.d_v)))
            self.b_v = Parameter("fine.b_v", np.zeros(hp.d_v, dtype=dtype))
            self.value_stack = None
            self.params += [self.w_v, self.b_v]
        else:
            self.value_stack = EncoderStack("fine.value", hp, hp.n_mels, rng,
                                            dtype, cells=hp.d_v // 2)
            self.params += self.value_stack.params
        if hp.fine_mode == "self_attention":
            self.self_q = Parameter("fine.self_q", xavier(1, hp.d_m, (hp.d_m,)))
            self.params.append(self.self_q)

    def encode(self, spectrograms, valid_lengths) -> ReferenceEncoding:
        """spectrograms: [B, N, L_r, n_mels] (or [N, L_r, n_mels]); lengths same leading shape."""
        lengths = np.asarray(valid_lengths)
        if lengths.ndim == 1:
            lengths = lengths[None, :]
        if lengths.size == 0 or lengths.shape[1] == 0:
            raise AttentionError("reference set is empty")
        if (lengths < 1).any():
            raise AttentionError("every reference must have at least one frame")
        flat, b, n = _flatten_refs(spectrograms)
        l_r = flat.shape[1]
        frame_mask = np.arange(l_r)[None, :] < lengths.reshape(b * n, 1)
        mask = frame_mask.reshape(b, n * l_r)
        if self.hp.fine_mode == "none":
            return ReferenceEncoding(keys=None, values=None, mask=mask,
                                     intermediate=None, n_refs=n, l_r=l_r)
        z_r = self.stack.forward(flat, frame_mask)          # [B*N, L_r, d_r]
        keys = linear(z_r, self.w_k)                        # no bias
        if self.value_stack is None:
            values = linear(flat, self.w_v, self.b_v)       # raw-frame path
        else:
            values = self.value_stack.forward(flat, frame_mask)
        enc = ReferenceEncoding(
            keys=reshape(keys, (b, n * l_r, self.hp.d_m)),
            values=reshape(values, (b, n * l_r, self.hp.d_v)),
            mask=mask,
            intermediate=reshape(z_r, (b, n, l_r, self.hp.d_r)),
            n_refs=n, l_r=l_r)
        if self.hp.fine_mode == "average_pool":
            probs = Tensor(mask.astype(values.dtype) / mask.sum(axis=1, keepdims=True))
            enc.fixed_context = attn_mix(probs, enc.values)
        elif self.hp.fine_mode == "self_attention":
            q = reshape(self.self_q, (1, self.hp.d_m))
            qb = q if b == 1 else reshape(concat([q] * b, axis=0), (b, self.hp.d_m))
            logits = scale(qk_scores(qb, enc.keys), 1.0 / np.sqrt(self.hp.d_m))
            probs = masked_softmax(logits, mask)
            enc.fixed_context = attn_mix(probs, enc.values)
        return enc

    def attend(self, query_state: Tensor, enc: ReferenceEncoding):
        """One decoder step: (context [B, d_v], weights [B, N*L_r])."""
        b = query_state.shape[0]
        mode = self.hp.fine_mode
        if mode == "none":
            zeros = Tensor(np.zeros((b, self.hp.d_v), dtype=query_state.dtype))
            return zeros, np.zeros(enc.mask.shape, dtype=query_state.dtype)
        if mode in ("average_pool", "self_attention"):
            return enc.fixed_context, np.zeros(enc.mask.shape, dtype=query_state.dtype)
        if not enc.mask.any(axis=1).all():
            raise AttentionError("a batch item has no attendable reference frames")
        q = linear(query_state, self.w_q)
        logits = scale(qk_scores(q, enc.keys), 1.0 / np.sqrt(self.hp.d_m))
        probs = masked_softmax(logits, enc.mask)
        context = attn_mix(probs, enc.values)
        return context, probs.data


class CoarseGrainedEncoder:
    """Global embedding: conv x2 -> biLSTM x2 -> masked mean -> projection."""

    def __init__(self, hp: HyperParams, rng: np.random.Generator, dtype=np.float32):
        self.hp = hp
        self.dtype = dtype
        self.params: list[Parameter] = []
        if not hp.use_coarse:
            self.stack = None
            return

        def xavier(fan_in, fan_out, shape):
            lim = np.sqrt(6.0 / (fan_in + fan_out))
            return rng.uniform(-lim, lim, size=shape).astype(dtype)

        self.stack = EncoderStack("coarse", hp, hp.n_mels, rng, dtype)
        self.proj_w = Parameter("coarse.proj.w", xavier(hp.d_r, hp.d_g, (hp.d_r, hp.d_g)))
        self.proj_b = Parameter("coarse.proj.b", np.zeros(hp.d_g, dtype=dtype))
        self.params = list(self.stack.params) + [self.proj_w, self.proj_b]

    def embed_batch(self, frames, lengths) -> Tensor:
        """frames [B, T, n_mels] (tensor or array) -> [B, d_g]."""
        x = as_tensor(frames)
        lengths = np.asarray(lengths)
        b, t, _ = x.shape
        if (lengths < 1).any() or t == 0:
            raise LengthError("coarse encoder needs at least one frame per item")
        if not self.hp.use_coarse:
            return Tensor(np.zeros((b, self.hp.d_g), dtype=x.dtype))
        mask = np.arange(t)[None, :] < lengths[:, None]
        h = self.stack.forward(x, mask)
        pooled = masked_mean_time(h, mask)
        return linear(pooled, self.proj_w, self.proj_b)

    def embed(self, spec) -> GlobalEmbedding:
        frames = np.asarray(spec.frames if isinstance(spec, MelSpectrogram) else spec)
        if frames.ndim != 2 or frames.shape[0] == 0:
            raise LengthError("coarse encoder got an empty spectrogram")
        out = self.embed_batch(frames[None].astype(self.dtype), [frames.shape[0]])
        return GlobalEmbedding(vector=out.data[0])

    def embed_multi(self, specs: list) -> GlobalEmbedding:
        if not specs:
            raise AttentionError("coarse encoder got no references")
        embs = np.stack([self.embed(s).vector for s in specs])
        # per-component sort makes the mean bitwise order-independent
        return GlobalEmbedding(vector=np.sort(embs, axis=0).mean(axis=0))


def encode_references(refs: ReferenceBatch, encoder: FineGrainedEncoder) -> ReferenceEncoding:
    """Single-utterance wrapper over FineGrainedEncoder.encode."""
    return encoder.encode(refs.spectrograms[None], np.asarray(refs.valid_lengths)[None])


def attend(query_state, enc: ReferenceEncoding, encoder: FineGrainedEncoder):
    """Single query vector [d_dec] -> (ContextFrame, weights [N*L_r])."""
    q = as_tensor(np.asarray(query_state, dtype=encoder.dtype))
    if q.ndim == 1:
        q = reshape(q, (1, q.shape[0]))
    ctx, weights = encoder.attend(q, enc)
    return ContextFrame(vector=ctx.data[0]), weights[0]


def coarse_embed(spec, encoder: CoarseGrainedEncoder) -> GlobalEmbedding:
    return encoder.embed(spec)


def coarse_embed_multi(specs: list, encoder: CoarseGrainedEncoder) -> GlobalEmbedding:
    return encoder.embed_multi(specs)
