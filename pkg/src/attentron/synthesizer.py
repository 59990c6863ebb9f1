"""Sequence-to-sequence backbone around the two reference encoders.

Text goes through character embedding, two convolutions and one biLSTM;
the global embedding is broadcast-concatenated onto every text frame. Each
decoder step runs: prenet on the previous mel frame, dot-product text
attention queried by the previous decoder state, one LSTM step, reference
attention queried by the new state, then linear mel and stop heads over
[state, reference context, text context].

Training uses teacher forcing with the target's own global embedding;
inference feeds predictions back, averages the references' global
embeddings, and runs in float64 so results are exactly reproducible and
insensitive to reference order.
"""

from dataclasses import dataclass, field

import numpy as np

from .config import HyperParams, text_to_ids
from .dsp import HOP_SECONDS, MelSpectrogram
from .encoders import CoarseGrainedEncoder, FineGrainedEncoder, ReferenceEncoding
from .errors import AttentionError, InputError, LengthError, ShapeError
from .nn import (LSTMWeights, Parameter, Tensor, attn_mix, bce_logits_masked,
                 bilstm, broadcast_concat_rows, concat, conv1d, dropout,
                 embedding, fixed_mask_mul, init_lstm, linear, lstm_cell,
                 masked_softmax, mse_masked, narrow, no_grad, qk_scores, relu,
                 reshape, scale)
from .nn.ops import add, stable_sigmoid


@dataclass
class TextEncoding:
    frames: Tensor                   # [B, L_t, d_text] (includes broadcast e_g)
    attn_keys: Tensor                # [B, L_t, d_m]
    mask: np.ndarray                 # [B, L_t]
    lengths: np.ndarray


@dataclass
class DecoderState:
    lstm_hidden: Tensor              # [B, d_dec]
    lstm_cell: Tensor                # [B, d_dec]
    prev_frame: Tensor               # [B, n_mels]
    step: int
    text_attention_sum: np.ndarray   # running total of text weights (diagnostic)


@dataclass
class SynthesisResult:
    mel: MelSpectrogram
    stop_probs: np.ndarray           # [L_v]
    text_attention: np.ndarray       # [L_v, L_t]
    ref_attention: np.ndarray        # [L_v, N*L_r]
    terminated_by: str               # "stop_token" | "frame_cap"


class Synthesizer:
    """Owns every parameter; encoders are wired in as submodules."""

    def __init__(self, hp: HyperParams, seed: int = 0, dtype=np.float32):
        hp.validate()
        self.hp = hp
        self.dtype = dtype
        rng = np.random.default_rng(seed)

        def xavier(fan_in, fan_out, shape):
            lim = np.sqrt(6.0 / (fan_in + fan_out))
            return rng.uniform(-lim, lim, size=shape).astype(dtype)

        from .config import VOCAB_SIZE
        hpv = hp
        self.embed_table = Parameter("text.embed",
                                     xavier(VOCAB_SIZE, hpv.d_char, (VOCAB_SIZE, hpv.d_char)))
        k = hpv.kernel
        self.text_conv1_k = Parameter("text.conv1.k",
                                      xavier(k * hpv.d_char, k * hpv.conv_channels,
                                             (k, hpv.d_char, hpv.conv_channels)))
        self.text_conv1_b = Parameter("text.conv1.b", np.zeros(hpv.conv_channels, dtype=dtype))
        self.text_conv2_k = Parameter("text.conv2.k",
                                      xavier(k * hpv.conv_channels, k * hpv.conv_channels,
                                             (k, hpv.conv_channels, hpv.conv_channels)))
        self.text_conv2_b = Parameter("text.conv2.b", np.zeros(hpv.conv_channels, dtype=dtype))
        self.text_lstm_fw = init_lstm("text.lstm.fw", hpv.conv_channels, hpv.lstm_cells, rng, dtype)
        self.text_lstm_bw = init_lstm("text.lstm.bw", hpv.conv_channels, hpv.lstm_cells, rng, dtype)

        self.fine = FineGrainedEncoder(hp, rng, dtype)
        self.coarse = CoarseGrainedEncoder(hp, rng, dtype)

        pw = hpv.prenet_width
        self.prenet1_w = Parameter("dec.prenet1.w", xavier(hpv.n_mels, pw, (hpv.n_mels, pw)))
        self.prenet1_b = Parameter("dec.prenet1.b", np.zeros(pw, dtype=dtype))
        self.prenet2_w = Parameter("dec.prenet2.w", xavier(pw, pw, (pw, pw)))
        self.prenet2_b = Parameter("dec.prenet2.b", np.zeros(pw, dtype=dtype))
        self.w_tq = Parameter("dec.w_tq", xavier(hpv.d_dec, hpv.d_m, (hpv.d_dec, hpv.d_m)))
        self.w_tk = Parameter("dec.w_tk", xavier(hpv.d_text, hpv.d_m, (hpv.d_text, hpv.d_m)))
        dec_in = pw + hpv.d_text
        self.dec_lstm = init_lstm("dec.lstm", dec_in, hpv.d_dec, rng, dtype)
        head_in = hpv.d_dec + hpv.d_v + hpv.d_text
        self.mel_w = Parameter("dec.mel.w", xavier(head_in, hpv.n_mels, (head_in, hpv.n_mels)))
        self.mel_b = Parameter("dec.mel.b", np.zeros(hpv.n_mels, dtype=dtype))
        self.stop_w = Parameter("dec.stop.w", xavier(head_in, 1, (head_in, 1)))
        self.stop_b = Parameter("dec.stop.b", np.zeros(1, dtype=dtype))

    # ------------------------------------------------------------- params

    def parameters(self) -> list[Parameter]:
        params = [self.embed_table, self.text_conv1_k, self.text_conv1_b,
                  self.text_conv2_k, self.text_conv2_b]
        for w in (self.text_lstm_fw, self.text_lstm_bw):
            params.extend([w.w, w.u, w.b])
        params.extend(self.fine.params)
        params.extend(self.coarse.params)
        params.extend([self.prenet1_w, self.prenet1_b, self.prenet2_w, self.prenet2_b,
                       self.w_tq, self.w_tk,
                       self.dec_lstm.w, self.dec_lstm.u, self.dec_lstm.b,
                       self.mel_w, self.mel_b, self.stop_w, self.stop_b])
        names = [p.name for p in params]
        assert len(names) == len(set(names)), "parameter names must be unique"
        return params

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def cast(self, dtype) -> "Synthesizer":
        """Copy of this model with every parameter cast to `dtype`."""
        clone = Synthesizer(self.hp, seed=0, dtype=dtype)
        src = {p.name: p for p in self.parameters()}
        for p in clone.parameters():
            p.data = src[p.name].data.astype(dtype)
        return clone

    # ------------------------------------------------------------- text side

    def encode_text(self, ids: np.ndarray, lengths, e_g: Tensor) -> TextEncoding:
        """ids [B, L_t] int (0 = pad), e_g [B, d_g] -> frames [B, L_t, d_text]."""
        ids = np.asarray(ids)
        if ids.ndim == 1:
            ids = ids[None]
        lengths = np.asarray(lengths).reshape(ids.shape[0])
        if ids.shape[1] == 0 or (lengths < 1).any():
            raise InputError("encode_text: empty text")
        mask = np.arange(ids.shape[1])[None, :] < lengths[:, None]
        pad = mask[..., None].astype(self.dtype)
        h = embedding(self.embed_table, ids)
        h = fixed_mask_mul(relu(conv1d(h, self.text_conv1_k, self.text_conv1_b)), pad)
        h = fixed_mask_mul(relu(conv1d(h, self.text_conv2_k, self.text_conv2_b)), pad)
        h = bilstm(h, self.text_lstm_fw, self.text_lstm_bw, mask=mask)
        frames = broadcast_concat_rows(h, e_g)
        keys = linear(frames, self.w_tk)
        return TextEncoding(frames=frames, attn_keys=keys, mask=mask, lengths=lengths)

    # ------------------------------------------------------------- decoder

    def _prenet(self, frame: Tensor, train: bool, rng) -> Tensor:
        h = relu(linear(frame, self.prenet1_w, self.prenet1_b))
        if train and self.hp.dropout > 0:
            h = dropout(h, self.hp.dropout, rng)
        h = relu(linear(h, self.prenet2_w, self.prenet2_b))
        if train and self.hp.dropout > 0:
            h = dropout(h, self.hp.dropout, rng)
        return h

    def _step(self, prev_frame: Tensor, h: Tensor, c: Tensor,
              text_enc: TextEncoding, ref_enc: ReferenceEncoding,
              train: bool = False, rng=None):
        hp = self.hp
        pre = self._prenet(prev_frame, train, rng)
        tq = linear(h, self.w_tq)
        t_logits = scale(qk_scores(tq, text_enc.attn_keys), 1.0 / np.sqrt(hp.d_m))
        t_probs = masked_softmax(t_logits, text_enc.mask)
        t_ctx = attn_mix(t_probs, text_enc.frames)
        x = concat([pre, t_ctx], axis=-1)
        hc = lstm_cell(x, h, c, self.dec_lstm)
        h2 = narrow(hc, 1, 0, hp.d_dec)
        c2 = narrow(hc, 1, hp.d_dec, hp.d_dec)
        ev, ref_weights = self.fine.attend(h2, ref_enc)
        feat = concat([h2, ev, t_ctx], axis=-1)
        mel = linear(feat, self.mel_w, self.mel_b)
        stop_logit = linear(feat, self.stop_w, self.stop_b)
        return mel, stop_logit, h2, c2, t_probs.data, ref_weights

    def initial_state(self, batch: int, dtype=None) -> DecoderState:
        dt = dtype or self.dtype
        zeros = lambda w: Tensor(np.zeros((batch, w), dtype=dt))
        return DecoderState(lstm_hidden=zeros(self.hp.d_dec),
                            lstm_cell=zeros(self.hp.d_dec),
                            prev_frame=zeros(self.hp.n_mels),
                            step=0,
                            text_attention_sum=np.zeros(0))

    def decode_step(self, state: DecoderState, text_enc: TextEncoding,
                    ref_enc: ReferenceEncoding, train: bool = False, rng=None):
        """Public single-step API: returns (mel_frame, stop_prob, new_state)."""
        mel, stop_logit, h2, c2, t_w, _ = self._step(
            state.prev_frame, state.lstm_hidden, state.lstm_cell,
            text_enc, ref_enc, train=train, rng=rng)
        acc = state.text_attention_sum
        acc = t_w.sum(axis=0) if acc.size == 0 else acc + t_w.sum(axis=0)
        new_state = DecoderState(lstm_hidden=h2, lstm_cell=c2, prev_frame=mel,
                                 step=state.step + 1, text_attention_sum=acc)
        stop_prob = stable_sigmoid(stop_logit.data)[:, 0]
        return mel, stop_prob, new_state

    # ------------------------------------------------------------- training

    def forward_teacher_forced(self, ids, text_lengths, target: np.ndarray,
                               target_lengths, ref_specs, ref_lengths,
                               train: bool = True, rng=None):
        """Teacher-forced pass. target [B, T, n_mels]; refs [B, N, L_r, n_mels].

        Returns (pred_mel Tensor [B, T, n_mels], stop_logits Tensor [B, T]).
        The coarse embedding comes from the target utterance itself.
        """
        target = np.asarray(target, dtype=self.dtype)
        if target.ndim == 2:
            target = target[None]
        b, t_len, _ = target.shape
        if t_len == 0:
            raise LengthError("teacher forcing needs a nonempty target")
        target_lengths = np.asarray(target_lengths).reshape(b)
        rng = rng or np.random.default_rng(0)

        e_g = self.coarse.embed_batch(target, target_lengths)
        text_enc = self.encode_text(ids, text_lengths, e_g)
        ref_enc = self.fine.encode(ref_specs, ref_lengths)

        h = Tensor(np.zeros((b, self.hp.d_dec), dtype=self.dtype))
        c = Tensor(np.zeros((b, self.hp.d_dec), dtype=self.dtype))
        frames = []
        stops = []
        for j in range(t_len):
            prev = (Tensor(np.zeros((b, self.hp.n_mels), dtype=self.dtype)) if j == 0
                    else Tensor(target[:, j - 1]))
            mel, stop_logit, h, c, _, _ = self._step(prev, h, c, text_enc, ref_enc,
                                                     train=train, rng=rng)
            frames.append(reshape(mel, (b, 1, self.hp.n_mels)))
            stops.append(stop_logit)
        pred = concat(frames, axis=1)
        stop_logits = reshape(concat(stops, axis=1), (b, t_len))
        return pred, stop_logits

    def compute_loss(self, pred_mel: Tensor, target: np.ndarray,
                     stop_logits: Tensor, target_lengths) -> Tensor:
        """MSE over valid mel frames plus BCE on the stop track, 1:1."""
        target = np.asarray(target, dtype=pred_mel.dtype)
        if target.ndim == 2:
            target = target[None]
        if tuple(target.shape) != tuple(pred_mel.shape):
            raise ShapeError(f"loss: prediction {pred_mel.shape} vs target {target.shape}")
        b, t_len, _ = target.shape
        lengths = np.asarray(target_lengths).reshape(b)
        mask = (np.arange(t_len)[None, :] < lengths[:, None]).astype(pred_mel.dtype)
        stop_targets = np.zeros((b, t_len), dtype=pred_mel.dtype)
        stop_targets[np.arange(b), lengths - 1] = 1.0
        mse = mse_masked(pred_mel, target, mask)
        bce = bce_logits_masked(stop_logits, stop_targets, mask)
        return add(mse, bce)

    # ------------------------------------------------------------- inference

    def synthesize(self, text: str, refs: list, max_frames: int | None = None,
                   stop_threshold: float = 0.5) -> SynthesisResult:
        """Autoregressive synthesis from reference spectrograms (float64, no tape)."""
        if not refs:
            raise AttentionError("synthesize needs at least one reference")
        ids = np.array(text_to_ids(text))
        l_t = len(ids)
        if max_frames is None:
            max_frames = self.hp.max_frames_factor * l_t
        if max_frames < 1:
            raise LengthError("max_frames must be at least 1")

        model = self.cast(np.float64)
        ref_arrays = [np.asarray(r.frames if isinstance(r, MelSpectrogram) else r,
                                 dtype=np.float64) for r in refs]
        with no_grad():
            e_g_vec = model.coarse.embed_multi(ref_arrays).vector
            e_g = Tensor(e_g_vec[None, :])
            text_enc = model.encode_text(ids[None], [l_t], e_g)
            lens = [a.shape[0] for a in ref_arrays]
            if min(lens) == 0:
                raise AttentionError("a reference spectrogram is empty")
            l_max = max(lens)
            packed = np.zeros((1, len(refs), l_max, self.hp.n_mels))
            for i, a in enumerate(ref_arrays):
                packed[0, i, :a.shape[0]] = a
            ref_enc = model.fine.encode(packed, np.array(lens)[None, :])

            h = Tensor(np.zeros((1, self.hp.d_dec)))
            c = Tensor(np.zeros((1, self.hp.d_dec)))
            prev = Tensor(np.zeros((1, self.hp.n_mels)))
            frames, stop_probs, t_rows, r_rows = [], [], [], []
            terminated_by = "frame_cap"
            for _ in range(max_frames):
                mel, stop_logit, h, c, t_w, r_w = model._step(
                    prev, h, c, text_enc, ref_enc, train=False)
                frames.append(mel.data[0])
                stop_probs.append(float(stable_sigmoid(stop_logit.data)[0, 0]))
                t_rows.append(t_w[0])
                r_rows.append(np.asarray(r_w[0]))
                prev = mel
                if stop_probs[-1] > stop_threshold:
                    terminated_by = "stop_token"
                    break
        return SynthesisResult(
            mel=MelSpectrogram(frames=np.stack(frames).astype(np.float32)),
            stop_probs=np.array(stop_probs),
            text_attention=np.stack(t_rows),
            ref_attention=np.stack(r_rows),
            terminated_by=terminated_by)
