"""LSTM kernels with hand-written backpropagation through time.

`lstm_seq` runs a whole (optionally reversed) sequence as a single tape node
so the recurrence does not blow up the tape; `lstm_cell` is the stepwise
variant the autoregressive decoder drives. Gate layout along the 4H axis is
input, forget, candidate, output. Padded steps are handled by carrying the
previous state through and zeroing the emitted frame, which makes outputs at
valid positions independent of how much padding follows.
"""

from dataclasses import dataclass

import numpy as np

from ..errors import LengthError, ShapeError
from .ops import concat, stable_sigmoid
from .tensor import Parameter, Tensor, accumulate, make_node


@dataclass
class LSTMWeights:
    """One direction: input map w [D,4H], recurrent map u [H,4H], bias b [4H]."""
    w: Parameter
    u: Parameter
    b: Parameter

    @property
    def hidden(self) -> int:
        return self.u.shape[0]


def init_lstm(name: str, d_in: int, hidden: int, rng: np.random.Generator,
              dtype=np.float32) -> LSTMWeights:
    """Xavier-uniform weights; forget-gate bias 1, other biases 0."""
    def xavier(fan_in, fan_out, shape):
        lim = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-lim, lim, size=shape).astype(dtype)

    b = np.zeros(4 * hidden, dtype=dtype)
    b[hidden:2 * hidden] = 1.0
    return LSTMWeights(
        w=Parameter(f"{name}.w", xavier(d_in, hidden, (d_in, 4 * hidden))),
        u=Parameter(f"{name}.u", xavier(hidden, hidden, (hidden, 4 * hidden))),
        b=Parameter(f"{name}.b", b),
    )


def _split_gates(a: np.ndarray, h: int):
    return (stable_sigmoid(a[:, :h]), stable_sigmoid(a[:, h:2 * h]),
            np.tanh(a[:, 2 * h:3 * h]), stable_sigmoid(a[:, 3 * h:]))


def lstm_seq(x: Tensor, weights: LSTMWeights, mask: np.ndarray | None = None,
             reverse: bool = False) -> Tensor:
    """Run an LSTM over [B, T, D] (or [T, D]) and return every hidden state.

    `mask` is [B, T] with True on valid frames; output rows at padded frames
    are zero and the state is carried untouched across them.
    """
    squeeze = x.ndim == 2
    xd = x.data[None] if squeeze else x.data
    bsz, t, d_in = xd.shape if xd.ndim == 3 else (None, 0, None)
    if xd.ndim != 3 or d_in != weights.w.shape[0]:
        raise ShapeError(f"lstm_seq: input {x.shape} incompatible with weights {weights.w.shape}")
    if t == 0:
        raise LengthError("lstm_seq: empty sequence")
    h = weights.hidden
    if mask is None:
        mk = np.ones((bsz, t), dtype=xd.dtype)
    else:
        mk = np.asarray(mask, dtype=xd.dtype)
        if squeeze and mk.ndim == 1:
            mk = mk[None]
        if mk.shape != (bsz, t):
            raise ShapeError(f"lstm_seq: mask {mk.shape} does not match input {x.shape}")
    if reverse:
        xd = xd[:, ::-1]
        mk = mk[:, ::-1]

    wd, ud, bd = weights.w.data, weights.u.data, weights.b.data
    xw = xd @ wd + bd                       # [B, T, 4H]
    gi = np.empty((t, bsz, h), dtype=xd.dtype)
    gf = np.empty_like(gi)
    gg = np.empty_like(gi)
    go = np.empty_like(gi)
    tc = np.empty_like(gi)                  # tanh of the candidate cell
    hs = np.zeros((t + 1, bsz, h), dtype=xd.dtype)   # carried states, index shifted by 1
    cs = np.zeros_like(hs)
    y = np.empty((bsz, t, h), dtype=xd.dtype)
    for step in range(t):
        a = xw[:, step] + hs[step] @ ud
        i, f, g, o = _split_gates(a, h)
        c_new = f * cs[step] + i * g
        tch = np.tanh(c_new)
        h_new = o * tch
        m = mk[:, step:step + 1]
        cs[step + 1] = m * c_new + (1.0 - m) * cs[step]
        hs[step + 1] = m * h_new + (1.0 - m) * hs[step]
        y[:, step] = m * h_new
        gi[step], gf[step], gg[step], go[step], tc[step] = i, f, g, o, tch
    out = y[:, ::-1] if reverse else y
    out = out[0] if squeeze else out

    def backward(grad):
        gd = grad[None] if squeeze else grad
        if reverse:
            gd = gd[:, ::-1]
        dw = np.zeros_like(wd)
        du = np.zeros_like(ud)
        db = np.zeros_like(bd)
        dx = np.empty_like(xd)
        dh = np.zeros((bsz, h), dtype=xd.dtype)
        dc = np.zeros_like(dh)
        for step in range(t - 1, -1, -1):
            m = mk[:, step:step + 1]
            dh_new = m * (gd[:, step] + dh)
            dc_new = m * dc
            i, f, g, o, tch = gi[step], gf[step], gg[step], go[step], tc[step]
            do = dh_new * tch
            dct = dh_new * o * (1.0 - tch * tch) + dc_new
            di = dct * g
            df = dct * cs[step]
            dg = dct * i
            da = np.concatenate([
                di * i * (1.0 - i),
                df * f * (1.0 - f),
                dg * (1.0 - g * g),
                do * o * (1.0 - o),
            ], axis=1)
            dw += xd[:, step].T @ da
            du += hs[step].T @ da
            db += da.sum(axis=0)
            dx[:, step] = da @ wd.T
            dh = da @ ud.T + (1.0 - m) * dh
            dc = dct * f + (1.0 - m) * dc
        if reverse:
            dx = dx[:, ::-1]
        accumulate(x, dx[0] if squeeze else dx)
        accumulate(weights.w, dw)
        accumulate(weights.u, du)
        accumulate(weights.b, db)

    return make_node(out, (x, weights.w, weights.u, weights.b), backward)


def bilstm(x: Tensor, fw: LSTMWeights, bw: LSTMWeights,
           mask: np.ndarray | None = None) -> Tensor:
    """Concat of a forward and a backward pass: [B,T,D] -> [B,T,2H]."""
    return concat([lstm_seq(x, fw, mask=mask),
                   lstm_seq(x, bw, mask=mask, reverse=True)], axis=-1)


def lstm_cell(x: Tensor, h_prev: Tensor, c_prev: Tensor,
              weights: LSTMWeights) -> Tensor:
    """One decoder step; returns [B, 2H] = concat(h_new, c_new)."""
    hdim = weights.hidden
    if x.shape[-1] != weights.w.shape[0]:
        raise ShapeError(f"lstm_cell: input {x.shape} incompatible with weights {weights.w.shape}")
    a = x.data @ weights.w.data + h_prev.data @ weights.u.data + weights.b.data
    i, f, g, o = _split_gates(a, hdim)
    c_new = f * c_prev.data + i * g
    tch = np.tanh(c_new)
    h_new = o * tch
    out = np.concatenate([h_new, c_new], axis=-1)

    def backward(grad):
        dh = grad[:, :hdim]
        dc_direct = grad[:, hdim:]
        do = dh * tch
        dct = dh * o * (1.0 - tch * tch) + dc_direct
        di = dct * g
        df = dct * c_prev.data
        dg = dct * i
        da = np.concatenate([
            di * i * (1.0 - i),
            df * f * (1.0 - f),
            dg * (1.0 - g * g),
            do * o * (1.0 - o),
        ], axis=1)
        accumulate(x, da @ weights.w.data.T)
        accumulate(h_prev, da @ weights.u.data.T)
        accumulate(c_prev, dct * f)
        accumulate(weights.w, x.data.T @ da)
        accumulate(weights.u, h_prev.data.T @ da)
        accumulate(weights.b, da.sum(axis=0))

    return make_node(out, (x, h_prev, c_prev, weights.w, weights.u, weights.b), backward)
