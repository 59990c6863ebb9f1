"""Differentiable primitives: affine maps, 1-D convolution, masked softmax,
attention contractions, reductions and the two training losses.

Shapes follow a batch-first convention; most ops also accept the unbatched
rank documented on the function. Masks and targets are plain numpy arrays,
not tape nodes.
"""

import numpy as np

from ..errors import AttentionError, ConfigError, LengthError, ShapeError
from .tensor import Tensor, accumulate, make_node


def stable_sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """y = x @ w (+ b) over the trailing axis of x."""
    if x.shape[-1] != w.shape[0]:
        raise ShapeError(f"linear: input shape {x.shape} incompatible with weight {w.shape}")
    y = x.data @ w.data
    if b is not None:
        if b.shape != (w.shape[1],):
            raise ShapeError(f"linear: bias shape {b.shape} does not match weight {w.shape}")
        y = y + b.data

    def backward(g):
        accumulate(x, g @ w.data.T)
        xf = x.data.reshape(-1, x.shape[-1])
        gf = g.reshape(-1, w.shape[1])
        accumulate(w, xf.T @ gf)
        if b is not None:
            accumulate(b, gf.sum(axis=0))

    parents = (x, w) if b is None else (x, w, b)
    return make_node(y, parents, backward)


def conv1d(x: Tensor, kernels: Tensor, b: Tensor | None = None) -> Tensor:
    """Same-padded stride-1 convolution along time.

    x: [T, C_in] or [B, T, C_in]; kernels: [k, C_in, C_out] with odd k.
    """
    k, c_in, c_out = kernels.shape
    if k % 2 == 0:
        raise ConfigError(f"conv1d needs an odd kernel size, got {k}")
    squeeze = x.ndim == 2
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 3 or xd.shape[2] != c_in:
        raise ShapeError(f"conv1d: input shape {x.shape} incompatible with kernels {kernels.shape}")
    bsz, t, _ = xd.shape
    if t < 1:
        raise LengthError("conv1d: empty time axis")
    pad = k // 2
    xp = np.pad(xd, ((0, 0), (pad, pad), (0, 0)))
    # windows: [B, T, k, C_in] -> [B, T, k*C_in]
    win = np.lib.stride_tricks.sliding_window_view(xp, k, axis=1)
    win = np.ascontiguousarray(win.transpose(0, 1, 3, 2)).reshape(bsz, t, k * c_in)
    kmat = kernels.data.reshape(k * c_in, c_out)
    y = win @ kmat
    if b is not None:
        y = y + b.data
    if squeeze:
        y = y[0]

    def backward(g):
        gd = g[None] if squeeze else g
        gw = gd @ kmat.T                      # [B, T, k*C_in]
        gw = gw.reshape(bsz, t, k, c_in)
        dxp = np.zeros_like(xp)
        for j in range(k):
            dxp[:, j:j + t] += gw[:, :, j, :]
        dx = dxp[:, pad:pad + t]
        accumulate(x, dx[0] if squeeze else dx)
        dk = win.reshape(-1, k * c_in).T @ gd.reshape(-1, c_out)
        accumulate(kernels, dk.reshape(k, c_in, c_out))
        if b is not None:
            accumulate(b, gd.reshape(-1, c_out).sum(axis=0))

    parents = (x, kernels) if b is None else (x, kernels, b)
    return make_node(y, parents, backward)


def concat(tensors, axis: int = -1) -> Tensor:
    ts = list(tensors)
    y = np.concatenate([t.data for t in ts], axis=axis)
    sizes = [t.shape[axis] for t in ts]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        for t, piece in zip(ts, np.split(g, splits, axis=axis)):
            accumulate(t, piece)

    return make_node(y, tuple(ts), backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"add: shapes {a.shape} and {b.shape} differ")
    def backward(g):
        accumulate(a, g)
        accumulate(b, g)
    return make_node(a.data + b.data, (a, b), backward)


def scale(x: Tensor, c: float) -> Tensor:
    def backward(g):
        accumulate(x, g * c)
    return make_node(x.data * c, (x,), backward)


def relu(x: Tensor) -> Tensor:
    m = x.data > 0
    def backward(g):
        accumulate(x, g * m)
    return make_node(x.data * m, (x,), backward)


def sigmoid(x: Tensor) -> Tensor:
    s = stable_sigmoid(x.data)
    def backward(g):
        accumulate(x, g * s * (1.0 - s))
    return make_node(s, (x,), backward)


def tanh(x: Tensor) -> Tensor:
    t = np.tanh(x.data)
    def backward(g):
        accumulate(x, g * (1.0 - t * t))
    return make_node(t, (x,), backward)


def dropout(x: Tensor, p: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; the caller decides whether training is active."""
    if not 0.0 <= p < 1.0:
        raise ConfigError(f"dropout rate must be in [0,1), got {p}")
    keep = (rng.random(x.shape) >= p).astype(x.dtype) / (1.0 - p)
    def backward(g):
        accumulate(x, g * keep)
    return make_node(x.data * keep, (x,), backward)


def fixed_mask_mul(x: Tensor, mask: np.ndarray) -> Tensor:
    """Elementwise multiply by a constant mask (dropout with a frozen mask)."""
    def backward(g):
        accumulate(x, g * mask)
    return make_node(x.data * mask, (x,), backward)


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    ids = np.asarray(ids)
    y = table.data[ids]

    def backward(g):
        if table.needs_grad():
            if table.grad is None:
                table.grad = np.zeros_like(table.data)
            np.add.at(table.grad, ids, g)

    return make_node(y, (table,), backward)


def masked_softmax(logits: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """Softmax over the last axis; masked positions get exactly zero mass.

    Raises AttentionError when a row has no unmasked position.
    """
    z = logits.data
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != z.shape:
            raise ShapeError(f"masked_softmax: mask shape {mask.shape} != logits shape {z.shape}")
        if not mask.any(axis=-1).all():
            raise AttentionError("masked_softmax: a row has every position masked")
        z = np.where(mask, z, -np.inf)
    elif z.shape[-1] == 0:
        raise AttentionError("masked_softmax: empty logits")
    zmax = z.max(axis=-1, keepdims=True)
    e = np.exp(z - zmax)
    if mask is not None:
        e = np.where(mask, e, 0.0)
    p = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        inner = (g * p).sum(axis=-1, keepdims=True)
        accumulate(logits, p * (g - inner))

    return make_node(p, (logits,), backward)


def qk_scores(q: Tensor, keys: Tensor) -> Tensor:
    """Dot products of one query per batch item against its key rows.

    q: [B, d], keys: [B, n, d] -> [B, n].
    """
    if q.shape[-1] != keys.shape[-1] or q.shape[0] != keys.shape[0]:
        raise ShapeError(f"qk_scores: query {q.shape} incompatible with keys {keys.shape}")
    s = np.einsum("bd,bnd->bn", q.data, keys.data)

    def backward(g):
        accumulate(q, np.einsum("bn,bnd->bd", g, keys.data))
        accumulate(keys, np.einsum("bn,bd->bnd", g, q.data))

    return make_node(s, (q, keys), backward)


def attn_mix(probs: Tensor, values: Tensor) -> Tensor:
    """Convex mix of value rows: probs [B, n] x values [B, n, d] -> [B, d]."""
    if probs.shape != values.shape[:2]:
        raise ShapeError(f"attn_mix: probs {probs.shape} incompatible with values {values.shape}")
    y = np.einsum("bn,bnd->bd", probs.data, values.data)

    def backward(g):
        accumulate(probs, np.einsum("bd,bnd->bn", g, values.data))
        accumulate(values, np.einsum("bn,bd->bnd", probs.data, g))

    return make_node(y, (probs, values), backward)


def reshape(x: Tensor, shape) -> Tensor:
    orig = x.shape
    def backward(g):
        accumulate(x, g.reshape(orig))
    return make_node(x.data.reshape(shape), (x,), backward)


def narrow(x: Tensor, axis: int, start: int, length: int) -> Tensor:
    idx = [slice(None)] * x.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)

    def backward(g):
        if x.needs_grad():
            if x.grad is None:
                x.grad = np.zeros_like(x.data)
            x.grad[idx] += g

    return make_node(x.data[idx], (x,), backward)


def broadcast_concat_rows(x: Tensor, v: Tensor) -> Tensor:
    """Append one vector per batch item to every row: [B,T,D1] + [B,D2] -> [B,T,D1+D2]."""
    bsz, t, _ = x.shape
    tiled = np.broadcast_to(v.data[:, None, :], (bsz, t, v.shape[-1]))
    y = np.concatenate([x.data, tiled], axis=-1)
    d1 = x.shape[-1]

    def backward(g):
        accumulate(x, g[..., :d1])
        accumulate(v, g[..., d1:].sum(axis=1))

    return make_node(y, (x, v), backward)


def masked_mean_time(x: Tensor, mask: np.ndarray) -> Tensor:
    """Mean over the time axis counting only unmasked frames: [B,T,D] -> [B,D]."""
    m = np.asarray(mask, dtype=x.dtype)
    if m.shape != x.shape[:2]:
        raise ShapeError(f"masked_mean_time: mask {m.shape} incompatible with {x.shape}")
    counts = m.sum(axis=1)
    if (counts == 0).any():
        raise LengthError("masked_mean_time: an item has no valid frames")
    w = m / counts[:, None]
    y = np.einsum("btd,bt->bd", x.data, w)

    def backward(g):
        accumulate(x, g[:, None, :] * w[:, :, None])

    return make_node(y, (x,), backward)


def weighted_sum(x: Tensor, w: np.ndarray) -> Tensor:
    """Scalar readout sum(x * w) for gradient checks."""
    w = np.asarray(w, dtype=x.dtype)
    if w.shape != x.shape:
        raise ShapeError(f"weighted_sum: weights {w.shape} != input {x.shape}")
    def backward(g):
        accumulate(x, g * w)
    return make_node(np.asarray((x.data * w).sum()), (x,), backward)


def mse_masked(pred: Tensor, target: np.ndarray, frame_mask: np.ndarray | None = None) -> Tensor:
    """Mean squared error over valid frames; target/mask are constants."""
    target = np.asarray(target, dtype=pred.dtype)
    if target.shape != pred.shape:
        raise ShapeError(f"mse_masked: target {target.shape} != prediction {pred.shape}")
    diff = pred.data - target
    if frame_mask is None:
        denom = float(diff.size)
        loss = (diff * diff).sum() / denom
        scaled = None
    else:
        m = np.asarray(frame_mask, dtype=pred.dtype)
        denom = float(m.sum()) * pred.shape[-1]
        if denom == 0:
            raise LengthError("mse_masked: mask selects no frames")
        scaled = m[..., None]
        loss = (diff * diff * scaled).sum() / denom

    def backward(g):
        d = 2.0 * diff / denom
        if scaled is not None:
            d = d * scaled
        accumulate(pred, g * d)

    return make_node(np.asarray(loss), (pred,), backward)


def bce_logits_masked(logits: Tensor, target: np.ndarray, mask: np.ndarray | None = None) -> Tensor:
    """Numerically stable binary cross-entropy on logits, averaged over valid entries."""
    y = np.asarray(target, dtype=logits.dtype)
    if y.shape != logits.shape:
        raise ShapeError(f"bce: target {y.shape} != logits {logits.shape}")
    z = logits.data
    per = np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))
    if mask is None:
        cnt = float(per.size)
        loss = per.sum() / cnt
        m = None
    else:
        m = np.asarray(mask, dtype=logits.dtype)
        cnt = float(m.sum())
        if cnt == 0:
            raise LengthError("bce: mask selects no entries")
        loss = (per * m).sum() / cnt

    def backward(g):
        d = (stable_sigmoid(z) - y) / cnt
        if m is not None:
            d = d * m
        accumulate(logits, g * d)

    return make_node(np.asarray(loss), (logits,), backward)
