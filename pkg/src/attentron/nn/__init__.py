"""Differentiable numeric kernels: tape, primitives, LSTM, Adam, grad checker."""

from .adam import Adam, AdamHyper, AdamState, adam_step
from .gradcheck import grad_check
from .lstm import LSTMWeights, bilstm, init_lstm, lstm_cell, lstm_seq
from .ops import (add, attn_mix, bce_logits_masked, broadcast_concat_rows,
                  concat, conv1d, dropout, embedding, fixed_mask_mul, linear,
                  masked_mean_time, masked_softmax, mse_masked, narrow,
                  qk_scores, relu, reshape, scale, sigmoid, tanh, weighted_sum)
from .tensor import Parameter, Tensor, as_tensor, grad_enabled, no_grad

__all__ = [
    "Adam", "AdamHyper", "AdamState", "adam_step", "grad_check",
    "LSTMWeights", "bilstm", "init_lstm", "lstm_cell", "lstm_seq",
    "add", "attn_mix", "bce_logits_masked", "broadcast_concat_rows", "concat",
    "conv1d", "dropout", "embedding", "fixed_mask_mul", "linear",
    "masked_mean_time", "masked_softmax", "mse_masked", "narrow", "qk_scores",
    "relu", "reshape", "scale", "sigmoid", "tanh", "weighted_sum",
    "Parameter", "Tensor", "as_tensor", "grad_enabled", "no_grad",
]
