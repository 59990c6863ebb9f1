"""Adam with classic (coupled) L2 weight decay added to the gradient."""

from dataclasses import dataclass, field

import numpy as np

from ..errors import OptimizerError, ShapeError
from .tensor import Parameter


@dataclass
class AdamHyper:
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    weight_decay: float = 1e-6


@dataclass
class AdamState:
    """Per-parameter first/second moments plus the shared step counter."""
    first_moment: dict = field(default_factory=dict)
    second_moment: dict = field(default_factory=dict)
    step_count: int = 0
    hyper: AdamHyper = field(default_factory=AdamHyper)

    def ensure(self, param: Parameter):
        if param.name not in self.first_moment:
            self.first_moment[param.name] = np.zeros_like(param.data)
            self.second_moment[param.name] = np.zeros_like(param.data)


def adam_step(params: list[Parameter], state: AdamState, learning_rate: float):
    """One in-place Adam update; parameters with a None gradient are skipped."""
    hp = state.hyper
    state.step_count += 1
    t = state.step_count
    bias1 = 1.0 - hp.beta1 ** t
    bias2 = 1.0 - hp.beta2 ** t
    for p in params:
        if p.grad is None:
            continue
        if p.grad.shape != p.data.shape:
            raise ShapeError(f"adam: gradient shape {p.grad.shape} != parameter "
                             f"{p.name} shape {p.data.shape}")
        if not np.all(np.isfinite(p.grad)):
            raise OptimizerError(f"non-finite gradient for parameter {p.name!r}")
        state.ensure(p)
        g = p.grad
        if hp.weight_decay:
            g = g + hp.weight_decay * p.data
        m = state.first_moment[p.name]
        v = state.second_moment[p.name]
        m *= hp.beta1
        m += (1.0 - hp.beta1) * g
        v *= hp.beta2
        v += (1.0 - hp.beta2) * (g * g)
        m_hat = m / bias1
        v_hat = v / bias2
        p.data -= learning_rate * m_hat / (np.sqrt(v_hat) + hp.epsilon)


class Adam:
    """Stateful wrapper around adam_step for a fixed parameter list."""

    def __init__(self, params: list[Parameter], hyper: AdamHyper | None = None):
        self.params = list(params)
        self.state = AdamState(hyper=hyper or AdamHyper())

    def step(self, learning_rate: float):
        adam_step(self.params, self.state, learning_rate)

    def zero_grad(self):
        for p in self.params:
            p.grad = None
