"""Central finite-difference gradient checker.

The loss function must rebuild its graph from the given leaf tensors on
every call and be deterministic (fix any dropout masks). Run at float64:
float32 has too little headroom for eps=1e-5.
"""

import numpy as np

from .tensor import Tensor, no_grad


def grad_check(scalar_loss_fn, inputs: list[Tensor], eps: float = 1e-5) -> float:
    """Max relative error between analytic and numeric gradients over all inputs."""
    for t in inputs:
        t.grad = None
    loss = scalar_loss_fn()
    loss.backward()
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy()
                for t in inputs]
    worst = 0.0
    with no_grad():
        for t, ana in zip(inputs, analytic):
            flat = t.data.reshape(-1)
            aflat = ana.reshape(-1)
            for idx in range(flat.size):
                orig = flat[idx]
                flat[idx] = orig + eps
                up = float(scalar_loss_fn().data)
                flat[idx] = orig - eps
                down = float(scalar_loss_fn().data)
                flat[idx] = orig
                numeric = (up - down) / (2.0 * eps)
                err = abs(aflat[idx] - numeric) / max(abs(aflat[idx]), abs(numeric), 1e-8)
                if err > worst:
                    worst = err
    return worst
