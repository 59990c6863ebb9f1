"""Reverse-mode autodiff tape over dense numpy arrays.

Every differentiable operation builds a node whose backward closure
scatters the output gradient into its parents. Gradients are plain
numpy arrays accumulated in place, so one model instance must not be
driven from several threads at once; distinct instances are fine.
"""

import contextvars

import numpy as np

from ..errors import ShapeError

_GRAD_ENABLED = contextvars.ContextVar("attentron_grad_enabled", default=True)


def grad_enabled() -> bool:
    return _GRAD_ENABLED.get()


class no_grad:
    """Context manager: ops executed inside return leaf tensors (no tape)."""

    def __enter__(self):
        self._token = _GRAD_ENABLED.set(False)
        return self

    def __exit__(self, *exc):
        _GRAD_ENABLED.reset(self._token)
        return False


class Tensor:
    """Dense n-dimensional float array, optionally carrying a gradient."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float32)
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self):
        return self.data.ndim

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype})"

    def needs_grad(self) -> bool:
        return self.requires_grad or bool(self._parents)

    def zero_grad(self):
        self.grad = None

    def item(self) -> float:
        return float(self.data)

    def backward(self):
        """Backpropagate from a scalar through the recorded tape."""
        if self.data.size != 1:
            raise ShapeError(f"backward() needs a scalar, got shape {self.data.shape}")
        topo = []
        seen = {id(self)}
        stack = [(self, False)]
        while stack:
            node, emit = stack.pop()
            if emit:
                topo.append(node)
                continue
            stack.append((node, True))
            for p in node._parents:
                if p._backward is not None and id(p) not in seen:
                    seen.add(id(p))
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node.grad is not None:
                node._backward(node.grad)


class Parameter(Tensor):
    """Trainable tensor with a checkpoint-stable name."""

    __slots__ = ("name",)

    def __init__(self, name: str, data, dtype=None):
        super().__init__(data, requires_grad=True, dtype=dtype)
        self.name = name

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.data.shape})"


def make_node(data, parents, backward) -> Tensor:
    """Wrap op output; record the tape edge only when a parent is live."""
    out = Tensor(data)
    if grad_enabled() and any(p.needs_grad() for p in parents):
        out._parents = tuple(parents)
        out._backward = backward
    return out


def accumulate(t: Tensor, g):
    """Add `g` into t.grad unless t is a dead leaf."""
    if t.needs_grad():
        if t.grad is None:
            t.grad = np.zeros_like(t.data)
        t.grad += g


def as_tensor(x, dtype=None) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x, dtype=dtype)
