"""Dense tensors, trainable parameters, and the reverse-mode tape.

Tensors are thin wrappers over row-major numpy arrays in f32 or f64.
Differentiable operations (see `ops`) record a backward closure on the
active `Tape`; `Tape.backward` replays the closures in reverse creation
order, which is a valid topological order because an op's inputs always
exist before its output.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError, UsageError

DTYPES = {"f32": np.float32, "f64": np.float64}
DTYPE_NAMES = {np.dtype(np.float32): "f32", np.dtype(np.float64): "f64"}

_ACTIVE_TAPE = None


def active_tape():
    return _ACTIVE_TAPE


class Tensor:
    """A dense row-major array plus an accumulated gradient slot."""

    __slots__ = ("data", "grad")

    def __init__(self, data, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(DTYPES[dtype] if isinstance(dtype, str) else dtype, copy=False)
        if arr.dtype not in DTYPE_NAMES:
            arr = arr.astype(np.float32)
        if 0 in arr.shape:
            raise ConfigurationError(f"zero-extent tensor shape {arr.shape}")
        self.data = np.ascontiguousarray(arr)
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self) -> str:
        return DTYPE_NAMES[self.data.dtype]

    @property
    def size(self) -> int:
        return self.data.size

    def add_grad(self, g: np.ndarray):
        """Accumulate into the grad slot. Takes ownership of fresh arrays."""
        if self.grad is None:
            self.grad = g
        else:
            self.grad += g

    def item(self) -> float:
        if self.data.size != 1:
            raise UsageError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self):
        return f"Tensor(shape={tuple(self.shape)}, dtype={self.dtype})"


class Parameter:
    """A trainable weight: value plus gradient and Adam moment buffers."""

    __slots__ = ("name", "value", "grad", "adam_m", "adam_v", "step_count")

    def __init__(self, value: np.ndarray, name: str = ""):
        self.name = name
        self.value = np.ascontiguousarray(value)
        self.grad = np.zeros_like(self.value)
        self.adam_m = np.zeros_like(self.value)
        self.adam_v = np.zeros_like(self.value)
        self.step_count = 0

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self):
        self.grad[...] = 0.0

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={tuple(self.value.shape)})"


class Tape:
    """Ordered record of differentiable ops for one forward pass.

    Usage:
        with Tape() as tape:
            t = tape.watch(param)
            loss = ...ops...
        tape.backward(loss)
    """

    def __init__(self):
        self._records = []  # (output Tensor, backward closure)
        self._watched = []  # (Parameter, leaf Tensor)
        self._consumed = False

    def __enter__(self):
        global _ACTIVE_TAPE
        if _ACTIVE_TAPE is not None:
            raise UsageError("a tape is already active; nested tapes are not supported")
        _ACTIVE_TAPE = self
        return self

    def __exit__(self, *exc):
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = None
        return False

    def record(self, out: Tensor, backward_fn):
        self._records.append((out, backward_fn))

    def watch(self, param: Parameter) -> Tensor:
        """Expose a parameter as a leaf tensor of this tape."""
        t = Tensor.__new__(Tensor)
        t.data = param.value
        t.grad = None
        self._watched.append((param, t))
        return t

    def backward(self, loss: Tensor):
        """Populate grads of every watched parameter reachable from `loss`."""
        if self._consumed:
            raise UsageError("backward called twice on a consumed tape")
        if loss.data.size != 1:
            raise UsageError(f"backward requires a scalar loss, got shape {loss.shape}")
        self._consumed = True
        loss.grad = np.ones_like(loss.data)
        for out, fn in reversed(self._records):
            if out.grad is not None:
                fn(out.grad)
        for param, leaf in self._watched:
            if leaf.grad is not None:
                param.grad += leaf.grad
        self._records.clear()
