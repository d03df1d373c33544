"""Adam optimizer over Parameter objects."""

from __future__ import annotations

import numpy as np

from .errors import NumericsError
from .tensor import Parameter

ADAM_DEFAULTS = {"lr": 1e-3, "beta1": 0.9, "beta2": 0.999, "eps": 1e-8}


def adam_step(params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update; grads are zeroed afterwards."""
    for p in params:
        g = p.grad
        if not np.isfinite(g).all():
            raise NumericsError(f"non-finite gradient in parameter {p.name!r}")
        p.step_count += 1
        t = p.step_count
        p.adam_m *= beta1
        p.adam_m += (1.0 - beta1) * g
        p.adam_v *= beta2
        p.adam_v += (1.0 - beta2) * np.square(g)
        mhat = p.adam_m / (1.0 - beta1**t)
        vhat = p.adam_v / (1.0 - beta2**t)
        p.value -= lr * mhat / (np.sqrt(vhat) + eps)
        p.zero_grad()
