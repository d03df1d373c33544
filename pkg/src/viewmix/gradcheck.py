"""Finite-difference validation of the reverse-mode gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UsageError
from .rng import Rng
from .tensor import Tape


@dataclass
class GradCheckReport:
    max_rel_error: float
    probes: int
    worst_param: str
    worst_coord: tuple
    worst_analytic: float
    worst_numeric: float

    def __str__(self):
        return (
            f"max rel error {self.max_rel_error:.3e} over {self.probes} probes; "
            f"worst {self.worst_param}{list(self.worst_coord)}: "
            f"analytic={self.worst_analytic:.9e} numeric={self.worst_numeric:.9e}"
        )


DEAD_COORD_TOL = 1e-9


def grad_check(fn, params, probes: int = 50, h: float = 1e-4, seed: int = 0) -> GradCheckReport:
    """Compare analytic gradients of `fn` against central differences.

    fn: zero-argument callable building a scalar loss Tensor from `params`
    (via ops.leaf) under the active tape. Requires f64 parameters; probed
    coordinates are spread round-robin across all parameters.

    Relative error per probe is |a - n| / max(|a|, |n|, 1e-8). Coordinates
    where both sides are below DEAD_COORD_TOL count as agreeing: central
    differences cannot resolve a derivative below ulp(loss)/2h, so that is
    the measurement floor for dead units (a wrongly-zero analytic gradient
    still surfaces, because its numeric side lands well above the floor).
    """
    params = list(params)
    for p in params:
        if p.value.dtype != np.float64:
            raise UsageError(f"grad_check requires f64 parameters ({p.name!r} is not)")
        p.zero_grad()

    with Tape() as tape:
        loss = fn()
    tape.backward(loss)
    analytic = {p.name: p.grad.copy() for p in params}
    for p in params:
        p.zero_grad()

    rng = Rng(seed, "gradcheck")
    report = GradCheckReport(0.0, probes, "", (), 0.0, 0.0)
    for i in range(probes):
        p = params[i % len(params)]
        flat = int(rng.integers(p.value.size)[0])
        coord = np.unravel_index(flat, p.value.shape)
        saved = p.value[coord]
        p.value[coord] = saved + h
        up = fn().item()
        p.value[coord] = saved - h
        down = fn().item()
        p.value[coord] = saved
        numeric = (up - down) / (2.0 * h)
        ana = float(analytic[p.name][coord])
        if abs(ana) < DEAD_COORD_TOL and abs(numeric) < DEAD_COORD_TOL:
            continue
        rel = abs(ana - numeric) / max(abs(ana), abs(numeric), 1e-8)
        if rel >= report.max_rel_error:
            report.max_rel_error = rel
            report.worst_param = p.name
            report.worst_coord = tuple(int(c) for c in coord)
            report.worst_analytic = ana
            report.worst_numeric = numeric
    return report
