"""Independent brute-force reference implementations used by the tests.

These are written for clarity, not speed: plain nested loops over the
written definitions. They must stay independent of the library code they
check.
"""

import math

import numpy as np


def same_pad_amounts(size, k, s):
    out = math.ceil(size / s)
    total = max((out - 1) * s + k - size, 0)
    return out, total // 2


def conv2d_loops(x, kernel, bias, stride):
    """Triple-loop SAME cross-correlation. x [H,W,C], kernel [kh,kw,C,F]."""
    H, W, C = x.shape
    kh, kw, _, F = kernel.shape
    sh, sw = stride
    OH, pt = same_pad_amounts(H, kh, sh)
    OW, pl = same_pad_amounts(W, kw, sw)
    y = np.zeros((OH, OW, F), dtype=np.float64)
    for oh in range(OH):
        for ow in range(OW):
            for f in range(F):
                acc = 0.0
                for dh in range(kh):
                    for dw in range(kw):
                        ih = oh * sh + dh - pt
                        iw = ow * sw + dw - pl
                        if 0 <= ih < H and 0 <= iw < W:
                            for c in range(C):
                                acc += float(x[ih, iw, c]) * float(kernel[dh, dw, c, f])
                y[oh, ow, f] = acc + float(bias[f])
    return y


def maxpool2d_loops(x, window, stride):
    """Window max with -inf padding. x [H,W,C]."""
    H, W, C = x.shape
    kh, kw = window
    sh, sw = stride
    OH, pt = same_pad_amounts(H, kh, sh)
    OW, pl = same_pad_amounts(W, kw, sw)
    y = np.full((OH, OW, C), -np.inf, dtype=np.float64)
    for oh in range(OH):
        for ow in range(OW):
            for c in range(C):
                for dh in range(kh):
                    for dw in range(kw):
                        ih = oh * sh + dh - pt
                        iw = ow * sw + dw - pl
                        if 0 <= ih < H and 0 <= iw < W:
                            y[oh, ow, c] = max(y[oh, ow, c], float(x[ih, iw, c]))
    return y


def maxpool2d_argmax_loops(x, window, stride):
    """Row-major-first argmax (dh*kw+dw) per output position. x [H,W,C]."""
    H, W, C = x.shape
    kh, kw = window
    sh, sw = stride
    OH, pt = same_pad_amounts(H, kh, sh)
    OW, pl = same_pad_amounts(W, kw, sw)
    idx = np.zeros((OH, OW, C), dtype=np.int64)
    for oh in range(OH):
        for ow in range(OW):
            for c in range(C):
                best = -np.inf
                besti = 0
                for dh in range(kh):
                    for dw in range(kw):
                        ih = oh * sh + dh - pt
                        iw = ow * sw + dw - pl
                        if 0 <= ih < H and 0 <= iw < W:
                            v = float(x[ih, iw, c])
                            if v > best:
                                best = v
                                besti = dh * kw + dw
                idx[oh, ow, c] = besti
    return idx


def central_difference(f, x0, h=1e-6):
    """d f / d x at x0 for scalar-to-scalar f."""
    return (f(x0 + h) - f(x0 - h)) / (2.0 * h)


def select_target_onion_rules(detections, effector_px, conveyor_end_x):
    """Literal restatement of the three detector decision rules.

    detections: list of (label, confidence, (x0, y0, x1, y1)).
    """
    kept = [d for d in detections if d[1] >= 0.5]
    if not kept:
        return "unknown"
    near = []
    for label, conf, (x0, y0, x1, y1) in kept:
        cx, cy = (x0 + x1) / 2.0, (y0 + y1) / 2.0
        dist = math.hypot(cx - effector_px[0], cy - effector_px[1])
        if dist < 40.0:
            near.append((conf, label))
    if near:
        near.sort(key=lambda p: -p[0])
        return near[0][1]
    scored = []
    for label, conf, (x0, y0, x1, y1) in kept:
        cx = (x0 + x1) / 2.0
        scored.append((abs(cx - conveyor_end_x), label))
    scored.sort(key=lambda p: p[0])
    return scored[0][1]


def consolidate_status_rules(statuses):
    if all(s == "unknown" for s in statuses):
        return "unknown"
    if any(s == "blemished" for s in statuses):
        return "blemished"
    return "unblemished"
