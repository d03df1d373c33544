"""Rule-based decision stage: detector-driven status selection, cross-view
consolidation, per-expert frame masking, unknown overrides, and the gated
fusion of per-view class distributions.

These functions operate on plain numpy values (inference side); the training
graph reproduces the fusion arithmetic with differentiable ops.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError

STATUS_CLASSES = ("blemished", "unblemished", "unknown")

CONFIDENCE_FLOOR = 0.5  # detections below this are discarded
EFFECTOR_RADIUS_PX = 40.0  # rule 2: held-onion proximity
MASK_DILATION_PX = 4  # erased boxes grow by this margin
DEFAULT_BASE_CONFIDENCE = 0.9


@dataclass(frozen=True)
class Detection:
    """One detector hit in one view."""

    label: str
    confidence: float
    bbox: tuple  # (x_min, y_min, x_max, y_max) in pixels
    view: int

    def __post_init__(self):
        x0, y0, x1, y1 = self.bbox
        if not (x0 < x1 and y0 < y1):
            raise ConfigurationError(f"degenerate bbox {self.bbox}")
        if not 0.0 <= self.confidence <= 1.0:
            raise ConfigurationError(f"confidence {self.confidence} outside [0,1]")

    @property
    def center(self):
        x0, y0, x1, y1 = self.bbox
        return ((x0 + x1) / 2.0, (y0 + y1) / 2.0)


def select_target_onion(detections, effector_px, conveyor_end_x) -> str:
    """Status of the onion currently under consideration in one view.

    Rules, in order: drop hits with confidence < 0.5 (none left => unknown);
    an onion within 40 px of the effector wins (highest confidence first);
    otherwise the onion closest to the conveyor end along x wins.
    """
    kept = [d for d in detections if d.confidence >= CONFIDENCE_FLOOR]
    if not kept:
        return "unknown"
    if effector_px is not None:
        near = [
            d
            for d in kept
            if math.dist(d.center, effector_px) < EFFECTOR_RADIUS_PX
        ]
        if near:
            return max(near, key=lambda d: d.confidence).label
    return min(kept, key=lambda d: abs(d.center[0] - conveyor_end_x)).label


def consolidate_status(per_view_status) -> str:
    """Merge per-view statuses: any blemish wins; all-unknown stays unknown."""
    statuses = list(per_view_status)
    if not statuses:
        raise ConfigurationError("consolidate_status of empty view list")
    if all(s == "unknown" for s in statuses):
        return "unknown"
    if any(s == "blemished" for s in statuses):
        return "blemished"
    return "unblemished"


def consolidate_status_majority(per_view_status) -> str:
    """Majority vote across views, used by the no-gating baseline.

    Unknown votes abstain; ties fall to unblemished.
    """
    statuses = [s for s in per_view_status if s != "unknown"]
    if not statuses:
        return "unknown"
    blemished = sum(1 for s in statuses if s == "blemished")
    return "blemished" if blemished * 2 > len(statuses) else "unblemished"


@dataclass
class ExpertMaskSet:
    """Per-expert copies of one frame, each with the other experts erased."""

    source: np.ndarray
    masked_frames: list = field(default_factory=list)
    retained: dict = field(default_factory=dict)  # expert slot -> Detection

    @property
    def empty(self) -> bool:
        return not self.masked_frames


def erase_boxes(frame: np.ndarray, boxes, dilation: int = MASK_DILATION_PX) -> np.ndarray:
    """Copy of frame with each (dilated) box zero-filled across all channels."""
    out = frame.copy()
    H, W = frame.shape[:2]
    for x0, y0, x1, y1 in boxes:
        xa = max(0, int(math.floor(x0)) - dilation)
        ya = max(0, int(math.floor(y0)) - dilation)
        xb = min(W, int(math.ceil(x1)) + dilation)
        yb = min(H, int(math.ceil(y1)) + dilation)
        out[ya:yb, xa:xb, :] = 0.0
    return out


def mask_split(frame: np.ndarray, expert_detections) -> ExpertMaskSet:
    """One masked frame per detected expert; an empty set signals the
    unknown override downstream."""
    dets = list(expert_detections)
    out = ExpertMaskSet(source=frame)
    for i, keep in enumerate(dets):
        others = [d.bbox for j, d in enumerate(dets) if j != i]
        out.masked_frames.append(erase_boxes(frame, others) if others else frame.copy())
        out.retained[i] = keep
    return out


def fuse(gating: np.ndarray, dists) -> tuple:
    """Eq-style fusion: convex combination of per-view distributions.

    Returns (fused distribution, argmax label with lowest-index ties).
    """
    gating = np.asarray(gating, dtype=np.float64)
    dists = [np.asarray(d, dtype=np.float64) for d in dists]
    if len(dists) != gating.shape[0]:
        raise ConfigurationError(
            f"{len(dists)} distributions for {gating.shape[0]} gating weights"
        )
    if abs(gating.sum() - 1.0) > 1e-6 or (gating < 0).any():
        raise ConfigurationError("gating weights must be a probability vector")
    for d in dists:
        if abs(d.sum() - 1.0) > 1e-5:
            raise ConfigurationError("class distribution does not sum to 1")
    fused = np.zeros_like(dists[0])
    for g, d in zip(gating, dists):
        fused += g * d
    return fused, int(np.argmax(fused))


def unknown_override(prediction, detections):
    """Force every head to the unknown class when no expert was detected.

    `prediction` is a FusedPrediction from the patrolling pipeline; heads
    keep their distributions but labels move to the final (unknown) index.
    """
    if list(detections):
        return prediction
    return prediction.with_unknown_labels()
