"""Robustness corruptions: seeded noise, overexposure, view dropout.

Corruptions target the RGB channels of specific views (depth untouched) and
are seeded per (episode, step, view), so a corrupted stream is identical no
matter what order frames are visited in. The auxiliary detector degrades on
corrupted views too: confidences drop below the 0.5 keep-threshold, the
synthetic analog of a detector failing on distorted input.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..decision import Detection
from ..errors import ConfigurationError
from ..rng import Rng

KINDS = ("gaussian_noise", "overexposure", "view_dropout")


@dataclass(frozen=True)
class CorruptionSpec:
    kind: str
    views: tuple
    sigma: float = 0.0  # gaussian_noise
    gain: float = 1.0  # overexposure
    seed: int = 0
    degrade_detector: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown corruption kind {self.kind!r}")
        if self.sigma < 0:
            raise ConfigurationError("sigma must be >= 0")
        if self.gain < 1:
            raise ConfigurationError("gain must be >= 1")

    def targets(self, view: int) -> bool:
        return view in self.views

    def to_dict(self):
        return {
            "kind": self.kind,
            "views": list(self.views),
            "sigma": self.sigma,
            "gain": self.gain,
            "seed": self.seed,
            "degrade_detector": self.degrade_detector,
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["views"] = tuple(d["views"])
        return cls(**d)

    @classmethod
    def parse(cls, text: str, seed: int = 0) -> "CorruptionSpec":
        """Parse CLI syntax like "noise:view=0,sigma=0.1" or
        "overexposure:view=1,gain=3" or "dropout:view=2"."""
        kind, _, rest = text.partition(":")
        alias = {"noise": "gaussian_noise", "dropout": "view_dropout"}
        kind = alias.get(kind, kind)
        kv = {}
        for part in filter(None, rest.split(",")):
            k, _, v = part.partition("=")
            kv[k.strip()] = v.strip()
        views = tuple(int(v) for v in kv.get("view", "0").split("+"))
        return cls(
            kind=kind,
            views=views,
            sigma=float(kv.get("sigma", 0.1)),
            gain=float(kv.get("gain", 3.0)),
            seed=seed,
        )


def corrupt(frame: np.ndarray, spec: CorruptionSpec, rng: Rng) -> np.ndarray:
    """Apply one corruption to one frame's RGB channels, clamped to [0,1]."""
    out = frame.copy()
    rgb = out[..., :3]
    if spec.kind == "gaussian_noise":
        if spec.sigma > 0:
            noise = rng.normal(rgb.size, spec.sigma).reshape(rgb.shape)
            rgb += noise.astype(rgb.dtype)
    elif spec.kind == "overexposure":
        rgb *= spec.gain
    elif spec.kind == "view_dropout":
        out[...] = 0.0
        return out
    np.clip(rgb, 0.0, 1.0, out=rgb)
    return out


def frame_rng(spec: CorruptionSpec, episode: int, t: int, view: int) -> Rng:
    return Rng(spec.seed, f"corrupt/ep{episode}/t{t}/v{view}")


def degrade_detections(dets, rng: Rng):
    """Replace confidences with sub-threshold draws (detector fails here)."""
    out = []
    for d in dets:
        conf = float(np.clip(0.05 + 0.40 * rng.uniform(1)[0], 0.0, 1.0))
        out.append(Detection(d.label, conf, d.bbox, d.view))
    return out


@dataclass
class StreamCorruptor:
    """Applies a corruption spec on the fly while samples are materialized."""

    spec: CorruptionSpec | None

    def frame(self, arr: np.ndarray, episode: int, t: int, view: int) -> np.ndarray:
        if self.spec is None or not self.spec.targets(view):
            return arr
        return corrupt(arr, self.spec, frame_rng(self.spec, episode, t, view))

    def detections(self, dets, episode: int, t: int, view: int):
        if (
            self.spec is None
            or not self.spec.targets(view)
            or not self.spec.degrade_detector
        ):
            return dets
        rng = frame_rng(self.spec, episode, t, view).child("det")
        return degrade_detections(dets, rng)
