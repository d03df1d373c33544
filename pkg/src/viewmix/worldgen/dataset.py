"""Dataset generation, serialization, and loading.

Directory layout:
    manifest.json                     domain, views, schema, fps, episodes
    ep{K}_view{V}.mvst                frames [T, H, W, 4] (tensor format)
    ep{K}_labels.jsonl                one JSON object per time step

Generation is reproducible: (seed, config) determines every byte. Episodes
derive child seeds, so they could be produced in any order or in parallel.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..decision import Detection
from ..errors import ConfigurationError
from ..rng import Rng
from ..tensorio import read_tensor, write_tensor
from .corrupt import CorruptionSpec, StreamCorruptor
from .patrol import patrol_views, render_patrol, script_patrol_episode
from .sorting import render_sorting, script_sorting_episode, sorting_views

FORMAT_VERSION = 1
FPS = 10


@dataclass
class Episode:
    episode_id: int
    views: list  # per view [T, H, W, 4] float32
    steps: list  # per time step: the labels.jsonl record (dict)

    @property
    def length(self):
        return len(self.steps)

    def detections(self, view: int, t: int):
        out = []
        for d in self.steps[t]["detections"].get(str(view), []):
            out.append(Detection(d["label"], d["confidence"], tuple(d["bbox"]), d["view"]))
        return out

    def detection_owners(self, view: int, t: int):
        return [d.get("object") for d in self.steps[t]["detections"].get(str(view), [])]


@dataclass
class Dataset:
    manifest: dict
    episodes: list
    path: Path | None = None

    @property
    def domain(self):
        return self.manifest["domain"]

    @property
    def num_views(self):
        return self.manifest["views"]


def _det_record(d: Detection, owner=None):
    rec = {
        "label": d.label,
        "confidence": round(float(d.confidence), 6),
        "bbox": [round(float(b), 2) for b in d.bbox],
        "view": d.view,
    }
    if owner is not None:
        rec["object"] = owner
    return rec


def generate_sorting_episode(seed: int, episode_id: int, num_views: int = 3,
                             height: int = 120, width: int = 160,
                             num_onions: int = 2, blemish_views: int | None = None,
                             corruption: CorruptionSpec | None = None) -> Episode:
    views = sorting_views(height, width, num_views)
    script = script_sorting_episode(seed, num_onions, num_views, blemish_views)
    corruptor = StreamCorruptor(corruption)
    frames = [[] for _ in range(num_views)]
    steps = []
    for t, (scene, labels) in enumerate(script):
        rng = Rng(seed, f"render/t{t}")
        det_map = {}
        for v, spec in enumerate(views):
            degraded = corruption is not None and corruption.targets(v) and corruption.degrade_detector
            frame, dets = render_sorting(scene, spec, rng, detector_degraded=degraded)
            frame = corruptor.frame(frame, episode_id, t, v)
            frames[v].append(frame)
            det_map[str(v)] = [_det_record(d) for d in dets]
        steps.append(
            {
                "t": t,
                "sim_time_s": round(t / FPS, 3),
                "labels": {
                    "onion_location": labels["onion_location"],
                    "eff_location": labels["eff_location"],
                },
                "status": labels["status"],
                "action": labels["action"],
                "detections": det_map,
            }
        )
    return Episode(episode_id, [np.stack(f) for f in frames], steps)


def generate_patrol_episode(seed: int, episode_id: int, num_views: int = 2,
                            height: int = 120, width: int = 160, length: int = 60,
                            grid_x: int = 10, grid_y: int = 5,
                            corruption: CorruptionSpec | None = None) -> Episode:
    views = patrol_views(height, width, num_views, grid_x, grid_y)
    script = script_patrol_episode(seed, length, grid_x, grid_y)
    corruptor = StreamCorruptor(corruption)
    frames = [[] for _ in range(num_views)]
    steps = []
    for t, (scene, labels) in enumerate(script):
        rng = Rng(seed, f"render/t{t}")
        det_map = {}
        for v, spec in enumerate(views):
            degraded = corruption is not None and corruption.targets(v) and corruption.degrade_detector
            frame, dets, owners = render_patrol(scene, spec, rng, detector_degraded=degraded)
            frame = corruptor.frame(frame, episode_id, t, v)
            frames[v].append(frame)
            det_map[str(v)] = [_det_record(d, o) for d, o in zip(dets, owners)]
        steps.append(
            {
                "t": t,
                "sim_time_s": round(t / FPS, 3),
                "experts": {str(i): lab for i, lab in enumerate(labels)},
                "detections": det_map,
            }
        )
    return Episode(episode_id, [np.stack(f) for f in frames], steps)


def generate_dataset(domain: str, num_episodes: int, seed: int,
                     num_views: int | None = None, height: int = 120, width: int = 160,
                     corruption: CorruptionSpec | None = None,
                     episode_length: int = 60, num_onions: int = 2,
                     blemish_views: int | None = None,
                     grid_x: int = 10, grid_y: int = 5) -> Dataset:
    """Generate a dataset fully in memory; see write_dataset to persist."""
    if domain == "sorting":
        num_views = 3 if num_views is None else num_views
    elif domain == "patrolling":
        num_views = 2 if num_views is None else num_views
    else:
        raise ConfigurationError(f"unknown domain {domain!r}")
    root = Rng(seed, f"dataset/{domain}")
    episodes = []
    for k in range(num_episodes):
        ep_seed = int(root.child(f"ep{k}").raw(1)[0] % (1 << 62))
        if domain == "sorting":
            ep = generate_sorting_episode(
                ep_seed, k, num_views, height, width, num_onions, blemish_views, corruption
            )
        else:
            ep = generate_patrol_episode(
                ep_seed, k, num_views, height, width, episode_length, grid_x, grid_y, corruption
            )
        episodes.append(ep)

    if domain == "sorting":
        specs = sorting_views(height, width, num_views)
        decision = {"conveyor_end_x": {str(s.view_id): s.conveyor_end_x for s in specs}}
        schema = {"state_heads": [["onion_location", 4], ["eff_location", 4]],
                  "status_classes": ["blemished", "unblemished", "unknown"],
                  "action_classes": 4}
    else:
        specs = patrol_views(height, width, num_views, grid_x, grid_y)
        decision = {
            "map_origin": {str(s.view_id): list(s.origin) for s in specs},
            "cell_px": {str(s.view_id): s.cell_px for s in specs},
        }
        schema = {"state_heads": [["x", grid_x + 1], ["y", grid_y + 1], ["theta", 5]],
                  "action_classes": 5}
    manifest = {
        "format_version": FORMAT_VERSION,
        "domain": domain,
        "views": num_views,
        "height": height,
        "width": width,
        "channels": 4,
        "fps": FPS,
        "seed": seed,
        "schema": schema,
        "decision": decision,
        "corruption": corruption.to_dict() if corruption else None,
        "episodes": [{"id": ep.episode_id, "length": ep.length} for ep in episodes],
    }
    return Dataset(manifest, episodes)


def write_dataset(dataset: Dataset, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for ep in dataset.episodes:
        for v, arr in enumerate(ep.views):
            write_tensor(out / f"ep{ep.episode_id}_view{v}.mvst", arr)
        with open(out / f"ep{ep.episode_id}_labels.jsonl", "w") as f:
            for step in ep.steps:
                f.write(json.dumps(step, sort_keys=True) + "\n")
    with open(out / "manifest.json", "w") as f:
        json.dump(dataset.manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    dataset.path = out
    return out


def load_dataset(path) -> Dataset:
    path = Path(path)
    mf = path / "manifest.json"
    if not mf.exists():
        raise ConfigurationError(f"{path}: no manifest.json")
    manifest = json.loads(mf.read_text())
    if manifest.get("format_version") != FORMAT_VERSION:
        raise ConfigurationError(
            f"unsupported dataset format version {manifest.get('format_version')}"
        )
    episodes = []
    for meta in manifest["episodes"]:
        k = meta["id"]
        views = [
            read_tensor(path / f"ep{k}_view{v}.mvst") for v in range(manifest["views"])
        ]
        steps = []
        with open(path / f"ep{k}_labels.jsonl") as f:
            for line in f:
                steps.append(json.loads(line))
        if any(v.shape[0] != len(steps) for v in views):
            raise ConfigurationError(f"episode {k}: frame/label length mismatch")
        episodes.append(Episode(k, views, steps))
    return Dataset(manifest, episodes, path)
