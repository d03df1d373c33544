"""Synthetic produce-sorting scenes.

An abstract scene places the effector and each onion at (region, u, v):
a named spatial region plus a relative position inside it. Each camera view
owns a different tiling of the frame into the four regions, so the same
scene renders differently per view while ground-truth labels (the region
names) stay view-independent.

The scripted expert works the onion queue front-to-back: claim (reach the
onion nearest the conveyor end), inspect (lift it to in_front), then
place_in_bin or place_on_conveyor by blemish status. Blemishes are drawn
only in the views that can see them, which is what exercises the cross-view
status consolidation.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..config import ONION_LOCATIONS, SORT_ACTIONS
from ..decision import Detection
from ..errors import ConfigurationError
from ..rng import Rng

REGIONS = ONION_LOCATIONS  # at_home, on_conveyor, in_front, at_bin

# Every colour keeps all channels >= 0.34 so a gain-3 overexposure clamps
# the whole frame to white and genuinely blinds the view.
PALETTE = {
    "onion": (0.85, 0.72, 0.38),
    "blemish": (0.37, 0.34, 0.36),
    "effector": (0.38, 0.55, 0.92),
    "at_home": (0.42, 0.38, 0.34),
    "on_conveyor": (0.38, 0.41, 0.36),
    "in_front": (0.36, 0.39, 0.43),
    "at_bin": (0.41, 0.36, 0.41),
}

REGION_DEPTH = {"on_conveyor": 0.30, "at_home": 0.55, "in_front": 0.75, "at_bin": 0.45}
ONION_RADIUS = 7
EFFECTOR_RADIUS = 6
BLEMISH_RADIUS = 3
DEPTH_BUMP_ONION = 0.18
DEPTH_BUMP_EFFECTOR = 0.22


@dataclass(frozen=True)
class SortViewSpec:
    """Affine placement of the four regions into one camera's frame.

    flip_v lists regions whose v axis is mirrored so that larger v always
    means farther from the conveyor lane in this view; the scripted
    waypoints rely on that to respect the 40 px proximity rule everywhere.
    """

    view_id: int
    height: int
    width: int
    rects: dict  # region -> (x0, y0, x1, y1), a tiling of the frame
    conveyor_end_x: float
    flip_v: frozenset = frozenset()

    def region_of(self, x: float, y: float) -> str:
        for region, (x0, y0, x1, y1) in self.rects.items():
            if x0 <= x < x1 and y0 <= y < y1:
                return region
        raise ConfigurationError(f"point ({x},{y}) outside every region")

    def place(self, region: str, u: float, v: float, margin: int = 9):
        if region in self.flip_v:
            v = 1.0 - v
        x0, y0, x1, y1 = self.rects[region]
        x = x0 + margin + u * (x1 - x0 - 2 * margin)
        y = y0 + margin + v * (y1 - y0 - 2 * margin)
        if not (0 <= x < self.width and 0 <= y < self.height):
            raise ConfigurationError(f"placement outside frame: {region} ({x},{y})")
        return x, y


def sorting_views(height: int = 120, width: int = 160, num_views: int = 3):
    """The three default camera layouts (front, side, top-down analogs).

    Every view keeps the conveyor a full-width strip so lane positions span
    the whole frame width: the 40 px effector-proximity rule then cannot
    confuse neighbouring lane onions (slots are >= 45 px apart everywhere).
    """
    if not 1 <= num_views <= 3:
        raise ConfigurationError("sorting supports 1..3 views")
    h, w = height, width
    front = {
        "on_conveyor": (0, 0, w, int(0.36 * h)),
        "at_home": (0, int(0.36 * h), int(0.33 * w), h),
        "in_front": (int(0.33 * w), int(0.36 * h), int(0.67 * w), h),
        "at_bin": (int(0.67 * w), int(0.36 * h), w, h),
    }
    side = {
        "at_bin": (0, 0, int(0.5 * w), int(0.34 * h)),
        "in_front": (int(0.5 * w), 0, w, int(0.34 * h)),
        "on_conveyor": (0, int(0.34 * h), w, int(0.66 * h)),
        "at_home": (0, int(0.66 * h), w, h),
    }
    top = {
        "at_bin": (0, 0, int(0.33 * w), int(0.64 * h)),
        "at_home": (int(0.33 * w), 0, int(0.67 * w), int(0.64 * h)),
        "in_front": (int(0.67 * w), 0, w, int(0.64 * h)),
        "on_conveyor": (0, int(0.64 * h), w, h),
    }
    specs = [
        SortViewSpec(0, h, w, front, w - 1.0),
        SortViewSpec(1, h, w, side, w - 1.0, flip_v=frozenset({"at_bin", "in_front"})),
        SortViewSpec(2, h, w, top, w - 1.0),
    ]
    return specs[:num_views]


@dataclass
class Onion:
    pos: tuple  # (region, u, v)
    blemished: bool
    visible_views: frozenset  # views that can see the blemish
    held: bool = False
    in_bin: bool = False  # dropped into the box: occluded, not detectable
    spot: tuple = (0.3, -0.3)  # blemish offset inside the blob, in radii


@dataclass
class SortScene:
    onions: list
    effector: tuple  # (region, u, v)
    active: int  # index of the onion being worked
    phase: str  # claim | inspect | place_in_bin | place_on_conveyor

    def held_count(self):
        return sum(1 for o in self.onions if o.held)


def _lerp(a, b, t):
    return a + (b - a) * t


def _segment(p0, p1, steps):
    """Positions along a straight (u, v) path inside one region."""
    region = p1[0]
    out = []
    for i in range(1, steps + 1):
        t = i / steps
        out.append((region, _lerp(p0[1], p1[1], t), _lerp(p0[2], p1[2], t)))
    return out


def _conveyor_slot(i: int) -> tuple:
    """Queue slot i, counted back from the conveyor end (slot 0 is next up).

    Slot pitch 0.32 of the lane keeps neighbours >= 45 px apart under the
    default geometry, outside the 40 px effector-proximity rule.
    """
    return ("on_conveyor", 0.92 - 0.32 * i, 0.5)


def _return_slot(r: int) -> tuple:
    """Where reinspected unblemished onions go: far from the conveyor end."""
    return ("on_conveyor", 0.04 + 0.12 * r, 0.5)


def script_sorting_episode(seed: int, num_onions: int = 2, num_views: int = 3,
                           blemish_views: int | None = None,
                           extra_waiting: int = 0):
    """Deterministic expert episode: one claim/inspect/place cycle per onion.

    Returns a list of (SortScene, labels) where labels carry the ground
    truth onion_location, eff_location, status, and action of each frame.
    blemish_views forces the size of every blemish-visibility subset
    (default: seeded size in [1, num_views-1], or all views when V == 1).
    Episode length lands in [35, 45] frames for the default two onions.
    """
    if num_onions < 1:
        raise ConfigurationError("num_onions must be >= 1")
    rng = Rng(seed, "script")
    total = num_onions + extra_waiting
    if total > 3:
        raise ConfigurationError("at most 3 onions fit the conveyor slot pitch")
    onions = []
    for i in range(total):
        blemished = bool(rng.integers(2)[0])
        if num_views == 1:
            vis = frozenset({0})
        else:
            size = blemish_views if blemish_views else 1 + int(rng.integers(num_views - 1)[0])
            ids = rng.shuffle(list(range(num_views)))[: max(1, min(size, num_views))]
            vis = frozenset(ids)
        spot = (float(rng.uniform(1, -0.45, 0.45)[0]), float(rng.uniform(1, -0.45, 0.45)[0]))
        onions.append(Onion(_conveyor_slot(i), blemished, vis, spot=spot))

    # phase lengths, with the final inspect absorbing the episode-length target
    lens = []
    for _ in range(num_onions):
        lens.append([5 + int(rng.integers(3)[0]), 6 + int(rng.integers(3)[0]),
                     5 + int(rng.integers(3)[0])])
    if num_onions == 2:
        target = 37 + int(rng.integers(7)[0])
        diff = target - sum(sum(p) for p in lens)
        lens[-1][1] = int(np.clip(lens[-1][1] + diff, 4, 14))

    # Off-lane waypoints sit at v = 0.75: under every view layout that puts
    # their blob centers >= 45 px from the conveyor lane, outside the
    # 40 px effector-proximity rule.
    effector = ("at_home", 0.5, 0.75)
    frames = []
    returned = 0
    binned = 0

    def emit(scene_onions, eff, active, phase):
        onion = scene_onions[active]
        status = "blemished" if onion.blemished else "unblemished"
        labels = {
            "onion_location": REGIONS.index(onion.pos[0]),
            "eff_location": REGIONS.index(eff[0]),
            "status": status,
            "action": SORT_ACTIONS.index(phase),
        }
        frames.append((SortScene([replace(o) for o in scene_onions], eff, active, phase), labels))

    for k in range(num_onions):
        active = k
        target_onion = onions[active]
        n_claim, n_inspect, n_place = lens[k]

        # claim: travel in the deep off-lane band, then drop onto the lane
        # right above the target slot; the only lane onion that can come
        # within 40 px of the hop is the target itself.
        if effector[0] == "on_conveyor":
            mid = ("in_front", 0.85, 0.75)
        else:
            mid = (effector[0], 0.85, 0.75)
        steps_out = max(1, n_claim // 3)
        path = _segment(effector, mid, steps_out)
        hop = ("on_conveyor", target_onion.pos[1], 0.85)
        path += _segment(hop, target_onion.pos, n_claim - steps_out)
        for pos in path:
            emit(onions, pos, active, "claim")
        effector = path[-1]

        # inspect: lift to in_front and hold with a small wiggle
        target_onion.held = True
        lift = ("in_front", 0.5, 0.75)
        n_move = max(2, n_inspect // 2)
        path = _segment(effector, lift, n_move)
        for i in range(n_inspect - n_move):
            wig = 0.05 * ((i % 2) * 2 - 1)
            path.append(("in_front", 0.5 + wig, 0.75))
        for pos in path:
            target_onion.pos = pos
            emit(onions, pos, active, "inspect")
        effector = path[-1]

        # place: bin for blemished, back to the far end of the lane otherwise
        if target_onion.blemished:
            phase = "place_in_bin"
            goal = ("at_bin", 0.3 + 0.2 * min(binned, 3), 0.75)
            binned += 1
        else:
            phase = "place_on_conveyor"
            goal = _return_slot(returned)
            returned += 1
        path = _segment(effector, goal, n_place)
        for pos in path:
            target_onion.pos = pos
            emit(onions, pos, active, phase)
        target_onion.held = False
        if target_onion.blemished:
            target_onion.in_bin = True  # drops out of sight into the box
        effector = path[-1]

    return frames


def _draw_disk(frame, cx, cy, radius, color):
    H, W = frame.shape[:2]
    x0, x1 = max(0, int(cx - radius)), min(W, int(cx + radius) + 1)
    y0, y1 = max(0, int(cy - radius)), min(H, int(cy + radius) + 1)
    if x0 >= x1 or y0 >= y1:
        raise ConfigurationError("blob entirely outside the frame")
    ys, xs = np.ogrid[y0:y1, x0:x1]
    mask = (xs - cx) ** 2 + (ys - cy) ** 2 <= radius**2
    for c, val in enumerate(color):
        frame[y0:y1, x0:x1, c][mask] = val
    return (x0, y0, x1, y1, mask)


def _bbox_of(cx, cy, radius, H, W):
    return (
        max(0.0, cx - radius),
        max(0.0, cy - radius),
        min(float(W), cx + radius + 1),
        min(float(H), cy + radius + 1),
    )


def render_sorting(scene: SortScene, view: SortViewSpec, rng: Rng,
                   miss_rate: float = 0.0, conf_noise: float = 0.3,
                   detector_degraded: bool = False):
    """Rasterize one scene for one view; returns (frame [H,W,4], detections).

    The detection list is the oracle stand-in for a trained detector: one
    hit per rendered object, labelled with the status *visible from this
    view*, plus one hit for the effector.
    """
    H, W = view.height, view.width
    frame = np.empty((H, W, 4), dtype=np.float32)
    for region, (x0, y0, x1, y1) in view.rects.items():
        frame[y0:y1, x0:x1, :3] = PALETTE[region]
        frame[y0:y1, x0:x1, 3] = REGION_DEPTH[region]
    frame[:, :, 3] += rng.normal(1, 0.01)[0]

    detections = []
    det_rng = rng.child(f"det{view.view_id}")
    for idx, onion in enumerate(scene.onions):
        cx, cy = view.place(*onion.pos)
        _draw_disk(frame, cx, cy, ONION_RADIUS, PALETTE["onion"])
        # depth bump shares the blob footprint
        y0, y1 = max(0, int(cy - ONION_RADIUS)), min(H, int(cy + ONION_RADIUS) + 1)
        x0, x1 = max(0, int(cx - ONION_RADIUS)), min(W, int(cx + ONION_RADIUS) + 1)
        ys, xs = np.ogrid[y0:y1, x0:x1]
        mask = (xs - cx) ** 2 + (ys - cy) ** 2 <= ONION_RADIUS**2
        frame[:, :, 3][y0:y1, x0:x1][mask] += DEPTH_BUMP_ONION
        visible_blemish = onion.blemished and (view.view_id in onion.visible_views)
        if visible_blemish:
            sx = cx + onion.spot[0] * ONION_RADIUS
            sy = cy + onion.spot[1] * ONION_RADIUS
            _draw_disk(frame, sx, sy, BLEMISH_RADIUS, PALETTE["blemish"])
        if float(det_rng.uniform(1)[0]) < miss_rate:
            continue
        label = "blemished" if visible_blemish else "unblemished"
        # The worked onion is the focused foreground object and detects
        # strongest; this keeps the proximity rule's confidence ordering
        # aligned with the expert's actual target.
        base = 0.9 if idx == scene.active else 0.82
        conf = _confidence(det_rng, conf_noise, detector_degraded, base)
        detections.append(
            Detection(label, conf, _bbox_of(cx, cy, ONION_RADIUS, H, W), view.view_id)
        )

    ex, ey = view.place(*scene.effector)
    _draw_disk(frame, ex, ey, EFFECTOR_RADIUS, PALETTE["effector"])
    y0, y1 = max(0, int(ey - EFFECTOR_RADIUS)), min(H, int(ey + EFFECTOR_RADIUS) + 1)
    x0, x1 = max(0, int(ex - EFFECTOR_RADIUS)), min(W, int(ex + EFFECTOR_RADIUS) + 1)
    ys, xs = np.ogrid[y0:y1, x0:x1]
    mask = (xs - ex) ** 2 + (ys - ey) ** 2 <= EFFECTOR_RADIUS**2
    frame[:, :, 3][y0:y1, x0:x1][mask] += DEPTH_BUMP_EFFECTOR
    if float(det_rng.uniform(1)[0]) >= miss_rate:
        conf = _confidence(det_rng, conf_noise, detector_degraded)
        detections.append(
            Detection("effector", conf, _bbox_of(ex, ey, EFFECTOR_RADIUS, H, W), view.view_id)
        )

    np.clip(frame[:, :, :3], 0.0, 1.0, out=frame[:, :, :3])
    np.clip(frame[:, :, 3], 0.0, 1.0, out=frame[:, :, 3])
    return frame, detections


def _confidence(rng: Rng, conf_noise: float, degraded: bool, base: float = 0.9) -> float:
    if degraded:
        return float(np.clip(0.05 + 0.40 * rng.uniform(1)[0], 0.0, 1.0))
    return float(np.clip(base - conf_noise * rng.uniform(1)[0], 0.0, 1.0))
