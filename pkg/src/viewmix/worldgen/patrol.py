"""Synthetic hallway-patrol scenes.

Two identical patrollers walk a ring corridor on an X-by-Y cell grid, each
with its own seeded direction and stop pattern. Two cameras render the map
top-down with different placements and deliberately unequal fields of view
(the primary camera covers a minority of the corridor), so multi-view
fusion has something real to recover.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..config import HEADINGS, PATROL_ACTIONS
from ..decision import Detection
from ..errors import ConfigurationError
from ..rng import Rng

# dx, dy per heading; image y grows downward, north means decreasing y
HEADING_DELTA = {"north": (0, -1), "south": (0, 1), "east": (1, 0), "west": (-1, 0)}
# heading after a right / left turn
RIGHT_OF = {"north": "east", "east": "south", "south": "west", "west": "north"}
LEFT_OF = {v: k for k, v in RIGHT_OF.items()}

PALETTE = {
    "floor": (0.40, 0.42, 0.44),
    "wall": (0.36, 0.35, 0.37),
    "hidden": (0.345, 0.345, 0.345),
    "patroller": (0.82, 0.46, 0.40),
    "nose": (0.95, 0.92, 0.40),
}
BODY_RADIUS = 5
NOSE_RADIUS = 2
NOSE_OFFSET = 4
DEPTH_FLOOR = 0.35
DEPTH_WALL = 0.55
DEPTH_BUMP = 0.2


@dataclass(frozen=True)
class PatrolViewSpec:
    """Placement of the cell grid into one camera frame plus its FOV."""

    view_id: int
    height: int
    width: int
    origin: tuple  # top-left pixel of cell (0, 0)
    cell_px: float
    visible_x: tuple  # inclusive cell-x range this camera covers

    def center_px(self, cx: int, cy: int):
        return (
            self.origin[0] + (cx + 0.5) * self.cell_px,
            self.origin[1] + (cy + 0.5) * self.cell_px,
        )

    def sees(self, cx: int, cy: int) -> bool:
        return self.visible_x[0] <= cx <= self.visible_x[1]


def patrol_views(height: int = 120, width: int = 160, num_views: int = 2,
                 grid_x: int = 10, grid_y: int = 5):
    """Primary camera sees a minority of the corridor, secondary the rest."""
    if not 1 <= num_views <= 2:
        raise ConfigurationError("patrolling supports 1..2 views")
    minority = (0, max(1, grid_x // 3 - 1))
    majority = (max(0, grid_x // 4 - 1), grid_x - 1)
    specs = [
        PatrolViewSpec(0, height, width, (14.0, 24.0), 13.0, minority),
        PatrolViewSpec(1, height, width, (10.0, 20.0), 14.0, majority),
    ]
    return specs[:num_views]


@dataclass
class PatrollerState:
    x: int
    y: int
    heading: str
    direction: str  # cw | ccw around the ring


@dataclass
class PatrolScene:
    patrollers: list
    grid_x: int
    grid_y: int

    def free(self, x: int, y: int) -> bool:
        on_grid = 0 <= x < self.grid_x and 0 <= y < self.grid_y
        ring = x in (0, self.grid_x - 1) or y in (0, self.grid_y - 1)
        return on_grid and ring


def _turn_for(p: PatrollerState, scene: PatrolScene) -> str:
    """Which turn keeps the walker on the ring (cw turns right, ccw left)."""
    prefer = RIGHT_OF[p.heading] if p.direction == "cw" else LEFT_OF[p.heading]
    dx, dy = HEADING_DELTA[prefer]
    if scene.free(p.x + dx, p.y + dy):
        return "turn_right" if p.direction == "cw" else "turn_left"
    return "turn_left" if p.direction == "cw" else "turn_right"


def script_patrol_episode(seed: int, length: int = 60, grid_x: int = 10,
                          grid_y: int = 5, stop_prob: float = 0.08):
    """Seeded ring walks for two independent patrollers.

    Returns a list of (PatrolScene, per-patroller labels); labels hold the
    pose (x, y, theta) and the action taken at that step, at 10 FPS.
    """
    if length < 5:
        raise ConfigurationError("episode length must be >= 5")
    rng = Rng(seed, "patrol")
    scene = PatrolScene([], grid_x, grid_y)
    starts = [(0, 0, "east", "cw"), (grid_x - 1, grid_y - 1, "west", "cw")]
    for i, (x, y, h, d) in enumerate(starts):
        r = rng.child(f"p{i}")
        heading = HEADINGS[int(r.integers(4)[0])]
        direction = ["cw", "ccw"][int(r.integers(2)[0])]
        p = PatrollerState(x, y, heading, direction)
        dx, dy = HEADING_DELTA[p.heading]
        if not scene.free(x + dx, y + dy):
            p.heading = HEADINGS[int(r.integers(4)[0])]
        scene.patrollers.append(p)

    steps = []
    walk = rng.child("walk")
    for t in range(length):
        # Snapshot first: the rendered frame shows the pose the labels name,
        # with the labelled action applied between this step and the next.
        snapshot = PatrolScene([replace(q) for q in scene.patrollers], grid_x, grid_y)
        labels = []
        for i, p in enumerate(scene.patrollers):
            dx, dy = HEADING_DELTA[p.heading]
            if float(walk.uniform(1)[0]) < stop_prob:
                action = "stop"
            elif scene.free(p.x + dx, p.y + dy):
                action = "move_forward"
            else:
                action = _turn_for(p, scene)
            labels.append(
                {
                    "x": p.x,
                    "y": p.y,
                    "theta": HEADINGS.index(p.heading),
                    "action": PATROL_ACTIONS.index(action),
                }
            )
            if action == "move_forward":
                p.x += dx
                p.y += dy
            elif action == "turn_right":
                p.heading = RIGHT_OF[p.heading]
            elif action == "turn_left":
                p.heading = LEFT_OF[p.heading]
        steps.append((snapshot, labels))
    return steps


def _disk(frame, cx, cy, radius, color):
    H, W = frame.shape[:2]
    x0, x1 = max(0, int(cx - radius)), min(W, int(cx + radius) + 1)
    y0, y1 = max(0, int(cy - radius)), min(H, int(cy + radius) + 1)
    ys, xs = np.ogrid[y0:y1, x0:x1]
    mask = (xs - cx) ** 2 + (ys - cy) ** 2 <= radius**2
    for c, val in enumerate(color):
        frame[y0:y1, x0:x1, c][mask] = val
    return mask


def render_patrol(scene: PatrolScene, view: PatrolViewSpec, rng: Rng,
                  miss_rate: float = 0.0, conf_noise: float = 0.3,
                  detector_degraded: bool = False):
    """Rasterize the map for one camera; patrollers outside the camera's
    field of view appear in neither pixels nor detections.

    Returns (frame, detections, owners) where owners[i] is the patroller
    index behind detections[i] (dataset annotation; the live pipeline must
    not rely on it).
    """
    H, W = view.height, view.width
    frame = np.empty((H, W, 4), dtype=np.float32)
    frame[:, :, :3] = PALETTE["hidden"]
    frame[:, :, 3] = DEPTH_WALL

    c = view.cell_px
    for cy in range(scene.grid_y):
        for cx in range(scene.grid_x):
            if not view.sees(cx, cy):
                continue
            x0 = int(view.origin[0] + cx * c)
            y0 = int(view.origin[1] + cy * c)
            x1, y1 = int(x0 + c), int(y0 + c)
            ring = cx in (0, scene.grid_x - 1) or cy in (0, scene.grid_y - 1)
            color = PALETTE["floor"] if ring else PALETTE["wall"]
            depth = DEPTH_FLOOR + 0.03 * cy if ring else DEPTH_WALL
            frame[max(0, y0):min(H, y1), max(0, x0):min(W, x1), :3] = color
            frame[max(0, y0):min(H, y1), max(0, x0):min(W, x1), 3] = depth

    det_rng = rng.child(f"det{view.view_id}")
    detections = []
    owners = []
    for i, p in enumerate(scene.patrollers):
        if not view.sees(p.x, p.y):
            continue
        cx, cy = view.center_px(p.x, p.y)
        mask = _disk(frame, cx, cy, BODY_RADIUS, PALETTE["patroller"])
        dx, dy = HEADING_DELTA[p.heading]
        _disk(frame, cx + dx * NOSE_OFFSET, cy + dy * NOSE_OFFSET, NOSE_RADIUS, PALETTE["nose"])
        y0, y1 = max(0, int(cy - BODY_RADIUS)), min(H, int(cy + BODY_RADIUS) + 1)
        x0, x1 = max(0, int(cx - BODY_RADIUS)), min(W, int(cx + BODY_RADIUS) + 1)
        frame[:, :, 3][y0:y1, x0:x1][mask] += DEPTH_BUMP
        if float(det_rng.uniform(1)[0]) < miss_rate:
            continue
        if detector_degraded:
            conf = float(np.clip(0.05 + 0.40 * det_rng.uniform(1)[0], 0, 1))
        else:
            conf = float(np.clip(0.9 - conf_noise * det_rng.uniform(1)[0], 0, 1))
        r = BODY_RADIUS + NOSE_OFFSET
        bbox = (max(0.0, cx - r), max(0.0, cy - r), min(float(W), cx + r), min(float(H), cy + r))
        detections.append(Detection("turtlebot", conf, bbox, view.view_id))
        owners.append(i)

    np.clip(frame, 0.0, 1.0, out=frame)
    return frame, detections, owners
