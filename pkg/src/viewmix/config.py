"""Model configuration and the two domain presets."""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

from .errors import ConfigurationError

WINDOW = 5  # frames per temporal window, fixed by the method

ONION_LOCATIONS = ("at_home", "on_conveyor", "in_front", "at_bin")
SORT_ACTIONS = ("claim", "inspect", "place_in_bin", "place_on_conveyor")
HEADINGS = ("north", "south", "east", "west")
PATROL_ACTIONS = ("move_forward", "turn_right", "turn_left", "stop")


@dataclass
class ModelConfig:
    domain: str  # "sorting" | "patrolling"
    num_views: int
    height: int
    width: int
    channels: int  # 4 with depth, 3 without
    state_heads: tuple  # ordered (name, class count) incl. unknown slot
    action_classes: int
    window: int = WINDOW
    use_gating: bool = True
    state_action_connection: bool = True
    hidden: tuple = (128, 64)
    action_window: str = "inclusive"  # or "previous_only" (frames t-4..t-1)
    has_unknown: bool = False  # last class index of every head is `unknown`
    dtype: str = "f32"
    view_ids: tuple = ()  # source view indices in the dataset

    def __post_init__(self):
        if self.window != WINDOW:
            raise ConfigurationError(f"window is fixed at {WINDOW}")
        if self.num_views < 1:
            raise ConfigurationError("num_views must be >= 1")
        if self.channels not in (3, 4):
            raise ConfigurationError("channels must be 3 (RGB) or 4 (RGB-D)")
        if self.action_window not in ("inclusive", "previous_only"):
            raise ConfigurationError(f"bad action_window {self.action_window!r}")
        if self.domain not in ("sorting", "patrolling"):
            raise ConfigurationError(f"unknown domain {self.domain!r}")
        if not self.view_ids:
            self.view_ids = tuple(range(self.num_views))
        if len(self.view_ids) != self.num_views:
            raise ConfigurationError("view_ids length must equal num_views")
        self.state_heads = tuple((str(n), int(k)) for n, k in self.state_heads)

    @property
    def head_names(self):
        return tuple(n for n, _ in self.state_heads)

    def head_classes(self, name: str) -> int:
        for n, k in self.state_heads:
            if n == name:
                return k
        raise ConfigurationError(f"unknown head {name!r}")

    def unknown_index(self, head: str) -> int:
        if not self.has_unknown:
            raise ConfigurationError(f"{self.domain} domain has no unknown class")
        return self.head_classes(head) - 1 if head != "action" else self.action_classes - 1

    def to_dict(self) -> dict:
        d = asdict(self)
        d["state_heads"] = [[n, k] for n, k in self.state_heads]
        d["hidden"] = list(self.hidden)
        d["view_ids"] = list(self.view_ids)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["state_heads"] = tuple((n, k) for n, k in d["state_heads"])
        d["hidden"] = tuple(d["hidden"])
        d["view_ids"] = tuple(d.get("view_ids", ()))
        return cls(**d)


def sorting_config(
    num_views: int = 3,
    height: int = 120,
    width: int = 160,
    use_depth: bool = True,
    use_gating: bool = True,
    state_action_connection: bool = True,
    action_window: str = "inclusive",
    dtype: str = "f32",
    view_ids: tuple = (),
) -> ModelConfig:
    """Produce-sorting preset: two 4-way location heads plus 4 actions.

    Onion status is not a network head; it comes from the detector path.
    """
    return ModelConfig(
        domain="sorting",
        num_views=num_views,
        height=height,
        width=width,
        channels=4 if use_depth else 3,
        state_heads=(
            ("onion_location", len(ONION_LOCATIONS)),
            ("eff_location", len(ONION_LOCATIONS)),
        ),
        action_classes=len(SORT_ACTIONS),
        use_gating=use_gating,
        state_action_connection=state_action_connection,
        action_window=action_window,
        dtype=dtype,
        view_ids=tuple(view_ids),
    )


def patrolling_config(
    num_views: int = 2,
    height: int = 120,
    width: int = 160,
    x_classes: int = 10,
    y_classes: int = 5,
    use_depth: bool = True,
    use_gating: bool = True,
    state_action_connection: bool = True,
    action_window: str = "inclusive",
    dtype: str = "f32",
    view_ids: tuple = (),
) -> ModelConfig:
    """Patrolling preset: X/Y/theta pose heads, each with an extra unknown
    class assigned only by the zero-detection override."""
    return ModelConfig(
        domain="patrolling",
        num_views=num_views,
        height=height,
        width=width,
        channels=4 if use_depth else 3,
        state_heads=(
            ("x", x_classes + 1),
            ("y", y_classes + 1),
            ("theta", len(HEADINGS) + 1),
        ),
        action_classes=len(PATROL_ACTIONS) + 1,
        use_gating=use_gating,
        state_action_connection=state_action_connection,
        action_window=action_window,
        has_unknown=True,
        dtype=dtype,
        view_ids=tuple(view_ids),
    )
