from .corrupt import CorruptionSpec, StreamCorruptor, corrupt, degrade_detections
from .dataset import Dataset, Episode, generate_dataset, load_dataset, write_dataset
from .patrol import PatrolViewSpec, patrol_views, render_patrol, script_patrol_episode
from .sorting import SortViewSpec, render_sorting, script_sorting_episode, sorting_views

__all__ = [
    "CorruptionSpec",
    "StreamCorruptor",
    "corrupt",
    "degrade_detections",
    "Dataset",
    "Episode",
    "generate_dataset",
    "load_dataset",
    "write_dataset",
    "PatrolViewSpec",
    "patrol_views",
    "render_patrol",
    "script_patrol_episode",
    "SortViewSpec",
    "render_sorting",
    "script_sorting_episode",
    "sorting_views",
]
