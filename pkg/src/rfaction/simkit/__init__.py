from dataclasses import dataclass
from typing import List

from ..core.types import ActionSegment, SkeletonFrame
from .motion import synth_motion
from .render import (
    AMPLITUDES,
    GridSpec,
    HeatmapStream,
    read_heatmaps,
    render_frame,
    render_heatmaps,
    splat,
    write_heatmaps,
)
from .scenario import (
    CLASS_LENGTHS,
    InteractionScript,
    PersonScript,
    RenderConfig,
    Scenario,
    ScriptedAction,
    Wall,
    load_scenario,
    random_scenario,
    save_scenario,
)


@dataclass(eq=False)
class SimulatedScene:
    """Everything one scenario produces: RF input, skeleton truth and labels."""

    heatmaps: HeatmapStream
    frames: List[SkeletonFrame]
    segments: List[ActionSegment]
    grid: GridSpec

    def __len__(self):
        return len(self.heatmaps)


def simulate(scenario: Scenario) -> SimulatedScene:
    frames, segments = synth_motion(scenario)
    return SimulatedScene(render_heatmaps(frames, scenario), frames, segments, GridSpec.from_scenario(scenario))


def simulate_dataset(seeds, **kwargs) -> List[SimulatedScene]:
    return [simulate(random_scenario(int(s), **kwargs)) for s in seeds]


__all__ = [
    "AMPLITUDES", "CLASS_LENGTHS", "GridSpec", "HeatmapStream", "InteractionScript", "PersonScript",
    "RenderConfig", "Scenario", "ScriptedAction", "SimulatedScene", "Wall", "load_scenario",
    "random_scenario", "read_heatmaps", "render_frame", "render_heatmaps", "save_scenario",
    "simulate", "simulate_dataset", "splat", "synth_motion", "write_heatmaps",
]
