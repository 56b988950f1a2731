"""Matrix-free space-time spectral clustering for video object discovery."""

from .flow_io import FlowField, GroundTruthMasks, SynthSceneSpec, VideoVolume, synth_scene
from .ike import NetworkInvocation, run_ike
from .masks import SegmentationMasks, jmean, mae, to_masks
from .pipeline import segment_flow
from .solver import SolverConfig

__version__ = "0.1.0"

__all__ = [
    "FlowField",
    "GroundTruthMasks",
    "NetworkInvocation",
    "SegmentationMasks",
    "SolverConfig",
    "SynthSceneSpec",
    "VideoVolume",
    "jmean",
    "mae",
    "run_ike",
    "segment_flow",
    "synth_scene",
    "to_masks",
    "__version__",
]
