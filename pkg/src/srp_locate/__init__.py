"""Sound source localization on distributed microphone arrays with SRP-PHAT and Neural-SRP."""

from .dsp import gcc_phat, phase_feature, stft
from .geometry import Room, DevicePlacement, make_grid, metadata, tdoa
from .srp import LikelihoodGrid, estimate_source, srp_global, srp_pairwise

__version__ = "0.1.0"

__all__ = [
    "DevicePlacement", "LikelihoodGrid", "Room", "estimate_source", "gcc_phat", "make_grid",
    "metadata", "phase_feature", "srp_global", "srp_pairwise", "stft", "tdoa",
]
