"""Physics-augmented car-following / ACC models, calibration and cross-validation."""

from accfit.models import ModelSpec, enumerate_models, get_model
from accfit.simulator import SimResult, simulate_follower, simulate_platoon
from accfit.trajectory_data import KinematicSeries, PlatoonTrajectory, load_platoon

__all__ = [
    "KinematicSeries",
    "ModelSpec",
    "PlatoonTrajectory",
    "SimResult",
    "enumerate_models",
    "get_model",
    "load_platoon",
    "simulate_follower",
    "simulate_platoon",
]

__version__ = "0.1.0"
