"""Crosswalk drawing from bird's-eye-view feature maps by exact 1D energy maximization."""

__version__ = "0.1.0"

from .featuremaps import CorruptionConfig, FeatureMaps, corrupt, render_oracle  # noqa: E402
from .inference import EnergyConfig, infer_scene, maximize_energy  # noqa: E402
from .losses import LossConfig, total_loss  # noqa: E402
from .scene import GeneratorConfig, Scene, generate_scene  # noqa: E402

__all__ = [
    "__version__",
    "CorruptionConfig",
    "EnergyConfig",
    "FeatureMaps",
    "GeneratorConfig",
    "LossConfig",
    "Scene",
    "corrupt",
    "generate_scene",
    "infer_scene",
    "maximize_energy",
    "render_oracle",
    "total_loss",
]
