"""Residual Q-learning with investigative presses for tight-clearance insertion.

Modules:

- ``transforms``: poses, quaternions, interpolation
- ``contact``: quasi-static compliant contact simulator
- ``vision``: synthetic eye-in-hand camera and pose estimation
- ``agent``: fixed visual policy, Q-learning, belief-gated episodes
- ``experiments``: ablation and baseline-comparison protocols
"""

from .agent import AgentConfig, QTable, TaskSetup, run_episode, train
from .config import ExperimentConfig, load_config, preset
from .contact import ComplianceParams, Outcome, SlotGeometry, WorldState
from .experiments import ResultTable, run_ablation, run_comparison

__all__ = [
    "AgentConfig",
    "ComplianceParams",
    "ExperimentConfig",
    "Outcome",
    "QTable",
    "ResultTable",
    "SlotGeometry",
    "TaskSetup",
    "WorldState",
    "load_config",
    "preset",
    "run_ablation",
    "run_comparison",
    "run_episode",
    "train",
]
