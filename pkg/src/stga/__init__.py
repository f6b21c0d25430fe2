"""Spatio-temporal graph attention for pedestrian trajectory prediction."""

from .data import SceneDataset, SceneInstance, TrajectorySequence, load_manifest, load_scene
from .graph import GraphSnapshot, Mode, build_snapshot
from .model import ModelConfig, ModelParams, forward_step, observe, predict, sequence_nll
from .metrics import ade, fde
from .synthetic import make_synthetic
from .training import TrainConfig, train
from .evaluation import EvalReport, evaluate

__version__ = "0.1.0"
