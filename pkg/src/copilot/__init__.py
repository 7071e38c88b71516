"""Egocentric multi-view collision prediction and avoidance on a procedural simulator."""
from .controller import ControlConfig, evaluate_avoidance, rollout_episode, step_policy
from .datagen import DatagenConfig, generate_dataset, load_dataset
from .dataset import DatasetConfig, Window
from .estimator import CollisionPredictor
from .losses import LossWeights, loss_cls, loss_map, total_loss
from .metrics import compute_metrics
from .model import CopilotNet, ModelConfig
from .training import TrainConfig, evaluate, load_checkpoint, train

__version__ = "0.1.0"
