from captiongan.training.state import TrainConfig, TrainState, CheckpointBundle
from captiongan.training.state import save_checkpoint, load_checkpoint
from captiongan.training.init import run_initialization, run_pseudo_training
from captiongan.training.adversarial import Trainer, policy_gradient_loss

__all__ = [
    "TrainConfig",
    "TrainState",
    "CheckpointBundle",
    "save_checkpoint",
    "load_checkpoint",
    "run_initialization",
    "run_pseudo_training",
    "Trainer",
    "policy_gradient_loss",
]
