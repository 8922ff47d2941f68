"""Independent PPO with one recurrent actor-critic per agent group."""
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .evaluate import PolicyError, evaluate_matrix, resolve_policy, run_episodes
from .gae import compute_gae
from .network import Adam, backward, forward, init_params
from .policy import LearnedPolicy, RandomPolicy, ScriptedPolicy
from .ppo import Batch, loss_and_grads, ppo_update
from .rollout import BanditVecEnv, LobVecEnv
from .train import train, train_loop

__all__ = [
    "Adam", "BanditVecEnv", "Batch", "CheckpointError", "LearnedPolicy", "LobVecEnv",
    "PolicyError", "RandomPolicy", "ScriptedPolicy", "backward", "compute_gae",
    "evaluate_matrix", "forward", "init_params", "load_checkpoint", "loss_and_grads",
    "ppo_update", "resolve_policy", "run_episodes", "save_checkpoint", "train", "train_loop",
]
