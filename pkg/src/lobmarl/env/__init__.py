from .core import (
    ActiveOrder, AgentGroup, EnvLayout, EnvState, LobEnv, StepOutput, TerminalStateError,
    active_orders, auto_cancel_messages, make_env, reset, step, vector_reset,
)
from .rng import env_keys, seed_key

__all__ = [
    "ActiveOrder", "AgentGroup", "EnvLayout", "EnvState", "LobEnv", "StepOutput",
    "TerminalStateError", "active_orders", "auto_cancel_messages", "env_keys", "make_env",
    "reset", "seed_key", "step", "vector_reset",
]
