from .actions import (
    action_arity, decode_avst, decode_directional, decode_exec, decode_fixed_quant,
    decode_spread_skew,
)
from .observations import observation_dim, observation_layout
from .rewards import (
    portfolio_value, quadratic_inventory_penalty, reward_buysell, reward_exec, reward_spooner,
    slippage,
)

__all__ = [
    "action_arity", "decode_avst", "decode_directional", "decode_exec", "decode_fixed_quant",
    "decode_spread_skew", "observation_dim", "observation_layout", "portfolio_value",
    "quadratic_inventory_penalty", "reward_buysell", "reward_exec", "reward_spooner", "slippage",
]
