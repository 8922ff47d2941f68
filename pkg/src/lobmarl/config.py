"""Configuration schema.

One YAML document configures a run: ``data``, ``env`` (including the agent
registry), ``train``, ``eval`` and ``bench``. Defaults reproduce the
reference parameter set: 64-step episodes starting every 64 steps, 100
replay messages per step, book capacity 100, a FixedQuant/Spooner market
maker with quadratic inventory penalty (rho = 50) and a complex-action
executor with task size 600, order size 10, lambda 0 and unfilled penalty 0.1.
"""
from __future__ import annotations

import hashlib
import json
from enum import Enum
from typing import Any, Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


# -- data ---------------------------------------------------------------------
class SynthConfig(_Model):
    """Synthetic order flow around a random-walk fundamental price (all prices in ticks)."""

    n_messages: int = Field(200_000, ge=1)
    initial_mid: float = Field(10_000.5, gt=0)
    volatility: float = Field(0.02, ge=0, description="std of the fundamental per message")
    spread_ticks: int = Field(1, ge=1, description="quoted spread the passive flow aims for")
    depth_levels: int = Field(10, ge=1, description="levels over which passive orders arrive")
    level_decay: float = Field(0.45, gt=0, le=1, description="geometric p of the level offset")
    initial_levels: int = Field(10, ge=1)
    qty_min: int = Field(1, ge=1)
    qty_max: int = Field(40, ge=1)
    p_limit: float = Field(0.50, ge=0)
    p_marketable: float = Field(0.08, ge=0)
    p_delete: float = Field(0.30, ge=0)
    p_cancel: float = Field(0.05, ge=0)
    p_execute: float = Field(0.07, ge=0)
    max_live: int = Field(80, ge=1, description="per-side live-order ceiling of the stream")
    mean_interarrival_ns: int = Field(1_000_000, ge=0)
    start_time_ns: int = Field(34_200 * 10**9, ge=0)
    snapshot_depth: int = Field(10, ge=1)
    state_interval: int = Field(100, ge=1)
    capacity: int = Field(100, ge=1)

    @model_validator(mode="after")
    def _check(self):
        total = self.p_limit + self.p_marketable + self.p_delete + self.p_cancel + self.p_execute
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"event probabilities must sum to 1, got {total}")
        if self.qty_max < self.qty_min:
            raise ValueError("qty_max < qty_min")
        if self.max_live > self.capacity:
            raise ValueError("max_live exceeds capacity")
        if self.initial_levels > min(self.snapshot_depth, self.capacity):
            raise ValueError("initial_levels exceeds snapshot_depth or capacity")
        return self


class DataConfig(_Model):
    source: Literal["synthetic", "lobster"] = "synthetic"
    seed: int = 0
    synthetic: SynthConfig = SynthConfig()
    message_path: str | None = None
    orderbook_path: str | None = None
    tick_size: float = Field(0.01, gt=0)
    state_interval: int = Field(100, ge=1)
    eval_episodes: int = Field(16, ge=0, description="trailing episodes held out for evaluation")

    @model_validator(mode="after")
    def _paths(self):
        if self.source == "lobster":
            for name in ("message_path", "orderbook_path"):
                if not getattr(self, name):
                    raise ValueError(f"{name} is required when source is 'lobster'")
        return self


# -- agents -------------------------------------------------------------------
class AgentType(str, Enum):
    MARKET_MAKER = "market_maker"
    EXECUTOR = "executor"
    DIRECTIONAL = "directional"


ActionSpace = Literal["fixed_quant", "spread_skew", "avst", "exec_simple", "exec_complex",
                      "directional"]
ObservationSpace = Literal["mm_basic", "mm_rich", "exec_basic", "exec_rich"]
RewardName = Literal["spooner", "buysell", "exec"]

_ALLOWED = {
    AgentType.MARKET_MAKER: ({"fixed_quant", "spread_skew", "avst"}, {"mm_basic", "mm_rich"},
                             {"spooner", "buysell"}),
    AgentType.DIRECTIONAL: ({"directional"}, {"mm_basic", "mm_rich"}, {"spooner", "buysell"}),
    AgentType.EXECUTOR: ({"exec_simple", "exec_complex"}, {"exec_basic", "exec_rich"}, {"exec"}),
}

# FixedQuant rows: (bid offset, ask offset) in ticks away from the own-side best
# price (negative = into the spread); None = no order on that side.
DEFAULT_FIXED_QUANT = (
    (None, None), (2, 2), (4, 4), (-1, -1), (2, 0), (0, 2), (5, -1), (-1, 5),
)


class AvStParams(_Model):
    gamma_grid: tuple[float, ...] = (0.01, 0.1, 0.5, 1.0)
    sigma: float = Field(1.0, gt=0, description="mid volatility, ticks per unit time")
    kappa: float = Field(1.5, gt=0, description="order-arrival decay")
    horizon: float = Field(1.0, gt=0, description="T; one episode spans [0, T]")
    inventory_unit: int | None = Field(None, ge=1, description="lots per unit of I (order size)")


class AgentParams(_Model):
    order_size: int = Field(10, ge=1)
    # rewards
    reward_lambda: float = Field(0.5, ge=0, le=1)
    inventory_penalty: Literal["quadratic", "none"] = "quadratic"
    rho: float = Field(50.0, ge=0)
    inventory_cap: int = Field(100, ge=1)
    reference_price: Literal["mid", "far_touch"] = "mid"
    # executor
    task_size: int = Field(600, ge=0)
    exec_lambda: float = Field(0.0, ge=0, le=1)
    unfilled_penalty_coef: float = Field(0.1, ge=0)
    task_direction: Literal["random", "buy", "sell"] = "random"
    # action-space tables
    fixed_quant_table: tuple[tuple[int | None, int | None], ...] = DEFAULT_FIXED_QUANT
    spread_skew_table: tuple[tuple[float, float], ...] = tuple(
        (s, k) for s in (1, 2, 3) for k in (-1, 0, 1))
    default_half_spread: float = Field(1.0, gt=0)
    avst: AvStParams = AvStParams()
    exec_multipliers: tuple[int, ...] = (1, 2, 5)


class AgentSpec(_Model):
    name: str
    type: AgentType
    count: int = Field(1, ge=1)
    action_space: ActionSpace
    observation_space: ObservationSpace
    reward: RewardName
    params: AgentParams = AgentParams()

    @model_validator(mode="after")
    def _compatible(self):
        acts, obs, rews = _ALLOWED[self.type]
        if self.action_space not in acts:
            raise ValueError(f"action_space {self.action_space!r} invalid for {self.type.value}")
        if self.observation_space not in obs:
            raise ValueError(
                f"observation_space {self.observation_space!r} invalid for {self.type.value}")
        if self.reward not in rews:
            raise ValueError(f"reward {self.reward!r} invalid for {self.type.value}")
        return self


def default_agents() -> tuple[AgentSpec, ...]:
    return (
        AgentSpec(name="mm", type=AgentType.MARKET_MAKER, action_space="fixed_quant",
                  observation_space="mm_basic", reward="spooner"),
        AgentSpec(name="exec", type=AgentType.EXECUTOR, action_space="exec_complex",
                  observation_space="exec_basic", reward="exec"),
    )


class EnvConfig(_Model):
    steps_per_episode: int = Field(64, ge=1)
    messages_per_step: int = Field(100, ge=1)
    start_stride_steps: int = Field(64, ge=1)
    book_capacity: int = Field(100, ge=1)
    obs_depth: int = Field(5, ge=1)
    allow_self_trade: bool = True
    protect_agent_orders: bool = False
    agents: tuple[AgentSpec, ...] = Field(default_factory=default_agents)

    @field_validator("agents")
    @classmethod
    def _unique(cls, v):
        names = [a.name for a in v]
        if len(set(names)) != len(names):
            raise ValueError("agent names must be unique")
        return v


# -- training / evaluation / bench ----------------------------------------------
class TrainConfig(_Model):
    num_envs: int = Field(64, ge=1)
    rollout_length: int = Field(64, ge=1)
    updates: int = Field(10, ge=1)
    epochs: int = Field(4, ge=1)
    minibatches: int = Field(4, ge=1)
    clip_eps: float = Field(0.2, gt=0, lt=1)
    gamma: float = Field(0.99, gt=0, le=1)
    gae_lambda: float = Field(0.95, ge=0, le=1)
    vf_coef: float = Field(0.5, ge=0)
    ent_coef: float = Field(0.01, ge=0)
    lr: float = Field(3e-4, gt=0)
    max_grad_norm: float = Field(0.5, gt=0)
    hidden_size: int = Field(64, ge=1, le=128)
    reward_scale: dict[str, float] = Field(default_factory=dict)
    seed: int = 0
    workers: int = Field(1, ge=1)
    eval_interval: int = Field(0, ge=0, description="0 = evaluate held-out episodes at the end only")
    eval_episodes: int = Field(8, ge=1)
    checkpoint_interval: int = Field(0, ge=0)


class EvalConfig(_Model):
    episodes: int = Field(16, ge=1)
    seed: int = 12345
    avst_gamma_index: int = Field(1, ge=0)
    twap_mode: Literal["aggressive", "passive"] = "aggressive"


class BenchConfig(_Model):
    n_envs: int = Field(4000, ge=1)
    n_steps: int = Field(50, ge=1)
    messages_per_step: tuple[int, ...] = (100, 1)
    agents_per_type: tuple[int, ...] = (1, 5, 10)
    workers: tuple[int, ...] = (1,)
    warmup_steps: int = Field(5, ge=0)
    data_episodes: int = Field(16, ge=1)
    seed: int = 0


class RunConfig(_Model):
    data: DataConfig = DataConfig()
    env: EnvConfig = EnvConfig()
    train: TrainConfig = TrainConfig()
    eval: EvalConfig = EvalConfig()
    bench: BenchConfig = BenchConfig()


# -- loading ---------------------------------------------------------------------
def _set_dotted(tree: dict, key: str, value: Any) -> None:
    parts = key.split(".")
    node = tree
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ValueError(f"override {key!r}: {p!r} is not a section")
    node[parts[-1]] = value


def parse_override(text: str) -> tuple[str, Any]:
    key, sep, raw = text.partition("=")
    if not sep or not key:
        raise ValueError(f"override {text!r} must look like key.path=value")
    return key.strip(), yaml.safe_load(raw)


def load_config(path=None, overrides=(), env_paths: dict[str, str] | None = None) -> RunConfig:
    """Read YAML, apply dotted ``key=value`` overrides, then validate.

    ``env_paths`` maps dotted path keys to values taken from environment
    variables (paths only).
    """
    tree: dict = {}
    if path is not None:
        with open(path) as fh:
            tree = yaml.safe_load(fh) or {}
        if not isinstance(tree, dict):
            raise ValueError(f"{path}: top level must be a mapping")
    for key, value in (env_paths or {}).items():
        _set_dotted(tree, key, value)
    for item in overrides:
        _set_dotted(tree, *parse_override(item))
    return RunConfig.model_validate(tree)


def config_to_dict(cfg: BaseModel) -> dict:
    return cfg.model_dump(mode="json")


def config_hash(cfg: BaseModel) -> str:
    blob = json.dumps(config_to_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]
