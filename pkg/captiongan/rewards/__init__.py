from captiongan.rewards.semantic import RewardConfig, RewardBreakdown
from captiongan.rewards.semantic import AggregateEmbedding, RewardScorer
from captiongan.rewards.semantic import reward_cos, reward_agg, reward_mix
from captiongan.rewards.semantic import aggregate, ramp_weight, combined_reward
from captiongan.rewards.cache import AggregateCache

__all__ = [
    "RewardConfig",
    "RewardBreakdown",
    "AggregateEmbedding",
    "RewardScorer",
    "reward_cos",
    "reward_agg",
    "reward_mix",
    "aggregate",
    "ramp_weight",
    "combined_reward",
    "AggregateCache",
]
