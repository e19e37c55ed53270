"""Baseline DRL agents that consume (optionally shaped) rewards."""

from .reinforce import ReinforceAgent, ReinforceConfig, discounted_returns
from .sac import SacAgent, SacConfig
from .td3 import DdpgConfig, Td3Agent, Td3Config, make_ddpg

__all__ = [
    "DdpgConfig",
    "ReinforceAgent",
    "ReinforceConfig",
    "SacAgent",
    "SacConfig",
    "Td3Agent",
    "Td3Config",
    "discounted_returns",
    "make_ddpg",
]
