"""TSCH link scheduling with a two-level deep Q-learning agent."""

__version__ = "0.1.0"

from .env import EnvConfig, Requirements, SchedulingEnv, phi_grid
from .hrl import PolicyBank, synthesize, train_bank
from .metrics import EnergyProfile, TrafficProfile, evaluate
from .netmodel import NetworkGraph, build_forwarding_tree, build_graph, default_topology
from .schedule import TschSchedule, add_link, lookup_next, remove_link

__all__ = [
    "EnergyProfile", "EnvConfig", "NetworkGraph", "PolicyBank", "Requirements",
    "SchedulingEnv", "TrafficProfile", "TschSchedule", "add_link", "build_forwarding_tree",
    "build_graph", "default_topology", "evaluate", "lookup_next", "phi_grid", "remove_link",
    "synthesize", "train_bank",
]
