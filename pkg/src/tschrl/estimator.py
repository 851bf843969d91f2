"""Scikit-learn style front end: fit on a topology, predict schedules for requirements."""
from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils import check_array
from sklearn.utils.validation import check_is_fitted

from .dqn import TrainConfig
from .env import EnvConfig, Requirements
from .exceptions import ConfigurationError, ContractError
from .experiments import analytic_report
from .hrl import PolicyBank, synthesize, train_bank
from .netmodel import NetworkGraph, build_graph, positions_from_array


def check_topology(topology, tx_range: float, if_range: float | None) -> NetworkGraph:
    """Accept a graph or an ``(n, 3)`` array of ``(node_id, x, y)`` rows."""
    if isinstance(topology, NetworkGraph):
        return topology
    arr = check_array(topology, dtype=np.float64, ensure_min_samples=2)
    if arr.shape[1] != 3:
        raise ConfigurationError(f"topology rows must be (node_id, x, y), got {arr.shape[1]} columns")
    if not np.all(arr[:, 0] == np.round(arr[:, 0])):
        raise ConfigurationError("node ids must be integers")
    return build_graph(positions_from_array(arr), tx_range, if_range)


def check_requirements(phi) -> list[Requirements]:
    """Rows of ``(alpha, beta, gamma)``; a single triple is accepted too."""
    if isinstance(phi, Requirements):
        return [phi]
    arr = check_array(phi, dtype=np.float64, ensure_2d=False)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.shape[1] != 3:
        raise ContractError(f"requirement rows must have 3 weights, got {arr.shape[1]}")
    return [Requirements(*(float(x) for x in row)) for row in arr]


class TschScheduler(BaseEstimator):
    """Learns a scheduling policy bank for one topology.

    ``fit(topology)`` trains every link-level policy and the link selector;
    ``predict(phi)`` returns one schedule per requirement row and
    ``transform(phi)`` their analytic ``[P, D, T]``.
    """

    def __init__(self, env_config: EnvConfig | None = None, train_config: TrainConfig | None = None,
                 tx_range: float = 50.0, if_range: float | None = 100.0, budget: int | None = None,
                 seed: int = 0, jobs: int = 1):
        self.env_config = env_config
        self.train_config = train_config
        self.tx_range = tx_range
        self.if_range = if_range
        self.budget = budget
        self.seed = seed
        self.jobs = jobs

    def _check_params(self) -> None:
        if self.jobs < 1:
            raise ConfigurationError("jobs must be at least 1")
        if self.budget is not None and self.budget < 0:
            raise ConfigurationError("budget must be non-negative")
        if not (isinstance(self.tx_range, (int, float)) and math.isfinite(self.tx_range)):
            raise ConfigurationError("tx_range must be a finite number")

    def fit(self, topology, y=None) -> "TschScheduler":
        self._check_params()
        graph = check_topology(topology, self.tx_range, self.if_range)
        train = (self.train_config or TrainConfig.desk()).with_seed(self.seed)
        self.bank_ = train_bank(graph, self.env_config or EnvConfig(), train, jobs=self.jobs)
        self._set_fitted()
        return self

    @classmethod
    def from_bank(cls, bank: PolicyBank, budget: int | None = None, seed: int = 0) -> "TschScheduler":
        """Wrap an already trained bank without retraining."""
        bank.check_complete()
        est = cls(env_config=bank.env_config, train_config=bank.train_config,
                  tx_range=bank.graph.tx_range, if_range=bank.graph.if_range, budget=budget,
                  seed=seed)
        est.bank_ = bank
        est._set_fitted()
        return est

    def _set_fitted(self) -> None:
        self.graph_ = self.bank_.graph
        self.n_links_ = self.bank_.n_links
        self.config_hash_ = self.bank_.config_hash

    def predict(self, phi) -> list:
        check_is_fitted(self, "bank_")
        return [synthesize(self.bank_, r, self.budget, self.seed).schedule
                for r in check_requirements(phi)]

    def transform(self, phi) -> np.ndarray:
        """Analytic ``[P (mW), D (ms), T (pkt/s)]`` of the predicted schedules."""
        out = []
        for s in self.predict(phi):
            rep = analytic_report(self.bank_, s)
            out.append([rep.P, rep.D, rep.T])
        return np.asarray(out, dtype=np.float64).reshape(-1, 3)
