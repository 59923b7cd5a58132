"""linGrad and fixed-stepsize SGD over minibatches.

Per-sample work inside a minibatch is vectorised over the batch axis; every
reduction is a plain mean along that axis, so results do not depend on any
worker layout.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .adjoint import adjoint_solve, steepest_direction
from .data import METRICS, Dataset, rng_streams
from .linrange import (DegenerateDirectionError, linear_range_stepsize,
                       measure_for_update, measure_with_escalation)
from .net import (ConfigurationError, Network, ParamSet, Quadratic, forward,
                  objective_gradients, objective_value)

log = logging.getLogger(__name__)


@dataclass
class TrainerConfig:
    epsilon_star: float = 0.3
    batch_size: int = 10
    n_lin: int = 100
    n_hist: int | None = None
    psi0: float = 0.1
    epochs: int = 1
    seed: int = 0
    algorithm: str = "lingrad"
    tangent: str | None = None
    fd_delta: float = 1e-6
    metric: str = "distance"
    objective_scale: float = 1.0

    def __post_init__(self):
        if not 0 < self.epsilon_star <= 2:
            raise ConfigurationError("epsilon_star must lie in (0, 2]")
        for key in ("batch_size", "n_lin"):
            if int(getattr(self, key)) < 1:
                raise ConfigurationError(f"{key} must be at least 1")
        if self.n_hist is not None and self.n_hist < 1:
            raise ConfigurationError("n_hist must be at least 1")
        if self.epochs < 0:
            raise ConfigurationError("epochs must be non-negative")
        if self.algorithm == "lingrad" and not self.psi0 > 0:
            raise ConfigurationError("psi0 must be positive")
        if self.algorithm == "sgd" and self.psi0 < 0:
            raise ConfigurationError("psi0 must be non-negative")
        if self.algorithm not in ("lingrad", "sgd"):
            raise ConfigurationError(f"unknown algorithm {self.algorithm!r}")
        if self.tangent not in (None, "exact", "fd"):
            raise ConfigurationError(f"unknown tangent mode {self.tangent!r}")
        if not self.fd_delta > 0:
            raise ConfigurationError("fd_delta must be positive")
        if self.metric not in METRICS:
            raise ConfigurationError(f"unknown metric {self.metric!r}")

    def resolved_n_hist(self, n_batches: int) -> int:
        if self.n_hist is not None:
            return self.n_hist
        return max(50, n_batches // self.n_lin)

    def tangent_mode(self, net: Network):
        mode = self.tangent or ("exact" if net.is_dense else "fd")
        return ("fd", self.fd_delta) if mode == "fd" else "exact"


@dataclass
class StepsizeHistory:
    """Append-only stepsize candidates; the current stepsize is a windowed min."""

    n_hist: int
    current_psi: float
    candidates: list = field(default_factory=list)

    def append(self, candidate: float) -> float:
        self.candidates.append(float(candidate))
        self.current_psi = min(self.candidates[-self.n_hist:])
        return self.current_psi


@dataclass
class StepResult:
    psi: float
    epsilon: float | None
    objective: float
    skipped: bool = False
    update: ParamSet | None = None


@dataclass
class TrainerState:
    net: Network
    config: TrainerConfig
    history: StepsizeHistory
    events: list = field(default_factory=list)
    last: StepResult | None = None

    @classmethod
    def create(cls, net: Network, config: TrainerConfig, n_hist: int | None = None):
        n_hist = n_hist or config.n_hist or 50
        return cls(net, config, StepsizeHistory(n_hist, config.psi0))


@dataclass
class TrainRecord:
    """``rows``: (epoch, minibatch, psi, epsilon or None, objective);
    ``epochs``: (epoch, test metric), with epoch 0 the initial network."""

    rows: list = field(default_factory=list)
    epochs: list = field(default_factory=list)
    events: list = field(default_factory=list)
    net: Network | None = None


def _batch_direction(state, X, Y):
    net = state.net
    traj = forward(net, X)
    spec = Quadratic(Y, state.config.objective_scale)
    grads = objective_gradients(spec, traj)
    adj = adjoint_solve(net, traj, grads)
    direction = steepest_direction(adj, net, traj)
    return traj, direction, float(np.mean(objective_value(spec, traj)))


def _apply(state, direction, psi, objective, epsilon):
    update = direction * psi
    state.net = state.net.with_params(state.net.params + update)
    state.last = StepResult(psi, epsilon, objective, False, update)
    return state


def _skip(state, objective, reason):
    log.info("skipping update: %s", reason)
    state.events.append(reason)
    state.last = StepResult(state.history.current_psi, None, objective, True, None)
    return state


def lingrad_minibatch(state: TrainerState, X, Y, measure: bool) -> TrainerState:
    """One linGrad step on the batch ``(X, Y)``; mutates and returns ``state``.

    The direction is the batch mean of per-sample steepest directions.  When
    ``measure`` is set, each sample is measured against that shared direction
    at the current stepsize, and the mean measurement feeds a new candidate.
    """
    X = np.atleast_2d(X)
    Y = np.atleast_2d(Y)
    if X.shape[0] == 0:
        raise ValueError("empty minibatch")
    traj, direction, objective = _batch_direction(state, X, Y)
    if direction.is_zero():
        return _skip(state, objective, "zero gradient on every sample")
    epsilon = None
    if measure:
        cfg = state.config
        mode = cfg.tangent_mode(state.net)
        try:
            psi_used, epsilon = measure_with_escalation(
                lambda p: measure_for_update(state.net, X, direction, p, mode,
                                             traj_old=traj),
                state.history.current_psi)
        except DegenerateDirectionError as exc:
            return _skip(state, objective, f"degenerate direction: {exc}")
        state.history.append(linear_range_stepsize(psi_used, epsilon, cfg.epsilon_star))
    return _apply(state, direction, state.history.current_psi, objective, epsilon)


def sgd_minibatch(state: TrainerState, X, Y) -> TrainerState:
    """Fixed-stepsize step sharing the linGrad update path."""
    X = np.atleast_2d(X)
    Y = np.atleast_2d(Y)
    traj, direction, objective = _batch_direction(state, X, Y)
    if direction.is_zero():
        return _skip(state, objective, "zero gradient on every sample")
    return _apply(state, direction, state.history.current_psi, objective, None)


def train(config: TrainerConfig, train_set: Dataset, test_set: Dataset,
          net: Network, progress=None) -> TrainRecord:
    """Run ``config.epochs`` epochs and return the full record.

    Samples are reshuffled every epoch from the ``shuffle`` stream of
    ``config.seed``; a trailing partial minibatch is dropped.
    """
    for ds in (train_set, test_set):
        if ds.X.shape[1] != net.widths[0] or ds.Y.shape[1] != net.widths[-1]:
            raise ConfigurationError(
                f"dataset widths ({ds.X.shape[1]}, {ds.Y.shape[1]}) do not match "
                f"network ({net.widths[0]}, {net.widths[-1]})")
    n_s = config.batch_size
    n_batches = len(train_set) // n_s
    if n_batches < 1:
        raise ConfigurationError(f"training set smaller than batch size {n_s}")
    metric = METRICS[config.metric]
    state = TrainerState.create(net, config, config.resolved_n_hist(n_batches))
    rng = rng_streams(config.seed)["shuffle"]
    record = TrainRecord(epochs=[(0, metric(net, test_set))])
    lingrad = config.algorithm == "lingrad"
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(train_set))
        for b in range(n_batches):
            idx = order[b * n_s:(b + 1) * n_s]
            X, Y = train_set.X[idx], train_set.Y[idx]
            if lingrad:
                lingrad_minibatch(state, X, Y, measure=(b % config.n_lin == 0))
            else:
                sgd_minibatch(state, X, Y)
            step = state.last
            record.rows.append((epoch, b, step.psi, step.epsilon, step.objective))
        record.epochs.append((epoch, metric(state.net, test_set)))
        if progress is not None:
            progress(epoch, record)
    record.events = list(state.events)
    record.net = state.net
    return record
