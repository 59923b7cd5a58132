"""Reverse (adjoint) solutions, backpropagation and descent directions.

Adjoints are row vectors stored as plain arrays; "multiply on the left" is
implied, so ``a f_u`` is computed as ``W^T (Lambda a)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .net import (ConfigurationError, Network, ObjectiveGradients, ParamSet,
                  StateTrajectory, unit_jacobian)
from .tangent import Propagator, _check_direction


@dataclass(frozen=True)
class AdjointSolution:
    """``av[l]`` for ``l = 0 .. I + 1``; the terminal entry is zero."""

    av: tuple


def adjoint_solve(net: Network, traj: StateTrajectory,
                  grads: ObjectiveGradients) -> AdjointSolution:
    if len(grads.dJ_du) != net.n_layers + 1:
        raise ConfigurationError("objective gradients do not match the network depth")
    acc = [np.array(g, dtype=np.float64, copy=True) for g in grads.dJ_du]
    for k in range(net.n_layers - 1, -1, -1):
        jac = unit_jacobian(net, traj, k)
        for src, contrib in zip(net.units[k].sources, jac.adjoint_action(acc[k + 1])):
            acc[src] += contrib
    acc.append(np.zeros_like(acc[-1]))
    return AdjointSolution(tuple(acc))


def _source_terms(net, traj, direction):
    """``f_{s,k} sigma_k`` for every unit."""
    out = []
    for k in range(net.n_layers):
        jac = unit_jacobian(net, traj, k)
        out.append(jac.param_action(direction.weights[k], direction.biases[k]))
    return out


def sensitivity_adjoint(adj: AdjointSolution, net: Network, traj: StateTrajectory,
                        grads: ObjectiveGradients, direction: ParamSet):
    """``sum_{l>=1} av_l f_{s,l-1} sigma_{l-1} + sum_l J_sl sigma_l``."""
    _check_direction(net, direction)
    total = 0.0
    for l, src in enumerate(_source_terms(net, traj, direction), start=1):
        total = total + np.sum(adj.av[l] * src, axis=-1)
    if grads.dJ_ds is not None:
        total = total + grads.dJ_ds.dot(direction)
    return float(total) if np.ndim(total) == 0 else total


def gradient_backprop(adj: AdjointSolution, net: Network, traj: StateTrajectory,
                      grads: ObjectiveGradients | None = None) -> ParamSet:
    """``dJ/ds_l = av_{l+1} f_{s,l}`` (plus ``J_sl`` when given).

    For a batched trajectory the per-sample gradients are averaged.
    """
    weights, biases = [], []
    for k, unit in enumerate(net.units):
        jac = unit_jacobian(net, traj, k)
        g = jac.lam * adj.av[k + 1]
        if g.ndim == 2:
            n = g.shape[0]
            weights.append([g.T @ u / n for u in jac.inputs])
            biases.append(g.mean(axis=0))
        else:
            weights.append([np.outer(g, u) for u in jac.inputs])
            biases.append(g.copy())
    grad = ParamSet(weights, biases)
    if grads is not None and grads.dJ_ds is not None:
        grad = grad + grads.dJ_ds
    return grad


def steepest_direction(adj: AdjointSolution, net: Network, traj: StateTrajectory,
                       grads: ObjectiveGradients | None = None) -> ParamSet:
    return -gradient_backprop(adj, net, traj, grads)


def _homogeneous_reverse(net, traj, i, l, a_i):
    """Propagate rows of ``a_i`` from state ``i`` back to ``l`` (states > i are 0)."""
    a = {i: a_i}
    for k in range(i - 1, l - 1, -1):
        if k + 1 not in a:
            continue
        jac = unit_jacobian(net, traj, k)
        for src, contrib in zip(net.units[k].sources, jac.adjoint_action(a[k + 1])):
            if src < l:
                continue
            a[src] = a[src] + contrib if src in a else contrib
    return a.get(l, np.zeros((a_i.shape[0], net.widths[l])))


def adjoint_propagator(net: Network, traj: StateTrajectory, i: int, l: int) -> Propagator:
    """Reverse-assembled operator mapping a row adjoint at ``i`` to ``l``."""
    if traj.batched:
        raise ConfigurationError("propagators are assembled for a single sample")
    if not 0 <= l <= i <= net.n_layers:
        raise ValueError(f"need 0 <= l <= i <= {net.n_layers}, got l={l}, i={i}")
    rows = _homogeneous_reverse(net, traj, i, l, np.eye(net.widths[i]))
    return Propagator(np.array(rows), l, i)


def adjoint_duhamel(net: Network, traj: StateTrajectory,
                    grads: ObjectiveGradients) -> AdjointSolution:
    """``av_l = sum_{i>=l} J_ui Dhat_i^l`` assembled from reverse propagators."""
    if traj.batched:
        raise ConfigurationError("Duhamel reconstruction is per sample")
    I = net.n_layers
    av = []
    for l in range(I + 1):
        total = np.zeros(net.widths[l])
        for i in range(l, I + 1):
            if np.any(grads.dJ_du[i]):
                total += grads.dJ_du[i] @ adjoint_propagator(net, traj, i, l).D
        av.append(total)
    av.append(np.zeros(net.widths[I]))
    return AdjointSolution(tuple(av))
