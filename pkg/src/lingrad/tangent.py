"""Forward (tangent) linearisation of a network about a trajectory."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .net import (ConfigurationError, Network, ObjectiveGradients, ParamSet,
                  StateTrajectory, forward, unit_jacobian)


@dataclass(frozen=True)
class TangentSolution:
    """Per-state products ``v_i * psi``; entry 0 is identically zero."""

    vpsi: tuple
    psi: float

    def v(self) -> tuple:
        """Unscaled tangent ``v_i``; needs ``psi != 0``."""
        if self.psi == 0:
            raise ZeroDivisionError("cannot recover v from v*psi at psi = 0")
        if self.psi == 1.0:
            return self.vpsi
        return tuple(v / self.psi for v in self.vpsi)


@dataclass(frozen=True)
class Propagator:
    """``D`` maps a homogeneous tangent at state ``l`` to state ``i``."""

    D: np.ndarray
    l: int
    i: int


def _check_direction(net: Network, direction: ParamSet):
    if not direction.same_shape(net.params):
        raise ConfigurationError("direction does not match the network parameters")


def tangent_exact(net: Network, traj: StateTrajectory, direction: ParamSet,
                  psi: float) -> TangentSolution:
    _check_direction(net, direction)
    psi = float(psi)
    vpsi = [np.zeros_like(traj.states[0])]
    for k, unit in enumerate(net.units):
        jac = unit_jacobian(net, traj, k)
        z = 0.0
        for w, src in zip(jac.weights, unit.sources):
            z = z + vpsi[src] @ w.T
        for s, u in zip(direction.weights[k], jac.inputs):
            z = z + (u @ s.T) * psi
        z = z + direction.biases[k] * psi
        vpsi.append(jac.lam * z)
    return TangentSolution(tuple(vpsi), psi)


def tangent_fd(net: Network, traj_old: StateTrajectory, direction: ParamSet,
               psi: float, delta: float = 1e-6) -> TangentSolution:
    """One-sided finite-difference tangent from one extra forward pass."""
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")
    _check_direction(net, direction)
    new = forward(net.perturbed(direction, delta), traj_old.states[0])
    ratio = float(psi) / delta
    vpsi = tuple((un - uo) * ratio for un, uo in zip(new.states, traj_old.states))
    return TangentSolution(vpsi, float(psi))


def _homogeneous_forward(net, traj, l, i, w_l):
    """Propagate rows of ``w_l`` from state ``l`` to state ``i`` (states < l are 0)."""
    n = w_l.shape[0]
    w = {l: w_l}
    for k in range(l, i):
        unit = net.units[k]
        jac = unit_jacobian(net, traj, k)
        z = np.zeros((n, net.widths[k + 1]))
        for wt, src in zip(jac.weights, unit.sources):
            if src in w:
                z += w[src] @ wt.T
        w[k + 1] = jac.lam * z
    return w[i]


def propagator(net: Network, traj: StateTrajectory, l: int, i: int) -> Propagator:
    """Assemble ``D_l^i`` column by column from Jacobian actions."""
    if traj.batched:
        raise ConfigurationError("propagators are assembled for a single sample")
    if not 0 <= l <= i <= net.n_layers:
        raise ValueError(f"need 0 <= l <= i <= {net.n_layers}, got l={l}, i={i}")
    cols = _homogeneous_forward(net, traj, l, i, np.eye(net.widths[l]))
    return Propagator(cols.T.copy(), l, i)


def tangent_duhamel(net: Network, traj: StateTrajectory,
                    direction: ParamSet) -> TangentSolution:
    """Tangent at ``psi = 1`` as a sum of homogeneous solutions, one per source."""
    _check_direction(net, direction)
    if traj.batched:
        raise ConfigurationError("Duhamel reconstruction is per sample")
    sources = []
    for k in range(net.n_layers):
        jac = unit_jacobian(net, traj, k)
        sources.append(jac.param_action(direction.weights[k], direction.biases[k]))
    v = [np.zeros(net.widths[0])]
    for i in range(1, net.n_layers + 1):
        total = np.zeros(net.widths[i])
        for l in range(i):
            total += propagator(net, traj, l + 1, i).D @ sources[l]
        v.append(total)
    return TangentSolution(tuple(v), 1.0)


def sensitivity_tangent(grads: ObjectiveGradients, tan: TangentSolution,
                        direction: ParamSet | None = None):
    """``dJ/dpsi = sum_i J_ui v_i + J_si sigma_i`` (per sample for batches)."""
    v = tan.v()
    total = 0.0
    for g, vi in zip(grads.dJ_du, v):
        total = total + np.sum(g * vi, axis=-1)
    if direction is not None and grads.dJ_ds is not None:
        total = total + grads.dJ_ds.dot(direction)
    return float(total) if np.ndim(total) == 0 else total
