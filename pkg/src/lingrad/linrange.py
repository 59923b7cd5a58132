"""Nonlinear measurement of a parameter change and the linear range on stepsize."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .net import ConfigurationError, Network, ParamSet, StateTrajectory, forward
from .tangent import TangentSolution, tangent_exact, tangent_fd

log = logging.getLogger(__name__)

# Layers whose tangent norm falls below this are left out of the average.
TINY_NORM = 1e-300
ESCALATION_FACTOR = 10.0
MAX_ESCALATIONS = 5


class DegenerateDirectionError(ValueError):
    """Every counted layer has a zero tangent, so the measurement is undefined."""


class MeasureTooSmallError(ArithmeticError):
    """The measurement is exactly zero; retry with a larger stepsize."""


class EscalationExhaustedError(RuntimeError):
    pass


@dataclass(frozen=True)
class NonlinearMeasurement:
    epsilon: float
    per_layer: tuple
    skipped_layers: tuple


def _counted(traj: StateTrajectory) -> tuple:
    return tuple(i for i in traj.boundaries if i > 0)


def _deviations(traj_old, traj_new, tan):
    """Relative deviations, shape ``(..., n_counted)``, and skip mask."""
    if len(traj_old.states) != len(traj_new.states) or len(tan.vpsi) != len(traj_old.states):
        raise ConfigurationError("trajectories and tangent differ in depth")
    layers = _counted(traj_old)
    rel, skip = [], []
    for i in layers:
        uo, un, vp = traj_old.states[i], traj_new.states[i], tan.vpsi[i]
        if uo.shape != un.shape or uo.shape != vp.shape:
            raise ConfigurationError(f"state {i} shapes differ between inputs")
        den = np.linalg.norm(vp, axis=-1)
        num = np.linalg.norm(un - uo - vp, axis=-1)
        small = den < TINY_NORM
        rel.append(np.where(small, 0.0, num / np.where(small, 1.0, den)))
        skip.append(small)
    return layers, np.stack(rel, axis=-1), np.stack(skip, axis=-1)


def nonlinear_measurement(traj_old: StateTrajectory, traj_new: StateTrajectory,
                          tan: TangentSolution) -> NonlinearMeasurement:
    """Layer-averaged relative l2 gap between the actual and linearised change.

    Only block-boundary states are counted, which for dense networks means
    every state after the input.
    """
    if traj_old.batched:
        raise ConfigurationError("use batch_epsilon for batched trajectories")
    layers, rel, skip = _deviations(traj_old, traj_new, tan)
    if skip.all():
        raise DegenerateDirectionError("tangent is zero on every counted layer")
    kept = rel[~skip]
    return NonlinearMeasurement(float(kept.mean()),
                                tuple(float(r) for r in rel),
                                tuple(i for i, s in zip(layers, skip) if s))


def batch_epsilon(traj_old: StateTrajectory, traj_new: StateTrajectory,
                  tan: TangentSolution) -> np.ndarray:
    """Per-sample measurements for a batch; NaN marks a fully degenerate sample."""
    _, rel, skip = _deviations(traj_old, traj_new, tan)
    n_kept = (~skip).sum(axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(n_kept > 0, rel.sum(axis=-1) / n_kept, np.nan)


def _tangent(net, traj, direction, psi, tangent):
    if tangent == "exact":
        return tangent_exact(net, traj, direction, psi)
    if isinstance(tangent, tuple) and tangent[0] == "fd":
        return tangent_fd(net, traj, direction, psi, tangent[1])
    if tangent == "fd":
        return tangent_fd(net, traj, direction, psi)
    raise ConfigurationError(f"unknown tangent mode {tangent!r}")


def measure_for_update(net: Network, x, direction: ParamSet, psi: float,
                       tangent="exact", traj_old: StateTrajectory | None = None):
    """Measure the update ``s + direction * psi`` without changing ``net``.

    ``tangent`` is ``"exact"``, ``"fd"`` or ``("fd", delta)``.  A single
    sample returns a :class:`NonlinearMeasurement`; a batch returns the mean
    over samples as a float.
    """
    if not psi > 0:
        raise ValueError(f"psi must be positive, got {psi}")
    if direction.is_zero():
        raise DegenerateDirectionError("zero perturbation direction")
    if traj_old is None:
        traj_old = forward(net, x)
    tan = _tangent(net, traj_old, direction, psi, tangent)
    traj_new = forward(net.perturbed(direction, psi), traj_old.states[0])
    if not traj_old.batched:
        return nonlinear_measurement(traj_old, traj_new, tan)
    eps = batch_epsilon(traj_old, traj_new, tan)
    ok = ~np.isnan(eps)
    if not ok.any():
        raise DegenerateDirectionError("tangent is zero for every sample")
    return float(eps[ok].mean())


def linear_range_stepsize(psi: float, epsilon: float, epsilon_star: float) -> float:
    if not psi > 0 or not epsilon_star > 0 or epsilon < 0:
        raise ValueError("need psi > 0, epsilon >= 0 and epsilon_star > 0")
    if epsilon == 0:
        raise MeasureTooSmallError("epsilon is zero; enlarge psi and measure again")
    return psi * epsilon_star / epsilon


def measure_with_escalation(measure, psi: float, factor: float = ESCALATION_FACTOR,
                            max_retries: int = MAX_ESCALATIONS):
    """Call ``measure(psi)`` and multiply ``psi`` by ``factor`` while it returns 0.

    Returns ``(psi_used, epsilon)``.
    """
    for attempt in range(max_retries + 1):
        eps = float(measure(psi))
        if eps > 0:
            return psi, eps
        if attempt < max_retries:
            log.info("epsilon is zero at psi=%g; retrying at psi=%g", psi, psi * factor)
            psi *= factor
    raise EscalationExhaustedError(
        f"epsilon stayed zero after {max_retries} escalations (last psi={psi:g})")


def scan_linear_range(net: Network, x, direction: ParamSet, epsilon_star: float,
                      psi_start: float = 1e-8, factor: float = 2.0,
                      psi_max: float = 1e8, tangent="exact", rtol: float = 1e-3) -> float:
    """First ``psi`` at which epsilon reaches ``epsilon_star``.

    Walks a geometric grid upwards from ``psi_start``, then bisects (in log
    space) the first bracketing interval down to relative width ``rtol``.
    """
    traj = forward(net, x)

    def eps_at(p):
        m = measure_for_update(net, x, direction, p, tangent, traj_old=traj)
        return m if isinstance(m, float) else m.epsilon

    lo, hi = None, psi_start
    while eps_at(hi) < epsilon_star:
        lo, hi = hi, hi * factor
        if hi > psi_max:
            raise ValueError(f"epsilon stayed below {epsilon_star} up to psi={psi_max:g}")
    if lo is None:
        return hi
    while hi / lo - 1 > rtol:
        mid = np.sqrt(lo * hi)
        if eps_at(mid) < epsilon_star:
            lo = mid
        else:
            hi = mid
    return hi
