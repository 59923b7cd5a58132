"""Identity checks over seeded random instances.

Each check returns a :class:`CheckResult` with the worst residual found and
the tolerance it is held to.  ``run_suite`` runs them all; the CLI prints the
results as CSV rows.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .adjoint import (adjoint_duhamel, adjoint_propagator, adjoint_solve,
                      gradient_backprop, sensitivity_adjoint, steepest_direction)
from .linrange import measure_for_update, scan_linear_range
from .net import (Network, ParamSet, Quadratic, forward, objective_gradients,
                  objective_value, random_network, random_residual_network)
from .tangent import (propagator, sensitivity_tangent, tangent_duhamel,
                      tangent_exact, tangent_fd)

FAULTS = ("sign-flip",)

# Architecture of the desk-scale teacher task.
DESK_WIDTHS = [10, 10, 10, 10]


@dataclass(frozen=True)
class CheckResult:
    name: str
    residual: float
    tolerance: float
    passed: bool
    detail: str = ""


@dataclass(frozen=True)
class Instance:
    net: Network
    x: np.ndarray
    y: np.ndarray
    direction: ParamSet


def random_direction(net: Network, rng) -> ParamSet:
    return net.params.map(lambda a: rng.standard_normal(a.shape))


def random_instance(rng, n_layers=None, widths=None) -> Instance:
    """Dense net with 2-6 layers of width 3-20, standard-normal everything."""
    if widths is None:
        n_layers = n_layers or int(rng.integers(2, 7))
        widths = [int(w) for w in rng.integers(3, 21, size=n_layers + 1)]
    net = random_network(widths, rng)
    x = rng.standard_normal(widths[0])
    y = rng.uniform(0.0, 1.0, widths[-1])
    return Instance(net, x, y, random_direction(net, rng))


def instances(seed: int, count: int, **kw) -> list:
    rng = np.random.default_rng(seed)
    return [random_instance(rng, **kw) for _ in range(count)]


def _rel(a, b):
    a, b = np.concatenate([np.ravel(t) for t in a]), np.concatenate([np.ravel(t) for t in b])
    scale = max(np.linalg.norm(b), np.finfo(float).tiny)
    return float(np.linalg.norm(a - b) / scale)


def _result(name, residual, tol, detail=""):
    residual = float(residual)
    return CheckResult(name, residual, tol, bool(np.isfinite(residual) and residual <= tol),
                       detail)


def check_tangent_adjoint(insts, tol=1e-10, fault=None) -> CheckResult:
    worst = 0.0
    for inst in insts:
        traj = forward(inst.net, inst.x)
        grads = objective_gradients(Quadratic(inst.y), traj, inst.net)
        tan = tangent_exact(inst.net, traj, inst.direction, 1.0)
        st = sensitivity_tangent(grads, tan, inst.direction)
        adj = adjoint_solve(inst.net, traj, grads)
        sa = sensitivity_adjoint(adj, inst.net, traj, grads, inst.direction)
        if fault == "sign-flip":
            sa = -sa
        worst = max(worst, abs(st - sa) / max(1.0, abs(st)))
    return _result("tangent_adjoint_equivalence", worst, tol, f"{len(insts)} nets")


def check_duhamel(insts, tol=1e-12) -> list:
    worst_t = worst_a = 0.0
    for inst in insts:
        traj = forward(inst.net, inst.x)
        rec = tangent_exact(inst.net, traj, inst.direction, 1.0)
        duh = tangent_duhamel(inst.net, traj, inst.direction)
        worst_t = max(worst_t, _rel(duh.vpsi[1:], rec.vpsi[1:]))
        grads = objective_gradients(Quadratic(inst.y), traj, inst.net)
        a_rec = adjoint_solve(inst.net, traj, grads)
        a_duh = adjoint_duhamel(inst.net, traj, grads)
        worst_a = max(worst_a, _rel(a_duh.av, a_rec.av))
    return [_result("duhamel_tangent", worst_t, tol),
            _result("duhamel_adjoint", worst_a, tol)]


def check_propagator_transpose(insts, tol=1e-13) -> CheckResult:
    worst, pairs = 0.0, 0
    for inst in insts:
        traj = forward(inst.net, inst.x)
        I = inst.net.n_layers
        for l in range(I + 1):
            for i in range(l, I + 1):
                fwd = propagator(inst.net, traj, l, i).D
                rev = adjoint_propagator(inst.net, traj, i, l).D
                worst = max(worst, float(np.max(np.abs(fwd - rev))))
                pairs += 1
    return _result("propagator_transpose", worst, tol, f"{pairs} (l,i) pairs")


def fd_error_ratios(inst, deltas=(1e-3, 1e-4, 1e-5)) -> np.ndarray:
    """``err(delta) / err(delta / 2)`` for each delta, errors over all layers."""
    traj = forward(inst.net, inst.x)
    exact = tangent_exact(inst.net, traj, inst.direction, 1.0)

    def err(d):
        fd = tangent_fd(inst.net, traj, inst.direction, 1.0, d)
        return np.linalg.norm(np.concatenate([a - b for a, b in zip(fd.vpsi, exact.vpsi)]))

    return np.array([err(d) / err(d / 2) for d in deltas])


def check_fd_order(insts, tol=0.3) -> CheckResult:
    worst = 0.0
    for inst in insts:
        worst = max(worst, float(np.max(np.abs(fd_error_ratios(inst) - 2.0))))
    return _result("fd_first_order", worst, tol, "max |ratio - 2|")


def check_backprop_fd(insts, tol=1e-6, n_entries=50, delta=1e-6, seed=0) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for inst in insts:
        spec = Quadratic(inst.y)
        traj = forward(inst.net, inst.x)
        grads = objective_gradients(spec, traj, inst.net)
        adj = adjoint_solve(inst.net, traj, grads)
        g = gradient_backprop(adj, inst.net, traj).flatten()
        flat = inst.net.params.flatten()
        for k in rng.choice(flat.size, size=min(n_entries, flat.size), replace=False):
            e = np.zeros_like(flat)
            e[k] = delta
            plus = inst.net.with_params(inst.net.params.unflatten(flat + e))
            minus = inst.net.with_params(inst.net.params.unflatten(flat - e))
            fd = (objective_value(spec, forward(plus, inst.x))
                  - objective_value(spec, forward(minus, inst.x))) / (2 * delta)
            # Entries whose gradient is at rounding level are compared absolutely.
            worst = max(worst, abs(fd - g[k]) / max(abs(g[k]), 1e-3))
    return _result("backprop_vs_fd", worst, tol, f"{n_entries} entries per net")


def epsilon_ratio(net, x, direction, tangent="exact", epsilon_star=0.3):
    """``eps(psi) / eps(psi / 2)`` one decade below the ``epsilon_star`` range."""
    psi = scan_linear_range(net, x, direction, epsilon_star, tangent=tangent) / 10
    e1 = measure_for_update(net, x, direction, psi, tangent).epsilon
    e2 = measure_for_update(net, x, direction, psi / 2, tangent).epsilon
    return e1 / e2


def steepest_for(net, x, y):
    traj = forward(net, x)
    grads = objective_gradients(Quadratic(y), traj, net)
    return steepest_direction(adjoint_solve(net, traj, grads), net, traj)


def check_epsilon_linearity(insts, lo=1.8, hi=2.2) -> CheckResult:
    ratios = [epsilon_ratio(i.net, i.x, steepest_for(i.net, i.x, i.y)) for i in insts]
    worst = max(abs(r - 2.0) for r in ratios)
    return CheckResult("epsilon_linearity", worst, 0.2,
                       all(lo <= r <= hi for r in ratios),
                       f"ratios in [{min(ratios):.4f}, {max(ratios):.4f}]")


def residual_instance(seed, n_blocks=3, width=6, n_in=4, n_out=None):
    rng = np.random.default_rng(seed)
    net = random_residual_network(width, n_blocks, rng, n_in=n_in)
    x = rng.standard_normal(n_in)
    y = rng.uniform(0.0, 1.0, net.widths[-1])
    return Instance(net, x, y, random_direction(net, rng))


def residual_tangent_error(inst, delta=1e-6) -> float:
    traj = forward(inst.net, inst.x)
    exact = tangent_exact(inst.net, traj, inst.direction, 1.0)
    fd = tangent_fd(inst.net, traj, inst.direction, 1.0, delta)
    return max(float(np.linalg.norm(f - e) / np.linalg.norm(e))
               for f, e in zip(fd.vpsi[1:], exact.vpsi[1:]))


def check_residual(seed=0, tol=1e-4) -> list:
    """Exact vs finite-difference tangent and epsilon linearity on a 3-block net."""
    inst = residual_instance(seed)
    ratio = epsilon_ratio(inst.net, inst.x, steepest_for(inst.net, inst.x, inst.y))
    return [_result("residual_tangent_fd", residual_tangent_error(inst), tol),
            CheckResult("residual_epsilon_linearity", abs(ratio - 2), 0.2,
                        1.8 <= ratio <= 2.2, f"ratio {ratio:.4f}")]


def run_suite(seed: int = 0, fault: str | None = None) -> list:
    if fault is not None and fault not in FAULTS:
        raise ValueError(f"unknown fault {fault!r}")
    many = instances(seed, 100)
    few = many[:20]
    results = [check_tangent_adjoint(many, fault=fault)]
    results += check_duhamel(many)
    results.append(check_propagator_transpose(few))
    results.append(check_fd_order(few))
    results.append(check_backprop_fd(many[:5], seed=seed))
    results.append(check_epsilon_linearity(instances(seed, 20, widths=DESK_WIDTHS)))
    results += check_residual(seed)
    return results
