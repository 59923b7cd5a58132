"""Layered networks viewed as discrete dynamical systems.

A network is a sequence of *units*; unit ``k`` produces state ``u[k+1]`` from
one or more earlier states::

    u[k+1] = g( sum_j W[j, k+1] @ u[j] + b[k] )

A dense layer has a single source ``j = k``.  A residual block adds skip
connections from earlier states inside the block.  All arrays use a trailing
feature axis, so every routine in this module accepts either a single sample
(``u.shape == (m,)``) or a batch (``u.shape == (N, m)``).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

ACTIVATIONS = ("logistic", "identity")

# Beyond this magnitude the logistic is replaced by its asymptote.
LOGISTIC_CLAMP = 40.0


class ConfigurationError(ValueError):
    """Shapes or settings that cannot describe a valid network."""


class NumericError(ArithmeticError):
    """A forward pass produced a non-finite state."""

    def __init__(self, layer: int, message: str = "non-finite state"):
        super().__init__(f"{message} at layer {layer}")
        self.layer = layer


def logistic(z):
    z = np.asarray(z, dtype=np.float64)
    inner = np.clip(z, -LOGISTIC_CLAMP, LOGISTIC_CLAMP)
    g = 1.0 / (1.0 + np.exp(-inner))
    return np.where(z > LOGISTIC_CLAMP, 1.0, np.where(z < -LOGISTIC_CLAMP, 0.0, g))


def _activate(z, activation):
    if activation == "logistic":
        return logistic(z)
    return np.asarray(z, dtype=np.float64)


def _derivative(u_out, activation):
    """Diagonal of Lambda, expressed through the layer output."""
    if activation == "logistic":
        return u_out * (1.0 - u_out)
    return np.ones_like(u_out)


def _as_matrix(a, name):
    a = np.array(a, dtype=np.float64)
    if a.ndim != 2:
        raise ConfigurationError(f"{name} must be a matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ConfigurationError(f"{name} has non-finite entries")
    a.setflags(write=False)
    return a


def _as_vector(a, name):
    a = np.array(a, dtype=np.float64)
    if a.ndim != 1:
        raise ConfigurationError(f"{name} must be a vector, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ConfigurationError(f"{name} has non-finite entries")
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class LayerParams:
    """Weight matrix ``W`` (m_out x m_in) and bias ``b`` (m_out) of one layer."""

    W: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        W = _as_matrix(self.W, "W")
        b = _as_vector(self.b, "b")
        if W.shape[0] != b.shape[0]:
            raise ConfigurationError(
                f"W has {W.shape[0]} rows but b has length {b.shape[0]}")
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "b", b)

    @property
    def n_in(self) -> int:
        return self.W.shape[1]

    @property
    def n_out(self) -> int:
        return self.W.shape[0]


@dataclass(frozen=True)
class Dense:
    params: LayerParams
    activation: str = "logistic"


@dataclass(frozen=True)
class Residual:
    """A block of chained layers plus skip connections inside the block.

    ``layers[t]`` maps local state ``t`` to local state ``t + 1``; local state 0
    is the block input and local state ``len(layers)`` is the block output.
    ``skips[(j, t)]`` is an extra weight from local state ``j`` into local
    state ``t`` (``j <= t - 2``).
    """

    layers: tuple
    skips: Mapping = field(default_factory=dict)
    activation: str = "logistic"

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(
            self, "skips",
            {(int(j), int(t)): _as_matrix(w, f"skip ({j},{t})")
             for (j, t), w in dict(self.skips).items()})


@dataclass(frozen=True)
class Unit:
    """Topology of one primitive map: source state indices and activation."""

    sources: tuple
    activation: str


class ParamSet:
    """Parameters, directions and gradients share this structured container.

    ``weights[k][s]`` is the matrix applied to state ``units[k].sources[s]``;
    ``biases[k]`` is the bias of unit ``k``.  Flattening order is unit by unit,
    each weight matrix row-major in source order, then the bias.
    """

    __slots__ = ("weights", "biases")

    def __init__(self, weights, biases):
        self.weights = tuple(tuple(np.asarray(w, dtype=np.float64) for w in ws)
                             for ws in weights)
        self.biases = tuple(np.asarray(b, dtype=np.float64) for b in biases)
        if len(self.weights) != len(self.biases):
            raise ConfigurationError("weights and biases differ in unit count")

    def __len__(self):
        return len(self.biases)

    def _zip(self, other, op):
        if not self.same_shape(other):
            raise ConfigurationError("parameter structures do not match")
        return ParamSet(
            [[op(a, b) for a, b in zip(wa, wb)]
             for wa, wb in zip(self.weights, other.weights)],
            [op(a, b) for a, b in zip(self.biases, other.biases)])

    def map(self, fn):
        return ParamSet([[fn(w) for w in ws] for ws in self.weights],
                        [fn(b) for b in self.biases])

    def __add__(self, other):
        return self._zip(other, np.add)

    def __sub__(self, other):
        return self._zip(other, np.subtract)

    def __mul__(self, c):
        c = float(c)
        return self.map(lambda a: a * c)

    __rmul__ = __mul__

    def __truediv__(self, c):
        c = float(c)
        return self.map(lambda a: a / c)

    def __neg__(self):
        return self.map(np.negative)

    def same_shape(self, other) -> bool:
        if len(self) != len(other):
            return False
        for wa, wb in zip(self.weights, other.weights):
            if len(wa) != len(wb) or any(a.shape != b.shape for a, b in zip(wa, wb)):
                return False
        return all(a.shape == b.shape for a, b in zip(self.biases, other.biases))

    def dot(self, other) -> float:
        if not self.same_shape(other):
            raise ConfigurationError("parameter structures do not match")
        total = 0.0
        for wa, wb, ba, bb in zip(self.weights, other.weights, self.biases, other.biases):
            for a, b in zip(wa, wb):
                total += float(np.sum(a * b))
            total += float(np.dot(ba, bb))
        return total

    def sum_sq(self) -> float:
        return self.dot(self)

    def flatten(self) -> np.ndarray:
        parts = []
        for ws, b in zip(self.weights, self.biases):
            parts.extend(w.ravel() for w in ws)
            parts.append(b.ravel())
        return np.concatenate(parts) if parts else np.zeros(0)

    def unflatten(self, flat) -> "ParamSet":
        flat = np.asarray(flat, dtype=np.float64)
        pos = 0
        weights, biases = [], []
        for ws, b in zip(self.weights, self.biases):
            row = []
            for w in ws:
                row.append(flat[pos:pos + w.size].reshape(w.shape))
                pos += w.size
            weights.append(row)
            biases.append(flat[pos:pos + b.size].reshape(b.shape))
            pos += b.size
        if pos != flat.size:
            raise ConfigurationError(f"expected {pos} entries, got {flat.size}")
        return ParamSet(weights, biases)

    def is_zero(self) -> bool:
        return not np.any(self.flatten())

    def zeros_like(self) -> "ParamSet":
        return self.map(np.zeros_like)

    # Dense-layer conveniences: the single (or main-chain) weight of unit k.
    def W(self, k: int) -> np.ndarray:
        return self.weights[k][-1]

    def b(self, k: int) -> np.ndarray:
        return self.biases[k]


# Directions and gradients are parameter-shaped.
PerturbationDirection = ParamSet


class Network:
    """An immutable layered network built from ``Dense`` and ``Residual`` specs."""

    def __init__(self, layers: Sequence, params: ParamSet | None = None):
        self.layers = tuple(layers)
        if not self.layers:
            raise ConfigurationError("network needs at least one layer")
        units, weights, biases, widths, boundaries = [], [], [], [], [0]
        for idx, spec in enumerate(self.layers):
            if isinstance(spec, Dense):
                chain, skips, act = (spec.params,), {}, spec.activation
            elif isinstance(spec, Residual):
                chain, skips, act = spec.layers, spec.skips, spec.activation
                if not chain:
                    raise ConfigurationError(f"residual layer {idx} is empty")
            else:
                raise ConfigurationError(f"unknown layer spec {type(spec).__name__}")
            if act not in ACTIVATIONS:
                raise ConfigurationError(f"unknown activation {act!r}")
            if not widths:
                widths.append(chain[0].n_in)
            start = len(widths) - 1
            for (j, t) in skips:
                if not (0 <= j <= t - 2 and t <= len(chain)):
                    raise ConfigurationError(
                        f"layer {idx}: skip ({j},{t}) must satisfy 0 <= j <= t-2 <= "
                        f"{len(chain) - 2}")
            for t, p in enumerate(chain):
                if p.n_in != widths[-1]:
                    raise ConfigurationError(
                        f"layer {idx}: input width {p.n_in} does not match "
                        f"previous width {widths[-1]}")
                srcs, ws = [], []
                for j in sorted(j for (j, tt) in skips if tt == t + 1):
                    w = skips[(j, t + 1)]
                    if w.shape != (p.n_out, widths[start + j]):
                        raise ConfigurationError(
                            f"layer {idx}: skip ({j},{t + 1}) has shape {w.shape}, "
                            f"expected {(p.n_out, widths[start + j])}")
                    srcs.append(start + j)
                    ws.append(w)
                srcs.append(len(widths) - 1)
                ws.append(p.W)
                units.append(Unit(tuple(srcs), act))
                weights.append(ws)
                biases.append(p.b)
                widths.append(p.n_out)
            boundaries.append(len(widths) - 1)
        self.units = tuple(units)
        self.widths = tuple(widths)
        self.boundaries = tuple(boundaries)
        default = ParamSet(weights, biases)
        if params is None:
            params = default
        elif not params.same_shape(default):
            raise ConfigurationError("parameters do not match the network topology")
        self.params = params

    @property
    def n_layers(self) -> int:
        """Number of units, i.e. the index ``I`` of the last state."""
        return len(self.units)

    @property
    def is_dense(self) -> bool:
        return all(len(u.sources) == 1 for u in self.units)

    def with_params(self, params: ParamSet) -> "Network":
        net = object.__new__(Network)
        net.layers, net.units = self.layers, self.units
        net.widths, net.boundaries = self.widths, self.boundaries
        if not params.same_shape(self.params):
            raise ConfigurationError("parameters do not match the network topology")
        net.params = params
        return net

    def perturbed(self, direction: ParamSet, psi: float) -> "Network":
        """Network with parameters ``s + direction * psi``."""
        return self.with_params(self.params + direction * psi)

    def to_layers(self) -> list:
        """Layer specs carrying the current parameters."""
        out, k = [], 0
        for spec in self.layers:
            if isinstance(spec, Dense):
                out.append(Dense(LayerParams(self.params.W(k), self.params.b(k)),
                                 spec.activation))
                k += 1
                continue
            start = self.units[k].sources[-1]
            chain, skips = [], {}
            for t in range(len(spec.layers)):
                unit = self.units[k]
                ws = self.params.weights[k]
                chain.append(LayerParams(ws[-1], self.params.b(k)))
                for src, w in zip(unit.sources[:-1], ws[:-1]):
                    skips[(src - start, t + 1)] = w
                k += 1
            out.append(Residual(tuple(chain), skips, spec.activation))
        return out


def dense_network(weights, biases, activation="logistic") -> Network:
    return Network([Dense(LayerParams(W, b), activation)
                    for W, b in zip(weights, biases)])


def random_network(widths, rng, activation="logistic", scale=1.0) -> Network:
    """Dense network with i.i.d. normal parameters (standard normal by default)."""
    layers = []
    for m_in, m_out in zip(widths[:-1], widths[1:]):
        W = scale * rng.standard_normal((m_out, m_in))
        b = scale * rng.standard_normal(m_out)
        layers.append(Dense(LayerParams(W, b), activation))
    return Network(layers)


def random_residual_network(width, n_blocks, rng, depth=2, n_in=None,
                            activation="logistic", scale=1.0) -> Network:
    """Optional dense input layer, then ``n_blocks`` residual blocks.

    Each block has ``depth`` chained layers and a skip from the block input
    into every local state from 2 onwards.
    """
    layers = []
    if n_in is not None and n_in != width:
        layers.append(Dense(LayerParams(scale * rng.standard_normal((width, n_in)),
                                        scale * rng.standard_normal(width)),
                            activation))
    for _ in range(n_blocks):
        chain = tuple(LayerParams(scale * rng.standard_normal((width, width)),
                                  scale * rng.standard_normal(width))
                      for _ in range(depth))
        skips = {(0, t): scale * rng.standard_normal((width, width))
                 for t in range(2, depth + 1)}
        layers.append(Residual(chain, skips, activation))
    return Network(layers)


@dataclass(frozen=True)
class StateTrajectory:
    """States ``u_0 .. u_I`` of one forward pass (single sample or batch)."""

    states: tuple
    boundaries: tuple

    @property
    def n_layers(self) -> int:
        return len(self.states) - 1

    @property
    def output(self) -> np.ndarray:
        return self.states[-1]

    @property
    def batched(self) -> bool:
        return self.states[0].ndim == 2


def _preactivation(ws, b, states, sources):
    z = b
    for w, src in zip(ws, sources):
        z = z + states[src] @ w.T
    return z


def forward(net: Network, x) -> StateTrajectory:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (1, 2) or x.shape[-1] != net.widths[0]:
        raise ConfigurationError(
            f"input has shape {x.shape}, expected trailing width {net.widths[0]}")
    states = [x]
    for k, unit in enumerate(net.units):
        with np.errstate(over="ignore", invalid="ignore"):
            z = _preactivation(net.params.weights[k], net.params.biases[k], states,
                               unit.sources)
            u = _activate(z, unit.activation)
        if not np.all(np.isfinite(u)):
            raise NumericError(k + 1)
        states.append(u)
    return StateTrajectory(tuple(states), net.boundaries)


def layer_apply(p: LayerParams, u, activation="logistic") -> np.ndarray:
    u = np.asarray(u, dtype=np.float64)
    if u.shape[-1] != p.n_in:
        raise ConfigurationError(f"input width {u.shape[-1]} != W columns {p.n_in}")
    return _activate(u @ p.W.T + p.b, activation)


@dataclass(frozen=True)
class LayerJacobian:
    """Linearisation of one unit about a forward pass.

    ``lam`` holds the diagonal of Lambda.  ``weights`` and ``inputs`` are
    aligned with the unit's source states.
    """

    lam: np.ndarray
    weights: tuple
    inputs: tuple

    def state_action(self, v) -> np.ndarray:
        """``Lambda * sum_j W_j v_j``; ``v`` is one array or one per source."""
        vs = (v,) if len(self.weights) == 1 and not isinstance(v, (tuple, list)) else v
        z = 0.0
        for w, vj in zip(self.weights, vs):
            z = z + np.asarray(vj) @ w.T
        return self.lam * z

    def param_action(self, sigmas, beta) -> np.ndarray:
        """``Lambda * (sum_j Sigma_j u_j + beta)``."""
        if isinstance(sigmas, np.ndarray):
            sigmas = (sigmas,)
        z = beta
        for s, u in zip(sigmas, self.inputs):
            z = z + u @ s.T
        return self.lam * z

    def adjoint_action(self, a) -> tuple:
        """Row-vector product ``a Lambda W_j`` for every source ``j``."""
        g = self.lam * a
        return tuple(g @ w for w in self.weights)

    def matrix(self, source: int = -1) -> np.ndarray:
        """Dense ``Lambda W_j`` (single sample only)."""
        return self.lam[:, None] * self.weights[source]


def layer_jacobian(p: LayerParams, u_in, u_out, activation="logistic") -> LayerJacobian:
    u_in = np.asarray(u_in, dtype=np.float64)
    u_out = np.asarray(u_out, dtype=np.float64)
    if u_in.shape[-1] != p.n_in or u_out.shape[-1] != p.n_out:
        raise ConfigurationError("state widths do not match the layer")
    return LayerJacobian(_derivative(u_out, activation), (p.W,), (u_in,))


def unit_jacobian(net: Network, traj: StateTrajectory, k: int) -> LayerJacobian:
    unit = net.units[k]
    return LayerJacobian(_derivative(traj.states[k + 1], unit.activation),
                         net.params.weights[k],
                         tuple(traj.states[s] for s in unit.sources))


# ---------------------------------------------------------------- objectives

@dataclass(frozen=True)
class Quadratic:
    """``scale * 1/2 * sum_j (u_I^j - y^j)^2``; ``y`` may be batched."""

    y: np.ndarray
    scale: float = 1.0


@dataclass(frozen=True)
class ObjectiveTerm:
    """One term ``J_i(u_i, s_i)`` of a general objective (single sample).

    ``value(u, s)``, ``grad_u(u, s)`` and ``grad_s(u, s)`` receive the state
    ``u_i`` and the parameters of unit ``i`` as ``(weights, bias)``, or
    ``None`` for the last state.  ``grad_s`` returns ``(weights, bias)`` or
    ``None`` when the term does not depend on parameters.
    """

    state: int
    value: Callable
    grad_u: Callable
    grad_s: Callable | None = None


@dataclass(frozen=True)
class GeneralObjective:
    terms: tuple


@dataclass(frozen=True)
class ObjectiveGradients:
    """Row gradients ``J_ui`` per state and ``J_si`` as a parameter set."""

    dJ_du: tuple
    dJ_ds: ParamSet


def _unit_params(net, i):
    if i < net.n_layers:
        return net.params.weights[i], net.params.biases[i]
    return None


def _check_quadratic(spec, traj):
    y = np.asarray(spec.y, dtype=np.float64)
    if y.shape[-1] != traj.output.shape[-1]:
        raise ConfigurationError(
            f"target length {y.shape[-1]} != output width {traj.output.shape[-1]}")
    return y


def objective_value(spec, traj: StateTrajectory, net: Network | None = None):
    """Objective per sample (a float, or an array for a batch)."""
    if isinstance(spec, Quadratic):
        y = _check_quadratic(spec, traj)
        r = traj.output - y
        val = 0.5 * spec.scale * np.sum(r * r, axis=-1)
        return float(val) if np.ndim(val) == 0 else val
    total = 0.0
    for term in spec.terms:
        s = _unit_params(net, term.state) if net is not None else None
        total += float(term.value(traj.states[term.state], s))
    return total


def objective_gradients(spec, traj: StateTrajectory,
                        net: Network | None = None) -> ObjectiveGradients:
    dJ_du = [np.zeros_like(u) for u in traj.states]
    if net is None:
        dJ_ds = None
    else:
        dJ_ds = net.params.zeros_like()
    if isinstance(spec, Quadratic):
        y = _check_quadratic(spec, traj)
        dJ_du[-1] = spec.scale * (traj.output - y)
        return ObjectiveGradients(tuple(dJ_du), dJ_ds)
    if net is None:
        raise ConfigurationError("a general objective needs the network")
    ws = [list(w) for w in dJ_ds.weights]
    bs = list(dJ_ds.biases)
    for term in spec.terms:
        i = term.state
        s = _unit_params(net, i)
        dJ_du[i] = dJ_du[i] + np.asarray(term.grad_u(traj.states[i], s))
        if term.grad_s is not None and s is not None:
            g = term.grad_s(traj.states[i], s)
            if g is not None:
                gw, gb = g
                ws[i] = [a + np.asarray(b) for a, b in zip(ws[i], gw)]
                bs[i] = bs[i] + np.asarray(gb)
    return ObjectiveGradients(tuple(dJ_du), ParamSet(ws, bs))
