import math

import numpy as np
import pytest
from conftest import hand_forward

from lingrad import (ConfigurationError, Dense, GeneralObjective, LayerParams, Network,
                     NumericError, ObjectiveTerm, Quadratic, Residual, dense_network,
                     forward, layer_apply, layer_jacobian, logistic, objective_gradients,
                     objective_value, random_network)


def test_logistic_of_zero_layer():
    net = dense_network([np.zeros((3, 4))], [np.zeros(3)])
    traj = forward(net, np.array([1.0, -2.0, 3.0, 0.5]))
    np.testing.assert_array_equal(traj.output, [0.5, 0.5, 0.5])


def test_single_scalar_layer():
    net = dense_network([[[1.0]]], [[math.log(3)]])
    assert forward(net, [0.0]).output[0] == pytest.approx(0.75, abs=1e-15)


def test_two_layer_matches_hand_rolled(rng):
    net = random_network([6, 5, 3], rng)
    x = rng.standard_normal(6)
    traj = forward(net, x)
    expected = hand_forward([net.params.W(k) for k in range(2)],
                            [net.params.b(k) for k in range(2)], x)
    np.testing.assert_allclose(traj.output, expected, rtol=0, atol=1e-14)
    assert traj.states[0] is not None and np.array_equal(traj.states[0], x)
    assert len(traj.states) == 3


def test_forward_is_deterministic(net3, rng):
    x = rng.standard_normal(5)
    a, b = forward(net3, x), forward(net3, x)
    for ua, ub in zip(a.states, b.states):
        assert ua.tobytes() == ub.tobytes()


def test_states_inside_unit_interval(net3, rng):
    traj = forward(net3, rng.standard_normal((50, 5)))
    for u in traj.states[1:]:
        assert np.all((u > 0) & (u < 1))


def test_batch_matches_single(net3, rng):
    X = rng.standard_normal((4, 5))
    batch = forward(net3, X)
    for n in range(4):
        np.testing.assert_allclose(forward(net3, X[n]).output, batch.output[n],
                                   rtol=0, atol=1e-15)


@pytest.mark.parametrize("W,b,u,expected", [
    ([[0.0]], [0.0], [7.0], [0.5]),
    ([[1.0, 1.0]], [0.0], [0.3, -0.3], [0.5]),
    ([[2.0]], [-1.0], [1.0], [0.7310585786300049]),
])
def test_layer_apply(W, b, u, expected):
    np.testing.assert_allclose(layer_apply(LayerParams(W, b), u), expected, atol=1e-15)


def test_layer_apply_dimension_mismatch():
    with pytest.raises(ConfigurationError):
        layer_apply(LayerParams([[1.0, 2.0]], [0.0]), [1.0])


def test_jacobian_at_half():
    p = LayerParams(np.zeros((3, 2)), np.zeros(3))
    u = np.array([0.4, -1.0])
    jac = layer_jacobian(p, u, layer_apply(p, u))
    np.testing.assert_array_equal(jac.lam, [0.25] * 3)


def test_jacobian_saturation():
    p = LayerParams([[30.0], [-30.0]], [0.0, 0.0])
    u = np.array([1.0])
    jac = layer_jacobian(p, u, layer_apply(p, u))
    assert np.all(jac.lam < 1e-12)


def test_jacobian_matches_central_differences(rng):
    p = LayerParams(rng.standard_normal((4, 6)), rng.standard_normal(4))
    u = rng.standard_normal(6)
    jac = layer_jacobian(p, u, layer_apply(p, u))
    assert np.all((jac.lam > 0) & (jac.lam <= 0.25))
    d = 1e-6
    cols = []
    for k in range(6):
        e = np.zeros(6)
        e[k] = d
        cols.append((layer_apply(p, u + e) - layer_apply(p, u - e)) / (2 * d))
    fd = np.column_stack(cols)
    assembled = np.column_stack([jac.state_action(np.eye(6)[k]) for k in range(6)])
    np.testing.assert_allclose(assembled, fd, rtol=0, atol=1e-6)
    np.testing.assert_allclose(jac.matrix(), fd, rtol=0, atol=1e-6)


def test_param_action_matches_differences(rng):
    p = LayerParams(rng.standard_normal((3, 4)), rng.standard_normal(3))
    u = rng.standard_normal(4)
    S, beta = rng.standard_normal((3, 4)), rng.standard_normal(3)
    jac = layer_jacobian(p, u, layer_apply(p, u))
    d = 1e-6
    fd = (layer_apply(LayerParams(p.W + d * S, p.b + d * beta), u)
          - layer_apply(LayerParams(p.W - d * S, p.b - d * beta), u)) / (2 * d)
    np.testing.assert_allclose(jac.param_action(S, beta), fd, atol=1e-8)


def test_objective_values(rng):
    traj = forward(dense_network([np.zeros((2, 1))], [np.zeros(2)]), [0.0])
    assert objective_value(Quadratic(np.array([0.5, 0.5])), traj) == 0.0
    net = dense_network([np.array([[1.0], [-1.0]]) * 100], [np.zeros(2)])
    traj = forward(net, [1.0])  # saturates to (1, 0)
    assert objective_value(Quadratic(np.zeros(2)), traj) == 0.5


def test_objective_matches_summation_oracle(rng):
    net = random_network([3, 10], rng)
    traj = forward(net, rng.standard_normal(3))
    y = rng.uniform(size=10)
    oracle = 0.0
    for a, b in zip(traj.output, y):
        oracle += (a - b) ** 2
    assert objective_value(Quadratic(y), traj) == pytest.approx(oracle / 2, abs=1e-14)


def test_objective_target_mismatch(net3, rng):
    with pytest.raises(ConfigurationError):
        objective_value(Quadratic(np.zeros(3)), forward(net3, rng.standard_normal(5)))


def test_quadratic_gradients(net3, rng):
    traj = forward(net3, rng.standard_normal(5))
    g = objective_gradients(Quadratic(traj.output.copy()), traj, net3)
    assert not any(np.any(d) for d in g.dJ_du)
    assert g.dJ_ds.is_zero()
    net = dense_network([[[0.0]]], [[math.log(9)]])  # output 0.9
    tr = forward(net, [0.0])
    g = objective_gradients(Quadratic(np.array([0.4])), tr)
    np.testing.assert_allclose(g.dJ_du[-1], [0.5], atol=1e-15)


def test_quadratic_gradient_matches_fd(net3, rng):
    traj = forward(net3, rng.standard_normal(5))
    y = rng.uniform(size=4)
    g = objective_gradients(Quadratic(y, scale=3.0), traj).dJ_du[-1]
    d = 1e-6
    for j in range(4):
        up, dn = list(traj.states), list(traj.states)
        e = np.zeros(4)
        e[j] = d
        up[-1], dn[-1] = traj.output + e, traj.output - e
        fd = (objective_value(Quadratic(y, 3.0), type(traj)(tuple(up), traj.boundaries))
              - objective_value(Quadratic(y, 3.0), type(traj)(tuple(dn), traj.boundaries))) / (2 * d)
        assert fd == pytest.approx(g[j], abs=1e-8)


def test_general_objective(net3, rng):
    c = rng.standard_normal(7)
    rho = 0.3
    terms = (
        ObjectiveTerm(1, lambda u, s: float(c @ u), lambda u, s: c),
        ObjectiveTerm(
            2,
            lambda u, s: 0.5 * rho * float(np.sum(s[0][0] ** 2)),
            lambda u, s: np.zeros_like(u),
            lambda u, s: ([rho * s[0][0]], np.zeros_like(s[1]))),
    )
    spec = GeneralObjective(terms)
    x = rng.standard_normal(5)
    traj = forward(net3, x)
    val = objective_value(spec, traj, net3)
    expected = c @ traj.states[1] + 0.5 * rho * np.sum(net3.params.W(2) ** 2)
    assert val == pytest.approx(expected, rel=1e-14)
    g = objective_gradients(spec, traj, net3)
    np.testing.assert_array_equal(g.dJ_du[1], c)
    np.testing.assert_allclose(g.dJ_ds.W(2), rho * net3.params.W(2))
    assert not np.any(g.dJ_ds.W(0))


def test_dimension_chain_checked(rng):
    with pytest.raises(ConfigurationError):
        dense_network([rng.standard_normal((3, 2)), rng.standard_normal((2, 4))],
                      [np.zeros(3), np.zeros(2)])
    with pytest.raises(ConfigurationError):
        forward(random_network([2, 3], rng), np.zeros(5))


def test_layer_params_invariants():
    with pytest.raises(ConfigurationError):
        LayerParams(np.zeros((2, 2)), np.zeros(3))
    with pytest.raises(ConfigurationError):
        LayerParams([[np.nan]], [0.0])


def test_overflow_guard():
    np.testing.assert_array_equal(logistic([-1000.0, 1000.0]), [0.0, 1.0])
    assert abs(logistic(39.0) - 1 / (1 + math.exp(-39.0))) < 1e-17


def test_identity_activation_non_finite_reports_layer():
    net = Network([Dense(LayerParams([[1e200]], [0.0]), "identity"),
                   Dense(LayerParams([[1e200]], [0.0]), "identity")])
    with pytest.raises(NumericError) as info:
        forward(net, [1e10])
    assert info.value.layer == 2


def test_residual_with_zero_skips_is_dense(rng):
    ps = [LayerParams(rng.standard_normal((4, 4)), rng.standard_normal(4)) for _ in range(3)]
    res = Network([Residual(tuple(ps), {(0, 2): np.zeros((4, 4)), (1, 3): np.zeros((4, 4)),
                                        (0, 3): np.zeros((4, 4))})])
    dense = Network([Dense(p) for p in ps])
    x = rng.standard_normal(4)
    for a, b in zip(forward(res, x).states, forward(dense, x).states):
        np.testing.assert_array_equal(a, b)


def test_residual_forward_formula(rng):
    p0 = LayerParams(rng.standard_normal((3, 3)), rng.standard_normal(3))
    p1 = LayerParams(rng.standard_normal((3, 3)), rng.standard_normal(3))
    skip = rng.standard_normal((3, 3))
    net = Network([Residual((p0, p1), {(0, 2): skip})])
    x = rng.standard_normal(3)
    u1 = logistic(p0.W @ x + p0.b)
    u2 = logistic(p1.W @ u1 + skip @ x + p1.b)
    traj = forward(net, x)
    np.testing.assert_allclose(traj.output, u2, rtol=1e-15)
    assert net.boundaries == (0, 2)


def test_residual_skip_shape_checked(rng):
    p = LayerParams(np.zeros((3, 3)), np.zeros(3))
    with pytest.raises(ConfigurationError):
        Network([Residual((p, p), {(0, 2): np.zeros((3, 2))})])
    with pytest.raises(ConfigurationError):
        Network([Residual((p, p), {(1, 2): np.zeros((3, 3))})])


def test_paramset_flatten_order(rng):
    net = random_network([2, 3, 1], rng)
    flat = net.params.flatten()
    expected = np.concatenate([net.params.W(0).ravel(), net.params.b(0),
                               net.params.W(1).ravel(), net.params.b(1)])
    np.testing.assert_array_equal(flat, expected)
    back = net.params.unflatten(flat)
    assert back.same_shape(net.params)
    np.testing.assert_array_equal(back.flatten(), flat)
