# %% [markdown]
# # Residual blocks
#
# Inside a residual block, later layers also receive earlier states through
# skip connections.  The tangent and adjoint machinery works on the general
# graph.  The nonlinear measurement only looks at block outputs, because
# states inside a block mean something different from those between blocks.

# %%
import numpy as np

from lingrad import (Quadratic, adjoint_solve, forward, measure_for_update,
                     objective_gradients, random_residual_network, sensitivity_adjoint,
                     sensitivity_tangent, tangent_exact, tangent_fd)

rng = np.random.default_rng(0)
net = random_residual_network(6, 3, rng, n_in=4)
print("widths:", net.widths)
print("block boundaries (states used for eps):", net.boundaries)

# %%
x, y = rng.standard_normal(4), rng.uniform(size=6)
traj = forward(net, x)
sigma = net.params.map(lambda a: rng.standard_normal(a.shape))
exact = tangent_exact(net, traj, sigma, 1.0)
fd = tangent_fd(net, traj, sigma, 1.0, 1e-6)
for i in net.boundaries[1:]:
    err = np.linalg.norm(fd.vpsi[i] - exact.vpsi[i]) / np.linalg.norm(exact.vpsi[i])
    print(f"state {i}: fd vs exact {err:.2e}")

# %%
grads = objective_gradients(Quadratic(y), traj, net)
print("tangent:", sensitivity_tangent(grads, exact, sigma))
print("adjoint:", sensitivity_adjoint(adjoint_solve(net, traj, grads), net, traj, grads, sigma))

# %%
m = measure_for_update(net, x, sigma, 0.01, ("fd", 1e-6))
print("eps", m.epsilon, "per boundary", np.round(m.per_layer, 4))
