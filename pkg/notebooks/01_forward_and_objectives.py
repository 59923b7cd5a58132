# %% [markdown]
# # Networks as discrete dynamical systems
#
# A network here is a chain of states `u_0 -> u_1 -> ... -> u_I`, each produced
# from the previous one by a logistic layer.  This notebook builds one, runs it
# on a single input and on a batch, and evaluates the quadratic objective.

# %%
import numpy as np

from lingrad import (Quadratic, dense_network, forward, layer_jacobian, objective_gradients,
                     objective_value, random_network)

rng = np.random.default_rng(0)
net = random_network([5, 8, 8, 3], rng)
print("widths:", net.widths, " layers:", net.n_layers)

# %% [markdown]
# One input gives a trajectory of states; the last one is the output.

# %%
x = rng.standard_normal(5)
traj = forward(net, x)
for i, u in enumerate(traj.states):
    print(f"u_{i}: {np.round(u, 3)}")

# %% [markdown]
# A batch is just a leading axis.  Every routine in the package accepts both.

# %%
X = rng.standard_normal((4, 5))
batch = forward(net, X)
print("batched output shape:", batch.output.shape)
print("row 0 matches the single run:", np.allclose(forward(net, X[0]).output, batch.output[0]))

# %% [markdown]
# A one-neuron example that can be checked by hand: weight 1, bias ln 3 and
# input 0 give `1 / (1 + 1/3) = 0.75`.

# %%
tiny = dense_network([[[1.0]]], [[np.log(3.0)]])
print(forward(tiny, [0.0]).output)

# %% [markdown]
# The objective is `0.5 * ||u_I - y||^2`.  Its gradient with respect to the
# final state is the residual, and the layer Jacobian is diagonal-times-weights.

# %%
y = rng.uniform(size=3)
spec = Quadratic(y)
print("J =", objective_value(spec, traj))
grads = objective_gradients(spec, traj, net)
print("dJ/du_I =", grads.dJ_du[-1], " residual =", traj.output - y)
jac = layer_jacobian(net.to_layers()[-1].params, traj.states[-2], traj.states[-1])
print("logistic slopes of the last layer:", np.round(jac.lam, 4))
