# %% [markdown]
# # Two ways to the same sensitivity
#
# Perturb the parameters along a direction `sigma` by a small stepsize `psi`.
# The forward (tangent) solution tracks how every state moves.  The reverse
# (adjoint) solution tracks how the objective responds to a nudge of each
# state.  Both give the derivative of the objective along `sigma`, and the
# adjoint specialises to ordinary backpropagation.

# %%
import numpy as np

from lingrad import (Quadratic, adjoint_duhamel, adjoint_propagator, adjoint_solve, forward,
                     gradient_backprop, objective_gradients, objective_value, propagator,
                     random_network, sensitivity_adjoint, sensitivity_tangent,
                     steepest_direction, tangent_duhamel, tangent_exact, tangent_fd)

rng = np.random.default_rng(1)
net = random_network([6, 9, 7, 4], rng)
x, y = rng.standard_normal(6), rng.uniform(size=4)
traj = forward(net, x)
spec = Quadratic(y)
grads = objective_gradients(spec, traj, net)
sigma = net.params.map(lambda a: rng.standard_normal(a.shape))

# %% [markdown]
# ## Forward sweep

# %%
tan = tangent_exact(net, traj, sigma, psi=1.0)
s_tan = sensitivity_tangent(grads, tan, sigma)

# %% [markdown]
# ## Reverse sweep

# %%
adj = adjoint_solve(net, traj, grads)
s_adj = sensitivity_adjoint(adj, net, traj, grads, sigma)
print(f"tangent {s_tan:.15f}\nadjoint {s_adj:.15f}")

# %% [markdown]
# A central difference of the objective itself agrees to about six digits.

# %%
h = 1e-6
fd = (objective_value(spec, forward(net.perturbed(sigma, h), x))
      - objective_value(spec, forward(net.perturbed(sigma, -h), x))) / (2 * h)
print(f"central difference {fd:.15f}")

# %% [markdown]
# ## Propagators and the superposition form
#
# Freezing the parameters and pushing a state perturbation from layer `l` to
# layer `i` gives a matrix `D`.  Built forwards or backwards, it is the same
# matrix, and summing the propagated source terms reproduces the recursion.

# %%
D_fwd = propagator(net, traj, 1, 3).D
D_rev = adjoint_propagator(net, traj, 3, 1).D
print("forward vs reverse assembly, max diff:", np.abs(D_fwd - D_rev).max())

rec = np.concatenate(tan.vpsi)
duh = np.concatenate(tangent_duhamel(net, traj, sigma).vpsi)
print("tangent superposition vs recursion:", np.linalg.norm(duh - rec) / np.linalg.norm(rec))
a_rec, a_duh = np.concatenate(adj.av), np.concatenate(adjoint_duhamel(net, traj, grads).av)
print("adjoint superposition vs recursion:", np.linalg.norm(a_duh - a_rec) / np.linalg.norm(a_rec))

# %% [markdown]
# ## A cheaper, less accurate tangent
#
# Differencing two forward passes avoids the tangent recursion.  The error is
# first order in the difference step.

# %%
for delta in (1e-3, 1e-4, 1e-5, 1e-6):
    fd_tan = np.concatenate(tangent_fd(net, traj, sigma, 1.0, delta).vpsi)
    print(f"delta {delta:.0e}: relative error {np.linalg.norm(fd_tan - rec) / np.linalg.norm(rec):.2e}")

# %% [markdown]
# ## Backpropagation
#
# The gradient is the adjoint contracted with each layer's parameter
# derivative.  Its negative is the steepest direction, along which the
# sensitivity is `-||grad||^2`.

# %%
g = gradient_backprop(adj, net, traj)
steep = steepest_direction(adj, net, traj)
print("sensitivity along steepest:", sensitivity_adjoint(adj, net, traj, grads, steep))
print("-||grad||^2:              ", -g.sum_sq())
