# %% [markdown]
# # How far can a step go before the network stops looking linear?
#
# After stepping the parameters by `sigma * psi`, compare the real change of
# each state with the tangent prediction.  The layer-averaged relative gap is
# the nonlinear measurement `eps`.  For small `psi` it grows in proportion to
# `psi`, which makes the stepsize reaching a target `eps*` easy to predict:
# `psi* = psi * eps* / eps`.

# %%
import numpy as np

from lingrad import (Quadratic, adjoint_solve, forward, linear_range_stepsize,
                     measure_for_update, objective_gradients, random_network,
                     scan_linear_range, steepest_direction)

rng = np.random.default_rng(0)
net = random_network([10, 10, 10, 10], rng)
x, y = rng.standard_normal(10), rng.uniform(size=10)
traj = forward(net, x)
grads = objective_gradients(Quadratic(y), traj, net)
sigma = steepest_direction(adjoint_solve(net, traj, grads), net, traj)

# %%
for psi in np.geomspace(1e-3, 1e2, 11):
    m = measure_for_update(net, x, sigma, psi)
    print(f"psi {psi:9.3g}   eps {m.epsilon:.4g}   eps/psi {m.epsilon / psi:.4g}")

# %% [markdown]
# The ratio `eps/psi` is flat at small `psi`; it bends once the step is large.
# For large steps the logistic keeps the real change bounded while the tangent
# keeps growing, so `eps` creeps towards 1.  A target near 1 is therefore a
# poor choice.

# %% [markdown]
# One measurement at a small `psi` gives a usable first guess for the edge of
# the 0.3-range.  The guess is low here because `eps/psi` starts to bend before
# `eps` reaches 0.3.

# %%
psi = 0.05
eps = measure_for_update(net, x, sigma, psi).epsilon
predicted = linear_range_stepsize(psi, eps, 0.3)
actual = scan_linear_range(net, x, sigma, 0.3)
print(f"predicted {predicted:.4g}, found by search {actual:.4g}")

# %% [markdown]
# Rescaling the direction by `c` and the stepsize by `1/c` is the same
# parameter change, so `eps` does not move.

# %%
for c in (0.1, 1.0, 10.0):
    print(c, measure_for_update(net, x, sigma * c, psi / c).epsilon)
