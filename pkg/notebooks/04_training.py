# %% [markdown]
# # linGrad against fixed stepsizes on a teacher task
#
# A frozen random "teacher" network produces targets from standard-normal
# inputs; a student with the same shape learns them.  linGrad measures `eps`
# every `n_lin` minibatches, turns it into a candidate stepsize, and applies
# the smallest of the recent candidates.  A short run is enough to see the
# stepsize settle without any tuning.

# %%
import os
from pathlib import Path

import numpy as np

from lingrad import TrainerConfig, generate_teacher_dataset, random_network, rng_streams, train
from lingrad.plots import plot_objective, plot_stepsize

EPOCHS = int(os.environ.get("DEMO_EPOCHS", "3"))
seed = 0
train_set, test_set, teacher = generate_teacher_dataset([10, 10, 10, 10], 5000, 1000, seed)


def student():
    return random_network([10, 10, 10, 10], rng_streams(seed)["init"])


# %%
runs = {"linGrad": train(TrainerConfig(n_lin=20, epochs=EPOCHS, seed=seed),
                         train_set, test_set, student())}
for psi in (0.1, 1.0, 10.0, 100.0):
    cfg = TrainerConfig(algorithm="sgd", psi0=psi, epochs=EPOCHS, seed=seed)
    runs[f"SGD {psi:g}"] = train(cfg, train_set, test_set, student())

for name, rec in runs.items():
    print(f"{name:8s}", "  ".join(f"{m:.4f}" for _, m in rec.epochs))

# %% [markdown]
# The stepsize linGrad picked, and the starting value it forgot:

# %%
lin = runs["linGrad"]
print("first applied:", lin.rows[0][2])
for e in range(1, EPOCHS + 1):
    print(f"epoch {e}: median applied stepsize {np.median([r[2] for r in lin.rows if r[0] == e]):.4g}")
eps = [r[3] for r in lin.rows if r[3] is not None]
print("measured eps: median", np.median(eps), " max", np.max(eps))

# %% [markdown]
# Charts go to `demo_out/` (SVG).

# %%
out = Path("demo_out")
out.mkdir(exist_ok=True)
plot_objective(lin.epochs, lin.rows, out / "lingrad_objective.svg")
plot_stepsize(lin.rows, out / "lingrad_stepsize.svg")
print("wrote", sorted(p.name for p in out.iterdir()))
