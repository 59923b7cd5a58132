# %% [markdown]
# # Datasets, file formats and the command line
#
# Teacher datasets and networks persist to small little-endian binary
# containers; MNIST is read from its big-endian IDX files.  Everything the
# library does is also reachable through the `lingrad` command.

# %%
import subprocess
import sys
import tempfile
from pathlib import Path

import numpy as np

from lingrad import generate_teacher_dataset, load_mnist_idx
from lingrad.checkpoint import load_network, save_network
from lingrad.data import load_dataset, save_dataset, write_idx_images, write_idx_labels

tmp = Path(tempfile.mkdtemp())
train_set, test_set, teacher = generate_teacher_dataset([4, 6, 3], 100, 20, seed=7)
save_dataset(tmp / "train.lrd", train_set)
save_network(tmp / "teacher.lrn", teacher)
print((tmp / "train.lrd").read_bytes()[:4], (tmp / "teacher.lrn").read_bytes()[:4])
print("round trip exact:", np.array_equal(load_dataset(tmp / "train.lrd").X, train_set.X),
      np.array_equal(load_network(tmp / "teacher.lrn").params.flatten(),
                     teacher.params.flatten()))

# %% [markdown]
# IDX files: pixels become `[0, 1]` floats and labels become one-hot rows.

# %%
write_idx_images(tmp / "img", np.array([[[0, 255], [51, 102]]], dtype=np.uint8))
write_idx_labels(tmp / "lab", [3])
ds = load_mnist_idx(tmp / "img", tmp / "lab")
print(ds.X, ds.Y)

# %% [markdown]
# The same flow from the shell.

# %%
def lingrad(*args):
    res = subprocess.run([sys.executable, "-m", "lingrad.cli", *args],
                         capture_output=True, text=True, check=True)
    print(res.stdout.strip())


lingrad("gen-data", "--widths", "4,6,3", "--n-train", "200", "--n-test", "50",
        "--out", str(tmp / "data"))
lingrad("train", "--data-dir", str(tmp / "data"), "--widths", "4,6,3", "--n-lin", "5",
        "--epochs", "2", "--out", str(tmp / "run"))
print((tmp / "run" / "history.csv").read_text().splitlines()[:4])
lingrad("export-plots", "--run", str(tmp / "run"))
