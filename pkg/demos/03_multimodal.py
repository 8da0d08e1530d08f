# %% [markdown]
# # Two answers at once
#
# Two parallel branches overlap on x in (0.3, 0.6). A Gaussian likelihood
# would put its mass between them; the negative L1 norm is not a density, but
# because the posterior is only ever sampled it can still be used, and it lets
# the samples split between the branches.

# %%
from pathlib import Path
import tempfile

import numpy as np

import hyperbayes as hb

configs = Path(__file__).resolve().parents[1] / "configs"
res = hb.run(configs / "multimodal_l1.cfg", Path(tempfile.mkdtemp(prefix="multimodal_")))
print({k: res.metrics[k] for k in ("bimodal_fraction_overlap", "unimodal_fraction_outside")})

# %% [markdown]
# A text histogram of the 30 predictive samples at one input inside the
# overlap and one outside it.

# %%
fan = res.fan
x_raw = np.linspace(0, 1, len(fan.x) + 2)[1:-1]
for target in (0.45, 0.15):
    i = int(np.argmin(np.abs(x_raw - target)))
    counts, edges = np.histogram(fan.samples[:, i, 0], bins=12)
    print(f"\nx = {x_raw[i]:.2f}")
    for c, lo in zip(counts, edges):
        print(f"{lo:6.2f} {'#' * int(c)}")
