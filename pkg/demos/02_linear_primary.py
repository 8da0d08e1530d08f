# %% [markdown]
# # A straight line that fits a wave
#
# The primary model here is `y = w x + b`: two parameters. With an
# unconditioned posterior every sample is still a straight line, so the best
# it can do on `x sin x` is the least-squares line. A conditional posterior
# produces `(w, b)` from `(z, x)`, so the line it uses changes with x and the
# ensemble traces the curve. The bundled configs hold the settings.

# %%
from pathlib import Path
import tempfile

import hyperbayes as hb

configs = Path(__file__).resolve().parents[1] / "configs"
out = Path(tempfile.mkdtemp(prefix="linear_primary_"))

results = {}
for name in ("xsinx_linear_unconditioned", "xsinx_linear_conditional"):
    results[name] = hb.run(configs / f"{name}.cfg", out / name).metrics

# %% [markdown]
# RMSE of the fan median on the 32 clean points, in standardised units,
# against the ordinary least-squares line on the same points.

# %%
line = results["xsinx_linear_unconditioned"]["line_rmse_base"]
print(f"{'least-squares line':<28}{line:.3f}")
for name, m in results.items():
    print(f"{name:<28}{m['train_rmse_median_base']:.3f}")
print("run directories under", out)
