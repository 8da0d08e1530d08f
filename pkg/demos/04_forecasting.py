# %% [markdown]
# # Forecasting with a sampled N-BEATS
#
# Six past values predict the next three. The primary model is a small
# N-BEATS stack; we compare a single trained weight vector, an unconditioned
# posterior and a conditional posterior against repeating the last value.
# The series is synthetic (monthly-style seasonality, trend and noise); set
# `data.series` in a config to use a real one-column CSV instead.

# %%
from pathlib import Path
import tempfile

import hyperbayes as hb

configs = Path(__file__).resolve().parents[1] / "configs"
out = Path(tempfile.mkdtemp(prefix="forecast_"))
rows = {}
for name in ("forecast_point", "forecast_unconditioned", "forecast_conditional"):
    rows[name] = hb.run(configs / f"{name}.cfg", out / name).metrics

# %%
naive = rows["forecast_point"]
print(f"{'model':<24}{'RMSE':>8}{'RMSE sd':>9}{'MAPE':>8}{'MAPE sd':>9}")
print(f"{'naive':<24}{naive['naive_rmse']:8.3f}{naive['naive_rmse_std']:9.3f}"
      f"{naive['naive_mape']:8.2f}{naive['naive_mape_std']:9.2f}")
for name, m in rows.items():
    print(f"{name:<24}{m['rmse']:8.3f}{m['rmse_std']:9.3f}{m['mape']:8.2f}{m['mape_std']:9.2f}")
print("epoch times are in each run's manifest.json under", out)
