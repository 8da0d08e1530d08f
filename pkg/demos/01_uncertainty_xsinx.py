# %% [markdown]
# # Uncertainty from a sampled parameter vector
#
# A hypernetwork turns uniform noise into all 385 weights of a one-hidden-layer
# MLP. Each noise draw is one plausible regressor; the spread across draws is
# the predictive uncertainty. We fit it to 32 points of `x sin x` plus four
# deliberately contradictory points at x = 7, 8.5, 10 and 11.5, then look at
# how wide the predictive band is in three regions: on the clean curve, near
# the contradictory points, and outside the training range.

# %%
import numpy as np

import hyperbayes as hb

data = hb.gen_xsinx(rng=0).standardize()
primary = hb.MLP([1, 128, 1])
print("parameters per sample:", primary.layout.total_len)

# %% [markdown]
# An unconditioned posterior draws one weight vector per sample; a conditional
# one also sees x, so its weights can change along the input axis.

# %%
posteriors = {
    "unconditioned": hb.Hypernet(primary.layout, "[4,16,P]", np.random.default_rng(1)),
    "conditional": hb.Hypernet(primary.layout, "[4,16,P]", np.random.default_rng(1), cond_dim=1),
}
cfg = hb.TrainConfig(epochs=400, batch_size=36, mc_samples=10, lr=1e-2,
                     early_stopping=hb.EarlyStopping(enabled=False))
likelihood = hb.GaussianLikelihood(0.1)
for name, post in posteriors.items():
    report = hb.train(primary, post, likelihood, data, cfg)
    print(f"{name:>13}: final training loss {report.train_loss[-1]:.3f}")

# %% [markdown]
# Thirty samples from each posterior predictive, summarised per region of the
# original x axis.

# %%
x_raw = data.x_scaler.inverse(data.x_test)[:, 0]
regions = {
    "clean curve (0-6)": (x_raw > 0) & (x_raw < 6),
    "contradictory (6.5-12)": (x_raw > 6.5) & (x_raw < 12),
    "outside training (12-14)": x_raw > 12,
}
for name, post in posteriors.items():
    fan = hb.sample_predictive(primary, post, data.x_test, 30, np.random.default_rng(2))
    widths = ", ".join(f"{r}: {fan.band_width[m].mean():.2f}" for r, m in regions.items())
    print(f"{name:>13} 95% band width -> {widths}")

# %% [markdown]
# The band should be narrowest on the clean curve and widen where the data
# disagree with each other or stop altogether. `fan.to_csv(path)` writes every
# sample plus mean and quantiles for plotting.
