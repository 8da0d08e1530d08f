# %% [markdown]
# # Sum of squares with a weight penalty
#
# Any cost can stand in for a log-likelihood. Here each sample is scored by
# `-(sum of squared errors) - lam * |theta|^2`, averaged over samples. Small
# `lam` lets the samples fit the data; a very large `lam` pins every weight
# near zero and the predictions flatten to the (standardised) target mean.

# %%
import numpy as np

import hyperbayes as hb

data = hb.gen_xsinx(rng=0).standardize()
primary = hb.MLP([1, 64, 1])
cfg = hb.TrainConfig(epochs=300, batch_size=36, mc_samples=10, lr=1e-2,
                     loss_mode="neg_mean_log_prob", early_stopping=hb.EarlyStopping(enabled=False))

for lam in (0.0, 0.01, 100.0):
    post = hb.Hypernet(primary.layout, "[4,16,P]", np.random.default_rng(0))
    hb.train(primary, post, hb.SseL2Likelihood(lam), data, cfg)
    fan = hb.sample_predictive(primary, post, data.x_test, 30, np.random.default_rng(1))
    print(f"lam={lam:<7} train RMSE {hb.rmse(hb.sample_predictive(primary, post, data.x, 30, np.random.default_rng(1)).mean, data.y):.3f}"
          f"   spread of mean curve over x {fan.mean.std():.3f}")
