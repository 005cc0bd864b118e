"""
Smooth quantile curves from replicated measurements
===================================================

Replicates at one configuration are turned into a monotone I-spline
quantile function, which can be evaluated anywhere on [0, 1] and inverted
back to a CDF.
"""

import numpy as np

from quantgp import build_basis, ecdf, eval_quantile, fit_quantile, quantile_to_cdf_values
from quantgp.metrics import summary_stats

rng = np.random.default_rng(0)

# a bimodal outcome, as throughput measurements often are
sample = np.r_[rng.normal(1.0, 0.2, 120), rng.normal(2.5, 0.3, 80)]

# order-3 I-splines with 20 interior knots give 24 coefficients
basis = build_basis(order=3, num_interior_knots=20)
fit = fit_quantile(ecdf(sample), basis)
print("coefficients:", fit.beta.size, "all slopes nonnegative:", bool(np.all(fit.beta[1:] >= 0)))

p = np.array([0.05, 0.25, 0.5, 0.75, 0.95])
print("smoothed quantiles:", np.round(eval_quantile(fit, basis, p), 3))
print("sample quantiles:  ", np.round(np.quantile(sample, p), 3))

# inverting the smoothed quantile function gives a CDF
y = np.linspace(0.5, 3.0, 6)
print("CDF at", y, "=", np.round(quantile_to_cdf_values(fit, basis, y), 3))

# moments come straight from the quantile function
st = summary_stats(fit, basis)
print(f"mean {st.mean:.3f} (sample {sample.mean():.3f}), sd {st.sd:.3f} (sample {sample.std():.3f})")
