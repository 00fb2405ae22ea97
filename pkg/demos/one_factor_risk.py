"""Risk of a single loss factor when three experts disagree on its law.

Two experts fit a Gaussian, the third a heavier-tailed Student t. The
priors are pooled through their quantile barycenter and the risk of an
option-like quadratic position is computed by every available method.
"""

import numpy as np

from frechet_risk import (PriorSet, QuantileModel, quadratic, quantile_barycenter, risk_1d_direct,
                          risk_1d_foc, risk_1d_perturbative, risk_1d_quadratic)
from frechet_risk.errors import IllPosedError

experts = PriorSet.of([QuantileModel.normal(0.0, 1.0),
                       QuantileModel.normal(0.3, 1.4),
                       QuantileModel.student_t(4, loc=-0.1, scale=0.9)],
                      weights=[0.5, 0.3, 0.2])
bar = quantile_barycenter(experts)
print(f"barycenter mean {bar.model.mean():.4f}, Frechet variance {bar.frechet_variance:.4f}")

# delta-gamma position: loss = 0.1 + z + z^2 / 4
alpha, b, c = 0.1, 1.0, 0.5
phi = quadratic(alpha, b, c)
print(f"\n{'gamma':>6} {'closed':>10} {'foc':>10} {'direct':>10} {'perturb':>10}")
for gamma in (0.01, 0.1, 0.5, 1.0):
    row = [risk_1d_quadratic(experts, alpha, b, c, gamma).value,
           risk_1d_foc(experts, phi, gamma).value,
           risk_1d_direct(experts, phi, gamma).value,
           risk_1d_perturbative(experts, phi, gamma).value]
    print(f"{gamma:6.2f} " + " ".join(f"{v:10.5f}" for v in row))

# the worst case model stretches the barycenter quantiles by 1 / (1 - c gamma)
rep = risk_1d_foc(experts, phi, 1.0)
stretch = np.std(rep.maximizer.values) / np.std(bar.model.values)
print(f"\nstretch of the worst-case quantiles at gamma=1: {stretch:.4f} (1/lambda = {1 / 0.5:.4f})")

try:
    risk_1d_quadratic(experts, alpha, b, c, 2.5)
except IllPosedError as exc:
    print(f"gamma=2.5: {exc}")
