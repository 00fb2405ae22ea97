"""Premium of a compound Poisson book priced from a panel of experts.

First a single priced example, then a reduced version of the robustness
study: experts perturb the true frequency and severity laws, and the
Wasserstein premium is compared with the plain average of the experts'
premia.
"""

import sys

from frechet_risk import (LocationScatterModel, PremiumProblem, PriorSet, SimulationConfig,
                          premium_linear_1d, run_robustness_study)
from frechet_risk.premia import write_study_csv


def one_d(means, variances, weights=None):
    return PriorSet.of([LocationScatterModel([m], [[v]]) for m, v in zip(means, variances)],
                       weights)


freq = one_d([95.0, 100.0, 108.0], [20.0, 25.0, 30.0])
sev = one_d([48.0, 52.0, 50.0], [90.0, 110.0, 100.0])
for gamma in (0.0, 0.001, 0.01):
    sol = premium_linear_1d(PremiumProblem(freq, sev, 1.0, 1.0, gamma, loading=0.1))
    print(f"gamma={gamma:<6} m1={sol.m1:8.3f} m2={sol.m2:7.3f} premium={sol.premium:9.2f}")

# 20 replications keep this under ten seconds; the acceptance suite uses 100
cfg = SimulationConfig(replications=20, seed=1, n_experts=(5, 30),
                       gamma_grid=(0.01, 0.001, 0.0), methods=("average", "wasserstein"))
rows = run_robustness_study(cfg)
print()
write_study_csv(rows, sys.stdout)
