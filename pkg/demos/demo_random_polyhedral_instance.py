"""Random strongly monotone selection over a random polyhedron.

Reproduces the random benchmark setup: a Gram-matrix lower level over
C = {x >= 0 : Ex <= f} and a symmetrized positive-definite upper level.
Compares zero inertia against constant inertia on the ergodic-increment
metric D and the complementarity residual phi.
"""

import numpy as np

from bivi import (ConstantAlpha, ConstantEta, ConstantLambda, ScheduleConfig,
                  StoppingRule, ZeroAlpha, infeasibility_phi, make_example2, run)

problem = make_example2(m=100, seed=0)
lam = ConstantLambda(1.0 / problem.F.lipschitz_constant)  # the benchmark's choice
print(f"instance: {problem.name}, L_F = {problem.F.lipschitz_constant:.1f}, "
      f"mu_H = {problem.H.strong_monotonicity_mu:.1f}")

for label, alpha in (("zero inertia   ", ZeroAlpha()),
                     ("constant 0.1   ", ConstantAlpha(0.1))):
    schedule = ScheduleConfig(ConstantEta(0.1), alpha, lam, enforce_stepsize=False)
    result = run(problem, schedule, StoppingRule(max_iters=2000),
                 x0=np.ones(100), record_stride=100)
    final = result.records[-1]
    phi = infeasibility_phi(final["ybar"], problem.F)
    print(f"{label} final D = {final['D']:.3e}   phi(ybar) = {phi:.3e}")
