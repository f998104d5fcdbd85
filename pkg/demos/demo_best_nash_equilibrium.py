"""Selecting the least-norm Nash equilibrium of a two-player zero-sum game.

The lower level is the game's variational inequality over a box; its
solution set is a whole edge, and the upper-level identity operator steers
the iterates to the minimum-norm point [11, 10].  We run the inertial
method, print the error trajectory, and check the gap certificates by hand.
"""

import numpy as np

from bivi import (ConstantAlpha, ConstantEta, ConstantLambda, ScheduleConfig,
                  StoppingRule, gap_FX, gap_HQ_surrogate, make_example1, run)
from bivi.diagnostics import bound_feasibility_constant

problem = make_example1()
schedule = ScheduleConfig(ConstantEta(0.1), ConstantAlpha(0.5), ConstantLambda(1.0))
result = run(problem, schedule, StoppingRule(max_iters=5000, tol_known_solution=1e-10),
             x0=[40.0, 40.0], record_stride=1)

print(f"stopped: {result.stop_reason} after {result.state.k} iterations")
print(f"solution: {result.state.x_curr}  (target {problem.known_solution})")
print("\n  k   ||x_k - x*||     gap_FX(ybar)   feasibility bound")
for rec in result.records[:8]:
    gap = gap_FX(rec["ybar"], problem)
    bound = bound_feasibility_constant(rec["k"], DX=problem.diameter_DX,
                                       lam_lo=1.0, lam_hi=1.0, eta=0.1,
                                       shat=rec["shat_partial"], CH=problem.C_H)
    print(f"{rec['k']:>3}   {rec['err_known']:<12.6f}   {gap:<12.4f}   {bound:.1f}")

ybar = result.records[-1]["ybar"]
print(f"\nfinal ergodic mean {ybar}, surrogate upper-level gap "
      f"{gap_HQ_surrogate(ybar, problem):.3e}")
