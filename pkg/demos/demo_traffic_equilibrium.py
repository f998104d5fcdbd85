"""Best traffic user equilibrium on the shipped 19-arc network.

The path-flow equilibrium is a complementarity problem over x = [h; u];
the upper level minimizes aggregate travel cost over the equilibrium set.
Watches demand feasibility and the complementarity residual along the run.
"""

import numpy as np

from bivi import (ConstantAlpha, ConstantEta, ConstantLambda, ScheduleConfig,
                  StoppingRule, infeasibility_phi, load_network, make_example3,
                  run)

net = load_network()
print(f"network: {net.n_arcs} arcs, {net.n_paths} paths, {net.n_od} OD pairs")
print(f"note: {net.note}")

problem = make_example3(net)
schedule = ScheduleConfig(ConstantEta(0.1), ConstantAlpha(0.5), ConstantLambda(0.1))
result = run(problem, schedule, StoppingRule(max_iters=5000),
             x0=np.ones(29), record_stride=500)

print("\n   k    phi(ybar)      demand residual")
for rec in result.records:
    h = rec["x"][:25]
    resid = float(np.linalg.norm(net.od_incidence @ h - net.demand))
    print(f"{rec['k']:>5}   {infeasibility_phi(rec['ybar'], problem.F):<12.4g}   {resid:.4g}")

h = result.state.x_curr[:25]
print("\nper-OD flow totals:", np.round(net.od_incidence @ h, 2))
print("demands:           ", net.demand)
