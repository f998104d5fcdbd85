"""Solver toolkit for bilevel variational inequalities.

The iteration takes extragradient steps for the regularized operator
F + eta_k H over a simple constraint set, from an inertially extrapolated
point; around it sit runtime inequality diagnostics, complexity-bound
certificates, and the benchmark instances used to exercise them.
"""

from .core import (BilevelProblem, OperatorSpec, affine_operator,
                   callable_operator, estimate_constants, eval_operator,
                   load_problem, save_problem)
from .diagnostics import (BoundReport, gap_FX, gap_HQ_surrogate,
                          infeasibility_phi, lemma_min, strong_thresholds,
                          threshold_constant_eta)
from .geometry import (Box, NonnegOrthant, Polyhedron, Singleton, SimpleSet,
                       WholeSpace, halfspace_project)
from .problems import (TrafficNetwork, default_network, load_network,
                       make_example1, make_example2, make_example3,
                       save_network)
from .schedule import (AdaptivePen, ConstantAlpha, ConstantEta,
                       ConstantLambda, DiminishingEta, IntervalLambda,
                       ScheduleConfig, ScheduleState, SummableTail, ZeroAlpha)
from .solver import (RunResult, SolverState, StoppingRule, ergodic_mean, run,
                     step)

__version__ = "0.1.0"
