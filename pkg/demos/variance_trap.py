r"""Where variance minimisation gets stuck
========================================

With a longitudinal field and deep circuits, starting stage 2 from the
ground-state angles can leave the variance cost in a local minimum, with
the prepared "1QP" states overlapping two- and three-flip eigenstates.
This script runs both initialisations on a 6-site chain and tracks how
much of each exact eigenstate lies inside the prepared subspace.

At this size the two starts end at similar variances; the comparison is
mainly a template. The 10-site, 10-layer case is
``nlcevqe diagnose --cluster chain-10 --J 0.5 --hl 0.5 --layers full``.
"""

from nlcevqe.cli import RunConfig, projection_diagnostics
from nlcevqe.model import ClusterGraph, ModelParams
from nlcevqe.vqe import OptimizerConfig, solve_cluster

graph = ClusterGraph.chain(6)
params = ModelParams(J=0.5, h_l=0.5)
config = OptimizerConfig(max_iterations=1000)

######################################################################
# Warm start against near-zero angles
# -----------------------------------

for init in ("warm-start", "near-zero"):
    sol = solve_cluster(graph, params, "var-gs-1qp", "full", init, config, seed=0)
    print(f"{init:10s} final variance {sol.final_cost:.3e} after {sol.iterations} iterations")

######################################################################
# Projection of exact eigenstates on the prepared subspace
# --------------------------------------------------------
#
# A norm near 1 means the eigenstate lies inside the VQE 1QP subspace.
# Non-1QP states with a sizeable norm signal the trap.

cfg = RunConfig(J=0.5, h_l=0.5, layers="full", max_iterations=1000)
rows = projection_diagnostics(cfg, "chain-6", snapshots=(0, 100, 1000))
for it in sorted({r["iteration"] for r in rows}):
    sel = [r for r in rows if r["iteration"] == it]
    leak = sorted((r["norm"] for r in sel if not r["one_qp"]), reverse=True)[:3]
    inside = sum(r["norm"] ** 2 for r in sel if r["one_qp"])
    print(f"iteration {it:5d}  weight on ED 1QP states {inside:.3f}  "
          f"largest non-1QP norms {[round(x, 3) for x in leak]}")
