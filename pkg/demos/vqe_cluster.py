r"""Solving one cluster with the variational quantum eigensolver
===============================================================

A simulated VQE replaces exact diagonalisation on a single cluster. The
Hamiltonian variational ansatz (alternating XX, X and Z rotations tied by
the cluster's reflection symmetry) is optimised in two stages: the ground
state energy first, then a subspace cost that rotates every single-flip
reference state into an eigenstate.

Here the cost is the summed energy variance of the reference state and the
N flip states, all prepared with one unitary. When it reaches zero the
prepared states span exact eigenstates and the effective Hamiltonian equals
the ED one.
"""

import numpy as np

from nlcevqe.ed import ed_effective
from nlcevqe.model import ClusterGraph, ModelParams, build_hamiltonian
from nlcevqe.pcat import effective_from_states
from nlcevqe.vqe import OptimizerConfig, prepared_states, solve_cluster

graph = ClusterGraph.chain(6)
params = ModelParams(J=0.8)
ham = build_hamiltonian(graph, params)

######################################################################
# Two-stage optimisation
# ----------------------
#
# Stage 1 minimises the energy from small random angles. Stage 2 starts from
# those angles (the warm start) and minimises the variance cost with
# Polak-Ribiere conjugate gradients and exact adjoint gradients.

config = OptimizerConfig(max_iterations=3000)
sol = solve_cluster(graph, params, "var-gs-1qp", "half", "warm-start", config, seed=1)
print(f"stage 1 energy      {sol.gs_energy:.10f}")
print(f"stage 2 cost        {sol.initial_cost:.3e} -> {sol.final_cost:.3e} "
      f"in {sol.iterations} iterations ({sol.message})")

######################################################################
# From prepared states to the effective Hamiltonian
# -------------------------------------------------
#
# The overlaps of the prepared states with the unperturbed flip states feed
# PCAT exactly as the ED eigenvectors do.

gs, states = prepared_states(graph, sol)
eff_vqe = effective_from_states(gs, states, ham, graph.coords)[0]
eff_ed = ed_effective(graph, params)[0]
print(f"ground energy  VQE {eff_vqe.gs_energy:.8f}  ED {eff_ed.gs_energy:.8f}")
print(f"max |H_VQE - H_ED| = {np.abs(eff_vqe.matrix - eff_ed.matrix).max():.2e}")

######################################################################
# Cost history
# ------------
#
# The warm start already puts the variance low, and conjugate gradients
# then make slow progress: near the optimum the Hessian spans about six
# decades, so the last digits come at the cost of thousands of iterations.
# The effective Hamiltonian is far less sensitive than the cost and matches
# ED to a few parts in 1e5 long before the variance reaches zero.

hist = np.array(sol.cost_history)
for it in (0, 10, 100, 1000, len(hist) - 1):
    if it < len(hist):
        print(f"iteration {it:5d}  cost {hist[it]:.3e}")
