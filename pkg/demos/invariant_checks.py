"""
Checking the structural invariants, and watching one of them break
==================================================================

The ``validate`` command bundles these checks.  Here they are called one by
one; at the end the ``z`` update is deliberately corrupted and the
conservation check catches it.
"""

import numpy as np

from consensus_pd import (
    AlgorithmState,
    ConstrainedProblem,
    Network,
    compute_optimal_equilibrium,
    solve_kkt_oracle,
    squared_distance_agent,
    step_distributed,
)
from consensus_pd import checks

problem = ConstrainedProblem([
    squared_distance_agent(0.0, p=[1.0], q=[-0.5]),
    squared_distance_agent(1.0),
    squared_distance_agent(2.0),
])
network = Network.preset("path", 3, 0.2)
kkt = solve_kkt_oracle(problem)
gamma = 0.05
eq = compute_optimal_equilibrium(problem, network, kkt, gamma)
rng = np.random.default_rng(0)

results = [
    checks.check_conservation(problem, network, gamma, 10000, rng),
    checks.check_fixed_point(problem, network, eq, gamma),
    checks.check_commutation(problem, network, gamma, rng, 200),
    checks.check_reconstruction(problem, network, eq, gamma, rng, 200),
    checks.check_lyapunov(network),
    checks.check_P_sandwich(network, rng, 2000),
    checks.check_distance_formula(problem, network, eq, rng, 20),
]
for r in results:
    print("%-18s %s  value %.2e  tolerance %.1e" % (r.name, "PASS" if r.passed else "FAIL", r.value, r.tolerance))


def corrupted_step(problem, network, state, gamma):
    # flip the sign of the integral state after every update
    nxt = step_distributed(problem, network, state, gamma)
    return AlgorithmState(nxt.x, -nxt.z, nxt.lam, nxt.t)


bad = checks.check_conservation(problem, network, gamma, 10000, rng, step=corrupted_step)
print("corrupted z update: conservation %s after %s (drift %.2e)"
      % ("PASS" if bad.passed else "FAIL", bad.detail, bad.value))
