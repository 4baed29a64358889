"""
The stability certificate and how conservative it is
====================================================

The Lyapunov analysis turns the problem data, the network and a box of
initial states into a chain of constants ending in a stepsize bound.  Below
that bound the iterates are proven to contract at rate ``mu`` with
overshoot ``c``.  On the three-agent example the bound is tiny, which is the
price of a worst-case argument; the practical stepsize 0.05 is far outside
it and still converges.
"""

import numpy as np

from consensus_pd import (
    AlgorithmState,
    Certificate,
    ConstrainedProblem,
    InitBox,
    Network,
    assemble_ledger,
    compute_optimal_equilibrium,
    monitor_descent,
    rate_certificate,
    run,
    solve_kkt_oracle,
    squared_distance_agent,
)

problem = ConstrainedProblem([
    squared_distance_agent(0.0, p=[1.0], q=[-0.5]),
    squared_distance_agent(1.0),
    squared_distance_agent(2.0),
])
network = Network.preset("path", 3, 0.2)
kkt = solve_kkt_oracle(problem)

# initial states: x in [-1, 1]^3, z = 0, lambda in [0, 1]
box = InitBox.uniform(3, 1, x=(-1.0, 1.0), z=(0.0, 0.0), lam=(0.0, 1.0))
eq = compute_optimal_equilibrium(problem, network, kkt, 1.0)
ledger = assemble_ledger(problem, network, kkt, eq, box)

L = ledger.values
for name in ("kappa0", "kappa1", "kappa", "mu_f", "q0", "M", "beta", "eps"):
    print("%-8s %.6g" % (name, L[name]))

# the twenty stepsize conditions; the smallest one is the certified bound
g = np.array(ledger.gammabar)
for i in np.argsort(g)[:5]:
    print("gammabar%-2d = %.3e" % (i + 1, g[i]))
print("certified bound gammabar0 = %.3e" % L["gammabar0"])

# rate certificates for a few stepsizes below the bound
for frac in (2, 10, 100):
    rc = rate_certificate(ledger, L["gammabar0"] / frac)
    print("gamma = g0/%-3d omega = %.3e  mu = %r  log c = %.3e" % (frac, rc.omega, rc.mu, rc.log_c))

# check the descent inequality along an actual certified trajectory
gamma = L["gammabar0"] / 2
eq = compute_optimal_equilibrium(problem, network, kkt, gamma)
cert = Certificate(problem, network, ledger, eq, gamma)
rec = run(problem, network, gamma, AlgorithmState.initial(np.ones(3), 1), 2000, stop_tol=0.0,
          eq=eq, record_states=True)
report = monitor_descent(rec.states, cert)
print("monitor: %d states, %d descent and %d envelope violations"
      % (report.checked, len(report.descent_violations), len(report.envelope_violations)))
