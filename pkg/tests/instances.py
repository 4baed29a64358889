"""Problem instances shared by the test modules."""

from consensus_pd import (
    ConstrainedProblem,
    InitBox,
    Network,
    QuadraticAgentProblem,
    squared_distance_agent,
)


def desk_problem():
    """Costs (t - 0)^2, (t - 1)^2, (t - 2)^2; agent 0 requires t <= 0.5."""
    return ConstrainedProblem([
        squared_distance_agent(0.0, p=[1.0], q=[-0.5]),
        squared_distance_agent(1.0),
        squared_distance_agent(2.0),
    ])


def desk_network():
    return Network.preset("path", 3, 0.2)


def desk_box():
    return InitBox.uniform(3, 1, x=(-1.0, 1.0), z=(0.0, 0.0), lam=(0.0, 1.0))


def random_instance(rng, n_max=5, m_max=3, n=None, m=None):
    """Random feasible quadratic/affine problem on a random connected network.

    A reference point ``t0`` satisfies every constraint with a random slack,
    so the instance is always feasible.
    """
    n = int(rng.integers(1, n_max + 1)) if n is None else n
    m = int(rng.integers(1, m_max + 1)) if m is None else m
    owners = rng.integers(0, n, size=m)
    t0 = rng.uniform(-1, 1)
    rows = [([], []) for _ in range(n)]
    for i in owners:
        p = rng.choice([-1.0, 1.0]) * rng.uniform(0.5, 2.0)
        q = -p * t0 - rng.uniform(0.0, 2.0)
        rows[i][0].append(p)
        rows[i][1].append(q)
    agents = [QuadraticAgentProblem(rng.uniform(0.5, 3.0), rng.uniform(-3, 3), p, q) for p, q in rows]
    problem = ConstrainedProblem(agents)
    edges = [(i, i + 1, rng.uniform(0.1, 1.0)) for i in range(n - 1)]
    for i in range(n):
        for j in range(i + 2, n):
            if rng.random() < 0.4:
                edges.append((i, j, rng.uniform(0.1, 1.0)))
    network = Network.from_edges(n, edges, normalize=True)
    return problem, network
