import pytest

from consensus_pd import assemble_ledger, compute_optimal_equilibrium, solve_kkt_oracle

from instances import desk_box, desk_network, desk_problem


@pytest.fixture(scope="session")
def desk():
    problem, network = desk_problem(), desk_network()
    kkt = solve_kkt_oracle(problem)
    return problem, network, kkt


@pytest.fixture(scope="session")
def desk_ledger(desk):
    problem, network, kkt = desk
    eq = compute_optimal_equilibrium(problem, network, kkt, 0.05)
    return assemble_ledger(problem, network, kkt, eq, desk_box())
