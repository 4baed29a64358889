"""Distributed primal-dual iteration, its core subsystem and helpers.

The distributed update on stacked states ``(x, z, lam)`` is

    x+   = (I - K) x - K z - gamma n Phi(x, lam)
    z+   = z + K x
    lam+ = max(0, lam + gamma g(x))

In average-dispersion coordinates the mean of ``z`` is constant, and
dropping it leaves the core subsystem on ``(x_m, x_perp, z_perp, lam)``.
"""

from dataclasses import dataclass
import logging
import math

import numpy as np

from .exceptions import ConsistencyError, NumericOverflowError, ShapeError

log = logging.getLogger(__name__)

FIXED_POINT_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class AlgorithmState:
    x: np.ndarray
    z: np.ndarray
    lam: np.ndarray
    t: int = 0

    @classmethod
    def initial(cls, x0, n_constraints, z0=None, lam0=None):
        """State with ``z0 = 0`` and ``lam0 = 0`` unless given."""
        x0 = np.array(x0, dtype=float)
        z0 = np.zeros_like(x0) if z0 is None else np.array(z0, dtype=float)
        lam0 = np.zeros(n_constraints) if lam0 is None else np.array(lam0, dtype=float)
        if lam0.size and lam0.min() < 0:
            raise ValueError("initial multipliers must be nonnegative")
        return cls(x0, z0, lam0, 0)


@dataclass(frozen=True, eq=False)
class CoreState:
    x_m: float
    x_perp: np.ndarray
    z_perp: np.ndarray
    lam: np.ndarray

    @property
    def xi(self):
        return np.concatenate([self.x_perp, self.z_perp])


def to_core(network, state):
    x_m, x_perp = network.decompose(state.x)
    return CoreState(x_m, x_perp, network.S.T @ state.z, state.lam.copy())


def from_core(network, core, z_m=0.0, t=0):
    x = network.recompose(core.x_m, core.x_perp)
    z = network.recompose(z_m, core.z_perp)
    return AlgorithmState(x, z, core.lam.copy(), t)


@dataclass(frozen=True, eq=False)
class OptimalEquilibrium:
    """The set of optimal equilibria for a given stepsize.

    Every member is ``(1 theta*, S z_perp* + 1 c, lambda*)`` for some real
    ``c``.
    """

    theta_star: float
    lambda_star: np.ndarray
    z_perp_star: np.ndarray
    gamma: float

    def z_e(self, network, c=0.0):
        return network.recompose(c, self.z_perp_star)

    def point(self, network, c=0.0):
        return AlgorithmState(np.full(network.n, self.theta_star), self.z_e(network, c),
                              self.lambda_star.copy(), 0)

    def core_point(self):
        return CoreState(self.theta_star, np.zeros_like(self.z_perp_star),
                         self.z_perp_star.copy(), self.lambda_star.copy())

    @property
    def xi_star(self):
        return np.concatenate([np.zeros_like(self.z_perp_star), self.z_perp_star])


def _check_state(problem, network, state):
    if state.x.shape != (problem.n,) or state.z.shape != (problem.n,):
        raise ShapeError(f"state vectors must have length {problem.n}")
    if network.n != problem.n:
        raise ShapeError(f"network has {network.n} agents, problem has {problem.n}")
    if state.lam.shape != (problem.m,):
        raise ShapeError(f"multipliers must have length {problem.m}")


_add = np.add.reduce


def _require_finite(t, *arrays):
    # a sum is non-finite iff some entry is (or the entries are near overflow anyway)
    if not math.isfinite(sum(float(_add(a)) for a in arrays)):
        raise NumericOverflowError("non-finite value in iterate", t)


def step_distributed(problem, network, state, gamma):
    """One iteration of the distributed primal-dual algorithm."""
    if not gamma > 0:
        raise ValueError("stepsize must be positive")
    x, z, lam = state.x, state.z, state.lam
    K = network.K
    phi = problem.phi(x, lam)
    Kx = K @ x
    x_new = x - Kx - K @ z - (gamma * problem.n) * phi
    z_new = z + Kx
    lam_new = np.maximum(0.0, lam + gamma * problem.constraints(x)) if problem.m else lam.copy()
    _require_finite(state.t, x_new, z_new, lam_new)
    return AlgorithmState(x_new, z_new, lam_new, state.t + 1)


def step_centralized(problem, theta, lam, gamma):
    """Arrow-Hurwicz-Uzawa step on ``(theta, lam)``.

    ``theta+ = theta - gamma 1'Phi(1 theta, lam)``,
    ``lam+ = max(0, lam + gamma g(1 theta))``.
    """
    if not gamma > 0:
        raise ValueError("stepsize must be positive")
    x = problem.consensual(theta)
    theta_new = theta - gamma * float(np.sum(problem.phi(x, lam)))
    lam_new = np.maximum(0.0, lam + gamma * problem.constraints(x)) if problem.m else np.asarray(lam).copy()
    if not (math.isfinite(theta_new) and np.all(np.isfinite(lam_new))):
        raise NumericOverflowError("non-finite value in centralized iterate", -1)
    return theta_new, lam_new


def step_core(problem, network, core, gamma):
    """One iteration of the core subsystem."""
    if not gamma > 0:
        raise ValueError("stepsize must be positive")
    x = network.recompose(core.x_m, core.x_perp)
    phi = problem.phi(x, core.lam)
    L = network.SKS
    x_m = core.x_m - gamma * float(np.sum(phi))
    x_perp = core.x_perp - L @ core.x_perp - L @ core.z_perp - (gamma * problem.n) * (network.S.T @ phi)
    z_perp = core.z_perp + L @ core.x_perp
    lam = np.maximum(0.0, core.lam + gamma * problem.constraints(x)) if problem.m else core.lam.copy()
    return CoreState(x_m, x_perp, z_perp, lam)


def perturbation_signals(problem, network, core, eq):
    """Coupling signals between the optimization and network dynamics.

    Returns
    -------
    w : float
        ``1'(Phi(1 x_m, lam) - Phi(x, lam))``.
    d : ndarray
        ``g(x) - g(1 x_m)``.
    v : ndarray
        ``Phi(1 theta*, lambda*) - Phi(x, lam)``.
    """
    x = network.recompose(core.x_m, core.x_perp)
    x_cons = problem.consensual(core.x_m)
    phi = problem.phi(x, core.lam)
    w = float(np.sum(problem.phi(x_cons, core.lam)) - np.sum(phi))
    d = problem.constraints(x) - problem.constraints(x_cons)
    v = problem.phi(problem.consensual(eq.theta_star), eq.lambda_star) - phi
    return w, d, v


def perturbed_optimization_step(problem, x_m, lam, w, d, gamma):
    """Centralized step driven by the perturbations ``w`` and ``d``."""
    x_cons = problem.consensual(x_m)
    x_m_new = x_m - gamma * float(np.sum(problem.phi(x_cons, lam))) + gamma * w
    lam_new = np.maximum(0.0, lam + gamma * problem.constraints(x_cons) + gamma * d) if problem.m else lam.copy()
    return x_m_new, lam_new


def perturbed_network_step(problem, network, xi, v, eq, gamma):
    """``A xi - gamma n B Phi(1 theta*, lambda*) + gamma n B v``."""
    phi_star = problem.phi(problem.consensual(eq.theta_star), eq.lambda_star)
    gn = gamma * problem.n
    return network.A @ xi - gn * (network.B @ phi_star) + gn * (network.B @ v)


def compute_optimal_equilibrium(problem, network, kkt, gamma):
    """Optimal equilibrium set for stepsize ``gamma``.

    ``z_perp* = -gamma n (S'KS)^{-1} S' Phi(1 theta*, lambda*)``; the
    fixed-point property is checked with one distributed step.

    Raises
    ------
    ConsistencyError
        If the constructed point moves by more than ``1e-10``.
    """
    if not gamma > 0:
        raise ValueError("stepsize must be positive")
    lam_star = np.asarray(kkt.lambda_star, dtype=float)
    phi_star = problem.phi(problem.consensual(kkt.theta_star), lam_star)
    if network.n > 1:
        z_perp = -gamma * problem.n * np.linalg.solve(network.SKS, network.S.T @ phi_star)
    else:
        z_perp = np.zeros(0)
    eq = OptimalEquilibrium(float(kkt.theta_star), lam_star.copy(), z_perp, float(gamma))
    res = fixed_point_residual(problem, network, eq.point(network), gamma)
    if res > FIXED_POINT_TOL:
        raise ConsistencyError(f"equilibrium moves by {res:.3e} under one step")
    return eq


def fixed_point_residual(problem, network, state, gamma):
    """Infinity norm of ``step(state) - state``."""
    nxt = step_distributed(problem, network, state, gamma)
    parts = [np.abs(nxt.x - state.x), np.abs(nxt.z - state.z), np.abs(nxt.lam - state.lam)]
    return float(max(np.max(p, initial=0.0) for p in parts))


def distance_to_optimal_set(state, eq, network):
    """``|(sqrt(n)(x_m - theta*), x_perp, z_perp - z_perp*, lam - lambda*)|``.

    Equals the Euclidean distance from ``state`` to the closest optimal
    equilibrium (the free mean of ``z`` is matched exactly).
    """
    x_m, x_perp = network.decompose(state.x)
    z_perp = network.S.T @ state.z
    sq = (network.n * (x_m - eq.theta_star) ** 2 + np.dot(x_perp, x_perp)
          + np.sum((z_perp - eq.z_perp_star) ** 2) + np.sum((state.lam - eq.lambda_star) ** 2))
    return math.sqrt(sq)


def core_distance(core, eq):
    """``|(x_m - theta*, x_perp, z_perp - z_perp*, lam - lambda*)|``."""
    sq = ((core.x_m - eq.theta_star) ** 2 + np.dot(core.x_perp, core.x_perp)
          + np.sum((core.z_perp - eq.z_perp_star) ** 2) + np.sum((core.lam - eq.lambda_star) ** 2))
    return math.sqrt(sq)


CSV_COLUMNS = ("t", "dist", "x_perp_norm", "kkt_stationarity", "kkt_primal", "kkt_comp",
               "z_sum", "V", "V_opt", "V_net")


@dataclass
class TrajectoryRecord:
    """Per-iteration diagnostics of a run plus a summary.

    ``rows`` holds one tuple per recorded iterate (``t = 0`` included) in
    ``CSV_COLUMNS`` order; missing values are ``None``.
    """

    rows: list
    summary: dict
    states: list = None
    final_state: AlgorithmState = None


def fit_linear_rate(dists, floor=1e-12):
    """Least-squares line through ``log(dist)`` on the last half of the run.

    Returns ``(slope, rate, r2)`` with ``rate = exp(slope)``; all ``None``
    when fewer than three usable points remain.
    """
    dists = np.asarray([np.nan if d is None else d for d in dists], dtype=float)
    t = np.arange(len(dists))
    tail = slice(len(dists) // 2, None)
    t, y = t[tail], dists[tail]
    keep = np.isfinite(y) & (y > floor)
    if keep.sum() < 3:
        return None, None, None
    t, y = t[keep], np.log(y[keep])
    slope, intercept = np.polyfit(t, y, 1)
    resid = y - (slope * t + intercept)
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid ** 2) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(math.exp(slope)), float(r2)


def _diagnostics(problem, network, state, eq, certificate):
    try:
        with np.errstate(over="raise", invalid="raise"):
            row = _diagnostic_row(problem, network, state, eq, certificate)
    except (OverflowError, FloatingPointError):
        row = None
    if row is None or not all(v is None or math.isfinite(v) for v in row):
        raise NumericOverflowError("diagnostics overflowed", state.t)
    return row


def _diagnostic_row(problem, network, state, eq, certificate):
    core = to_core(network, state)
    res = _kkt_at(problem, core.x_m, state.lam)
    dist = distance_to_optimal_set(state, eq, network) if eq is not None else None
    if certificate is not None:
        V, V_opt, V_net = certificate.lyapunov(core)
    else:
        V = V_opt = V_net = None
    return (state.t, dist, float(np.linalg.norm(core.x_perp)), res[0], res[1], res[3],
            float(np.sum(state.z)), V, V_opt, V_net)


def _kkt_at(problem, theta, lam):
    from .problem import kkt_residual
    return kkt_residual(problem, theta, lam)


def run(problem, network, gamma, init, max_iter, stop_tol=1e-8, eq=None,
        certificate=None, record_states=False, step=None):
    """Iterate the distributed algorithm and record diagnostics.

    Stops once the distance to the optimal set is at most ``stop_tol`` (when
    ``eq`` is given), or once ``KKT residual + |x_perp| <= stop_tol`` without
    an oracle, or after ``max_iter`` iterations.  A ``NumericOverflowError``
    from the update propagates with its iteration index.

    Parameters
    ----------
    certificate : object, optional
        Anything with a ``lyapunov(core) -> (V, V_opt, V_net)`` method; fills
        the ``V`` columns.
    step : callable, optional
        Replacement for ``step_distributed`` with the same signature.
    """
    if not gamma > 0:
        raise ValueError("stepsize must be positive")
    if init.lam.size and init.lam.min() < 0:
        raise ValueError("initial multipliers must be nonnegative")
    _check_state(problem, network, init)
    step = step or step_distributed

    state = init
    rows = [_diagnostics(problem, network, state, eq, certificate)]
    states = [state] if record_states else None
    stop_reason = "max_iter"

    def converged(row):
        if eq is not None:
            return row[1] <= stop_tol
        return row[3] + row[4] + row[5] + row[2] <= stop_tol

    if converged(rows[0]):
        stop_reason = "converged"
    else:
        for _ in range(max_iter):
            state = step(problem, network, state, gamma)
            row = _diagnostics(problem, network, state, eq, certificate)
            rows.append(row)
            if record_states:
                states.append(state)
            if converged(row):
                stop_reason = "converged"
                break

    slope, rate, r2 = fit_linear_rate([r[1] for r in rows]) if eq is not None else (None, None, None)
    summary = {
        "iterations": state.t - init.t,
        "stop_reason": stop_reason,
        "final_dist": rows[-1][1],
        "fitted_slope": slope,
        "fitted_rate": rate,
        "fitted_r2": r2,
        "gamma": gamma,
    }
    log.info("run finished: %s after %d iterations", stop_reason, summary["iterations"])
    return TrajectoryRecord(rows, summary, states, state)
