"""Constrained consensus problems and a ground-truth KKT oracle.

Every agent ``i`` owns a scalar cost ``f_i`` and a vector of constraints
``g_i`` (possibly empty).  The network jointly solves

    min_theta  sum_i f_i(theta)   s.t.  g_i(theta) <= 0  for all i.

Multipliers are stacked agent by agent, so ``lam[k]`` belongs to the
constraint ``index_pairs[k] == (i, j)``.  Indices are 0-based.
"""

from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable, NamedTuple, Optional

import numpy as np

from .exceptions import (
    AssumptionViolation,
    ComplementarityError,
    DegenerateProblemError,
    InfeasibleProblemError,
    ShapeError,
)

ACTIVE_TOL = 1e-9


@dataclass(frozen=True)
class AgentProblem:
    """Generic agent given by callables.

    ``constraint_eval`` and ``constraint_grad`` map a scalar to an array of
    length ``m_i``; since the decision variable is scalar the Jacobian of
    ``g_i`` is a single column, returned here as a flat array.
    """

    cost_eval: Callable[[float], float]
    cost_grad: Callable[[float], float]
    constraint_eval: Callable[[float], np.ndarray]
    constraint_grad: Callable[[float], np.ndarray]
    m_i: int


@dataclass(frozen=True)
class QuadraticAgentProblem:
    """Agent with ``f_i(t) = a t^2 / 2 + b t + c`` and affine constraints
    ``g_{i,j}(t) = p_j t + q_j``."""

    a: float
    b: float
    p: tuple = ()
    q: tuple = ()
    c: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "p", tuple(float(v) for v in np.atleast_1d(self.p)))
        object.__setattr__(self, "q", tuple(float(v) for v in np.atleast_1d(self.q)))
        if len(self.p) != len(self.q):
            raise ShapeError(f"constraint rows p ({len(self.p)}) and q ({len(self.q)}) differ in length")
        if not self.a >= 0:
            raise ValueError(f"quadratic coefficient must be nonnegative, got {self.a}")

    @property
    def m_i(self):
        return len(self.p)

    def cost_eval(self, theta):
        return 0.5 * self.a * theta * theta + self.b * theta + self.c

    def cost_grad(self, theta):
        return self.a * theta + self.b

    def constraint_eval(self, theta):
        return np.asarray(self.p) * theta + np.asarray(self.q)

    def constraint_grad(self, theta):
        return np.asarray(self.p, dtype=float).copy()


def squared_distance_agent(center, p=(), q=()):
    """Agent with cost ``(theta - center)^2``."""
    return QuadraticAgentProblem(a=2.0, b=-2.0 * center, p=p, q=q, c=center * center)


class ConstrainedProblem:
    """The stacked problem held by ``n`` agents.

    Parameters
    ----------
    agents : sequence
        ``AgentProblem`` or ``QuadraticAgentProblem`` instances.
    mu_f : float, optional
        Strong convexity modulus of ``sum_i f_i``.  Computed exactly as
        ``sum_i a_i`` for quadratic agents; required otherwise.
    """

    def __init__(self, agents, mu_f=None):
        self.agents = tuple(agents)
        if not self.agents:
            raise ValueError("at least one agent is required")
        self.n = len(self.agents)
        self.m_per_agent = tuple(int(ag.m_i) for ag in self.agents)
        self.m = sum(self.m_per_agent)
        self.offsets = np.concatenate([[0], np.cumsum(self.m_per_agent)]).astype(int)
        self.owner = np.repeat(np.arange(self.n), self.m_per_agent)
        self.index_pairs = tuple((i, j) for i, mi in enumerate(self.m_per_agent) for j in range(mi))
        self.is_quadratic = all(isinstance(ag, QuadraticAgentProblem) for ag in self.agents)

        if self.is_quadratic:
            self.a = np.array([ag.a for ag in self.agents], dtype=float)
            self.b = np.array([ag.b for ag in self.agents], dtype=float)
            self.p = np.array([v for ag in self.agents for v in ag.p], dtype=float)
            self.q = np.array([v for ag in self.agents for v in ag.q], dtype=float)
            # n x m matrix mapping multipliers to the owners' gradient terms
            self._slope_map = np.zeros((self.n, self.m))
            self._slope_map[self.owner, np.arange(self.m)] = self.p
            if not self.a.sum() > 0:
                raise AssumptionViolation(
                    "sum of quadratic coefficients must be positive (strong convexity)", 1)
            if mu_f is None:
                mu_f = float(self.a.sum())
        elif mu_f is None:
            raise ValueError("mu_f must be supplied for generic agent problems")
        if not mu_f > 0:
            raise ValueError(f"mu_f must be positive, got {mu_f}")
        self.mu_f = float(mu_f)

    # evaluation ---------------------------------------------------------

    def phi(self, x, lam):
        """Stacked Lagrangian gradients ``(grad l_i(x_i, lam_i))_i``."""
        if self.is_quadratic:
            out = self.a * x + self.b
            if self.m:
                out = out + self._slope_map @ lam
            return out
        out = np.empty(self.n)
        for i, ag in enumerate(self.agents):
            lo, hi = self.offsets[i], self.offsets[i + 1]
            val = ag.cost_grad(x[i])
            if hi > lo:
                val = val + np.dot(lam[lo:hi], ag.constraint_grad(x[i]))
            out[i] = val
        return out

    def constraints(self, x):
        """``g(x) = (g_i(x_i))_i`` as a flat array of length ``m``."""
        if self.is_quadratic:
            return self.p * x[self.owner] + self.q
        parts = [np.atleast_1d(ag.constraint_eval(x[i])) for i, ag in enumerate(self.agents) if ag.m_i]
        return np.concatenate(parts) if parts else np.zeros(0)

    def constraint_slopes(self, x):
        """``(grad g_{i,j}(x_i))`` for every constraint, length ``m``.

        This is the only nonzero entry of column ``k`` of the Jacobian of
        ``g`` at ``x``; at a consensual point ``1 t`` it is also the
        derivative of ``t -> g(1 t)``.
        """
        if self.is_quadratic:
            return self.p.copy()
        parts = [np.atleast_1d(ag.constraint_grad(x[i])) for i, ag in enumerate(self.agents) if ag.m_i]
        return np.concatenate(parts) if parts else np.zeros(0)

    def constraint_jacobian(self, x):
        """Dense ``n x m`` Jacobian of ``g`` at ``x``."""
        jac = np.zeros((self.n, self.m))
        jac[self.owner, np.arange(self.m)] = self.constraint_slopes(x)
        return jac

    def consensual(self, theta):
        return np.full(self.n, float(theta))

    def sum_cost(self, theta):
        return sum(ag.cost_eval(theta) for ag in self.agents)

    def sum_cost_grad(self, theta):
        return sum(ag.cost_grad(theta) for ag in self.agents)

    def central_gradient(self, theta, lam):
        """``1^T Phi(1 theta, lam)``."""
        return float(np.sum(self.phi(self.consensual(theta), lam)))

    def feasible_interval(self):
        """Interval of ``theta`` with ``g(1 theta) <= 0`` (affine family)."""
        if not self.is_quadratic:
            raise TypeError("feasible interval is only available for affine constraints")
        lo, hi = -np.inf, np.inf
        for pj, qj in zip(self.p, self.q):
            if pj > 0:
                hi = min(hi, -qj / pj)
            elif pj < 0:
                lo = max(lo, -qj / pj)
            elif qj > 0:
                return np.inf, -np.inf
        return lo, hi


def _check_shapes(problem, x=None, lam=None):
    if x is not None and np.shape(x) != (problem.n,):
        k = len(np.atleast_1d(x))
        bad = min(k, problem.n) if k != problem.n else 0
        raise ShapeError(f"x has shape {np.shape(x)}, expected ({problem.n},); agent {bad} has no matching entry")
    if lam is not None and np.shape(lam) != (problem.m,):
        k = len(np.atleast_1d(lam))
        bad = int(np.searchsorted(problem.offsets[1:], min(k, problem.m), side="right"))
        bad = min(bad, problem.n - 1)
        raise ShapeError(
            f"lambda has shape {np.shape(lam)}, expected ({problem.m},); "
            f"multiplier block of agent {bad} is malformed")


def lagrangian_gradient(problem, x, lam):
    """``Phi(x, lam)``: component ``i`` is ``grad f_i(x_i) + <lam_i, grad g_i(x_i)>``."""
    x = np.asarray(x, dtype=float)
    lam = np.asarray(lam, dtype=float)
    _check_shapes(problem, x, lam)
    return problem.phi(x, lam)


class KktResidual(NamedTuple):
    stationarity: float
    primal: float
    dual: float
    complementarity: float

    def max(self):
        return max(self)


def kkt_residual(problem, theta, lam):
    """Residuals of the four KKT conditions at ``(theta, lam)``.

    All four vanish exactly when ``(theta, lam)`` is a KKT pair.
    """
    lam = np.asarray(lam, dtype=float)
    _check_shapes(problem, lam=lam)
    g = problem.constraints(problem.consensual(theta))
    stat = abs(problem.central_gradient(theta, lam))
    if problem.m == 0:
        return KktResidual(stat, 0.0, 0.0, 0.0)
    return KktResidual(
        stat,
        float(max(0.0, g.max())),
        float(max(0.0, (-lam).max())),
        float(np.abs(lam * g).max()),
    )


class Classification(NamedTuple):
    active_set: tuple
    inactive_set: tuple
    m_a: int
    h: Optional[float]
    all_active: bool


@dataclass(frozen=True)
class KktPoint:
    """Primal-dual optimum with its active/inactive split.

    ``h`` is the smallest inactive margin ``min_I |g_{i,j}(theta*)|`` and is
    ``None`` when every constraint is active.
    """

    theta_star: float
    lambda_star: np.ndarray
    active_set: tuple
    inactive_set: tuple
    m_a: int
    h: Optional[float]
    all_active: bool = field(default=False)

    @property
    def active_mask(self):
        mask = np.zeros(len(self.lambda_star), dtype=bool)
        mask[list(self.active_set)] = True
        return mask


def classify_constraints(problem, kkt, tol=ACTIVE_TOL):
    """Split constraints into active (``|g| <= tol`` at the optimum) and inactive.

    Sets hold flat constraint indices ``k``; ``problem.index_pairs[k]`` gives
    the ``(agent, row)`` pair.  Only the constraint value decides the
    class, so an active constraint may carry a zero multiplier.

    Raises
    ------
    ComplementarityError
        If an inactive constraint carries a multiplier larger than ``tol``.
    """
    lam = np.asarray(kkt.lambda_star, dtype=float)
    g = problem.constraints(problem.consensual(kkt.theta_star))
    active = tuple(int(k) for k in np.flatnonzero(np.abs(g) <= tol))
    inactive = tuple(int(k) for k in np.flatnonzero(np.abs(g) > tol))
    for k in inactive:
        if lam[k] > tol:
            raise ComplementarityError(
                f"constraint {problem.index_pairs[k]} is inactive (g={g[k]:.3e}) "
                f"but carries multiplier {lam[k]:.3e}")
    h = float(np.min(np.abs(g[list(inactive)]))) if inactive else None
    return Classification(active, inactive, len(active), h, not inactive)


class _Candidate(NamedTuple):
    theta_star: float
    lambda_star: np.ndarray


def solve_kkt_oracle(problem, tol=ACTIVE_TOL):
    """Exact KKT point of a quadratic/affine problem by active-set enumeration.

    For each subset ``A`` of constraints the linear system "stationarity with
    ``g_A = 0`` and ``lam`` zero off ``A``" is solved; candidates with
    ``lam_A >= 0`` and ``g <= 0`` survive.  The survivor is unique unless the
    regularity assumption fails.

    Raises
    ------
    InfeasibleProblemError
        No ``theta`` satisfies every constraint.
    DegenerateProblemError
        Several distinct multiplier vectors survive.
    """
    if not problem.is_quadratic:
        raise TypeError("the enumeration oracle needs quadratic costs and affine constraints")
    lo, hi = problem.feasible_interval()
    if lo > hi:
        raise InfeasibleProblemError("no theta satisfies all constraints")
    m = problem.m
    if m > 20:
        raise ValueError(f"active-set enumeration over 2^{m} subsets is not supported")
    a_sum, b_sum = problem.a.sum(), problem.b.sum()

    survivors = []
    for r in range(m + 1):
        for subset in combinations(range(m), r):
            idx = list(subset)
            mat = np.zeros((r + 1, r + 1))
            rhs = np.zeros(r + 1)
            mat[0, 0] = a_sum
            mat[0, 1:] = problem.p[idx]
            mat[1:, 0] = problem.p[idx]
            rhs[0] = -b_sum
            rhs[1:] = -problem.q[idx]
            if np.linalg.matrix_rank(mat) < r + 1:
                continue
            sol = np.linalg.solve(mat, rhs)
            theta = float(sol[0])
            lam = np.zeros(m)
            lam[idx] = sol[1:]
            if m and (lam.min() < -tol or problem.constraints(problem.consensual(theta)).max() > tol):
                continue
            survivors.append(_Candidate(theta, np.maximum(lam, 0.0)))

    if not survivors:
        raise InfeasibleProblemError("no KKT candidate survived enumeration")
    ref = survivors[0]
    for other in survivors[1:]:
        if abs(other.theta_star - ref.theta_star) > tol or np.max(
                np.abs(other.lambda_star - ref.lambda_star), initial=0.0) > tol:
            raise DegenerateProblemError(
                "multiple KKT multipliers survive; active constraint gradients are dependent")
    cls = classify_constraints(problem, ref, tol)
    return KktPoint(ref.theta_star, ref.lambda_star, cls.active_set, cls.inactive_set,
                    cls.m_a, cls.h, cls.all_active)


def grid_bisection_minimizer(problem, n_grid=10001, xtol=1e-13, tol=1e-7):
    """Independent minimizer of ``sum_i f_i`` over the feasible interval.

    Minimizes on a uniform grid over ``[t0 - 10 r, t0 + 10 r]`` intersected
    with the feasible interval (``t0`` feasible, ``r`` bounding the distance
    to the unconstrained minimizer), then bisects on the sign of the
    derivative inside the neighbouring grid cells.  The multiplier is
    recovered from the derivative at a boundary optimum.

    Returns
    -------
    theta : float
    lam : ndarray
    """
    lo, hi = problem.feasible_interval()
    if lo > hi:
        raise InfeasibleProblemError("no theta satisfies all constraints")
    dF = problem.sum_cost_grad
    theta_unc = -problem.b.sum() / problem.a.sum()
    t0 = float(np.clip(0.0, lo, hi))
    r = max(1.0, abs(theta_unc - t0))
    left, right = max(lo, t0 - 10 * r), min(hi, t0 + 10 * r)

    grid = np.linspace(left, right, n_grid)
    vals = np.array([problem.sum_cost(t) for t in grid])
    k = int(np.argmin(vals))
    a_, b_ = grid[max(k - 1, 0)], grid[min(k + 1, n_grid - 1)]
    if dF(a_) >= 0:
        theta = a_
    elif dF(b_) <= 0:
        theta = b_
    else:
        while b_ - a_ > xtol:
            mid = 0.5 * (a_ + b_)
            if dF(mid) > 0:
                b_ = mid
            else:
                a_ = mid
        theta = 0.5 * (a_ + b_)

    lam = np.zeros(problem.m)
    slope = dF(theta)
    g = problem.constraints(problem.consensual(theta))
    at_boundary = (theta - lo <= tol) or (hi - theta <= tol)
    if at_boundary and problem.m:
        binding = int(np.argmin(np.abs(g)))
        if problem.p[binding] != 0:
            lam[binding] = max(0.0, -slope / problem.p[binding])
    return float(theta), lam


def gradient_check(agent, points, step=1e-6):
    """Largest relative mismatch between analytic and central-difference
    derivatives of an agent's cost and constraints over ``points``."""
    worst = 0.0
    for t in points:
        fd = (agent.cost_eval(t + step) - agent.cost_eval(t - step)) / (2 * step)
        an = agent.cost_grad(t)
        worst = max(worst, abs(fd - an) / max(1.0, abs(an)))
        if agent.m_i:
            gfd = (np.asarray(agent.constraint_eval(t + step)) - np.asarray(agent.constraint_eval(t - step))) / (2 * step)
            gan = np.asarray(agent.constraint_grad(t))
            worst = max(worst, float(np.max(np.abs(gfd - gan) / np.maximum(1.0, np.abs(gan)))))
    return worst


def strong_convexity_check(problem, theta_star, points):
    """Smallest ratio ``(t - t*)(F'(t) - F'(t*)) / |t - t*|^2`` over ``points``."""
    d_star = problem.sum_cost_grad(theta_star)
    ratios = [(t - theta_star) * (problem.sum_cost_grad(t) - d_star) / (t - theta_star) ** 2
              for t in points if t != theta_star]
    return min(ratios)
