"""Stability constants, stepsize bound, Lyapunov functions and rate certificate.

The ledger collects every constant needed to certify semiglobal exponential
convergence for a stepsize below ``gammabar0``.  Constants are computed in
closed form for quadratic costs with affine constraints and estimated by
sampling (with a safety factor) otherwise.
"""

from dataclasses import dataclass, field
import itertools
import logging
import math

import numpy as np

from .algorithm import OptimalEquilibrium, to_core
from .exceptions import AssumptionViolation, CertificateRefused, LedgerError

log = logging.getLogger(__name__)

KAPPA0_FLOOR = 1e-6
MONITOR_SLACK = 1e-12
SAMPLE_INFLATION = 1.1
ALPHA_INDICES = (1, 2, 3, 4, 7, 8, 9, 10, 11)


def _div(num, den):
    """``num / den`` with ``+inf`` for a zero denominator (term drops out of a min)."""
    return math.inf if den == 0 else num / den


# initialization box ---------------------------------------------------------

@dataclass(frozen=True, eq=False)
class InitBox:
    """Axis-aligned box of initial states ``(x, z, lam)``."""

    x_lo: np.ndarray
    x_hi: np.ndarray
    z_lo: np.ndarray
    z_hi: np.ndarray
    lam_lo: np.ndarray
    lam_hi: np.ndarray

    def __post_init__(self):
        for name in ("x_lo", "x_hi", "z_lo", "z_hi", "lam_lo", "lam_hi"):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float)))
        for lo, hi in ((self.x_lo, self.x_hi), (self.z_lo, self.z_hi), (self.lam_lo, self.lam_hi)):
            if lo.shape != hi.shape:
                raise ValueError("box bounds have mismatched shapes")
            if np.any(lo > hi):
                raise ValueError("box lower bound exceeds upper bound")
        if self.x_lo.shape != self.z_lo.shape:
            raise ValueError("x and z bounds must have the same length")
        if self.lam_lo.size and self.lam_lo.min() < 0:
            raise ValueError("multiplier faces of the initialization box must be nonnegative")

    @classmethod
    def uniform(cls, n, m, x=(-1.0, 1.0), z=(0.0, 0.0), lam=(0.0, 1.0)):
        return cls(np.full(n, x[0]), np.full(n, x[1]), np.full(n, z[0]), np.full(n, z[1]),
                   np.full(m, lam[0]), np.full(m, lam[1]))

    @classmethod
    def point(cls, x, z, lam):
        return cls(x, x, z, z, lam, lam)

    @property
    def lo(self):
        return np.concatenate([self.x_lo, self.z_lo, self.lam_lo])

    @property
    def hi(self):
        return np.concatenate([self.x_hi, self.z_hi, self.lam_hi])

    def split(self, v):
        n = self.x_lo.size
        return v[..., :n], v[..., n:2 * n], v[..., 2 * n:]

    def vertices(self):
        """All distinct vertices as rows of ``[x, z, lam]`` (degenerate sides collapse)."""
        lo, hi = self.lo, self.hi
        free = np.flatnonzero(hi > lo)
        if free.size > 22:
            raise ValueError(f"box has {free.size} free sides; vertex enumeration is too large")
        corners = np.array(list(itertools.product((0, 1), repeat=free.size)), dtype=bool)
        corners = corners.reshape(-1, free.size) if free.size else np.zeros((1, 0), dtype=bool)
        out = np.tile(lo, (corners.shape[0], 1))
        out[:, free] = np.where(corners, hi[free], lo[free])
        return out

    def sample(self, rng, k):
        lo, hi = self.lo, self.hi
        return lo + (hi - lo) * rng.random((k, lo.size))

    def contains(self, x, z, lam, tol=0.0):
        v = np.concatenate([x, z, lam])
        return bool(np.all(v >= self.lo - tol) and np.all(v <= self.hi + tol))


def _core_errors(network, eq, points, box):
    """Norms ``|(x_m - theta*, lam - lambda*, xi - xi*)|`` for stacked points."""
    x, z, lam = box.split(points)
    S = network.S
    x_m = x.mean(axis=1)
    x_perp = x @ S
    z_perp = z @ S
    sq = ((x_m - eq.theta_star) ** 2 + np.sum(x_perp ** 2, axis=1)
          + np.sum((z_perp - eq.z_perp_star) ** 2, axis=1)
          + np.sum((lam - eq.lambda_star) ** 2, axis=1))
    return np.sqrt(sq)


def compute_kappa0(network, eq, box):
    """Radius of the smallest ball around ``(theta*, lambda*, xi*)`` holding the box.

    The squared error is a convex quadratic in the box coordinates, so its
    maximum over the box is attained at a vertex.  Floored at ``1e-6``.
    """
    return max(float(np.max(_core_errors(network, eq, box.vertices(), box))), KAPPA0_FLOOR)


def kappa0_over_stepsizes(network, eq, box, gamma_max):
    """``kappa0`` valid for every stepsize in ``(0, gamma_max]``.

    ``z_perp*`` is linear in the stepsize and the error norm is convex in it,
    so checking the endpoints ``0`` and ``gamma_max`` suffices.
    """
    scale = gamma_max / eq.gamma
    ends = [replace_gamma(eq, 0.0, 0.0), replace_gamma(eq, gamma_max, scale)]
    return max(compute_kappa0(network, e, box) for e in ends)


def replace_gamma(eq, gamma, scale=None):
    """Equilibrium for another stepsize, using linearity of ``z_perp*``."""
    scale = gamma / eq.gamma if scale is None else scale
    return OptimalEquilibrium(eq.theta_star, eq.lambda_star.copy(), eq.z_perp_star * scale, gamma)


# problem constants ----------------------------------------------------------

@dataclass(frozen=True)
class ProblemConstants:
    k: tuple
    mu_f: float
    q0: float
    eps_bar1: float
    h: float
    h_vacuous: bool
    sampled: bool


def _q0_and_h(problem, kkt, k1, k6, k7):
    x_star = problem.consensual(kkt.theta_star)
    jac = problem.constraint_jacobian(x_star)
    active = list(kkt.active_set)
    if active:
        gram = jac[:, active].T @ jac[:, active]
        q0 = float(np.linalg.eigvalsh(gram)[0])
        if not q0 > 1e-12:
            raise AssumptionViolation(
                f"active constraint gradients are linearly dependent (q0 = {q0:.3e})", 2)
    else:
        q0 = k6 ** 2 if k6 > 0 else 1.0
    if kkt.inactive_set:
        h, vacuous = float(kkt.h), False
    else:
        # no inactive constraint: every margin bound is vacuous; k7 bounds |g| on the ball
        h, vacuous = float(k7), True
    return q0, h, vacuous


def _closed_form_constants(problem, network, kappa, kkt):
    a, p = problem.a, problem.p
    S = network.S
    x_star = problem.consensual(kkt.theta_star)
    P = problem.constraint_jacobian(x_star)
    g_star = problem.constraints(x_star)
    p_norm = float(np.linalg.norm(p))
    opnorm = lambda M: float(np.linalg.norm(M, 2)) if M.size else 0.0

    k0 = max(float(np.linalg.norm(a)), opnorm(a[:, None] * S), opnorm(P))
    k1 = p_norm
    k2 = max(float(a.sum()), p_norm)
    k3 = max(float(np.linalg.norm(a)), float(a.sum()))
    k4 = 0.0
    k5 = kappa * math.sqrt(a.sum() ** 2 + p_norm ** 2 + float(np.sum((S.T @ a) ** 2)))
    k6 = p_norm
    k7 = float(np.linalg.norm(g_star)) + kappa * opnorm(np.hstack([P.T @ np.ones((problem.n, 1)), P.T @ S]))
    q0, h, vacuous = _q0_and_h(problem, kkt, k1, k6, k7)
    eps_bar1 = _div(h, 2 * k1)
    return ProblemConstants((k0, k1, k2, k3, k4, k5, k6, k7), problem.mu_f, q0, eps_bar1, h, vacuous, False)


def _ball_samples(rng, dim, radius, k):
    v = rng.standard_normal((k, dim))
    v /= np.maximum(np.linalg.norm(v, axis=1, keepdims=True), 1e-300)
    return v * radius * rng.random((k, 1)) ** (1.0 / max(dim, 1))


def _sampled_constants(problem, network, kappa, kkt, n_samples, seed):
    """Sampled lower bounds over the ball, inflated by ``1.1``."""
    rng = np.random.default_rng(seed)
    n, m = problem.n, problem.m
    r = n - 1
    dim = 1 + m + 2 * r
    S = network.S
    lam_star = np.asarray(kkt.lambda_star, dtype=float)

    def unpack(e):
        x_m = kkt.theta_star + e[0]
        lam = np.maximum(lam_star + e[1:1 + m], 0.0)
        x_perp = e[1 + m:1 + m + r]
        return x_m, lam, x_perp

    pts = [unpack(e) for e in _ball_samples(rng, dim, kappa, n_samples)]
    xs = [x_m + S @ xp for x_m, _, xp in pts]
    ones = np.ones(n)
    k0 = k1 = k2 = k3 = k4 = k5 = k6 = k7 = 0.0
    for (x_m, lam, xp), x in zip(pts, xs):
        xc = x_m * ones
        phi_c = problem.phi(xc, lam)
        k5 = max(k5, abs(np.sum(problem.phi(x, lam))), abs(np.sum(phi_c)))
        k6 = max(k6, np.linalg.norm(problem.constraint_jacobian(x), 2) if m else 0.0,
                 np.linalg.norm(problem.constraint_slopes(xc)))
        k7 = max(k7, np.linalg.norm(problem.constraints(x)), np.linalg.norm(problem.constraints(xc)))
        denom = abs(x_m - kkt.theta_star) + np.linalg.norm(lam - lam_star)
        if denom > 0:
            k2 = max(k2, abs(np.sum(phi_c)) / denom)
    for _ in range(n_samples):
        i, j = rng.integers(len(pts), size=2)
        if i == j:
            continue
        (xm1, l1, xp1), (xm2, l2, xp2) = pts[i], pts[j]
        x1, x2 = xs[i], xs[j]
        dx = np.linalg.norm(x1 - x2)
        dm = abs(xm1 - xm2)
        d0 = dm + np.linalg.norm(xp1 - xp2) + np.linalg.norm(l1 - l2)
        if d0 > 0:
            k0 = max(k0, np.linalg.norm(problem.phi(x1, l1) - problem.phi(x2, l2)) / d0)
        if dx > 0:
            k1 = max(k1, np.linalg.norm(problem.constraints(x1) - problem.constraints(x2)) / dx)
            grad_sum = lambda x: sum(ag.cost_grad(x[k]) for k, ag in enumerate(problem.agents))
            k3 = max(k3, abs(grad_sum(x1) - grad_sum(x2)) / dx)
            if m:
                k4 = max(k4, np.linalg.norm(problem.constraint_jacobian(x1) - problem.constraint_jacobian(x2), 2) / dx)
        if dm > 0:
            c1, c2 = xm1 * ones, xm2 * ones
            k1 = max(k1, np.linalg.norm(problem.constraints(c1) - problem.constraints(c2)) / dm)
            k3 = max(k3, abs(problem.sum_cost_grad(xm1) - problem.sum_cost_grad(xm2)) / dm)
            if m:
                k4 = max(k4, np.linalg.norm(problem.constraint_slopes(c1) - problem.constraint_slopes(c2)) / dm)
    k = tuple(float(SAMPLE_INFLATION * v) for v in (k0, k1, k2, k3, k4, k5, k6, k7))
    q0, h, vacuous = _q0_and_h(problem, kkt, k[1], k[6], k[7])
    return ProblemConstants(k, problem.mu_f, q0, _div(h, 2 * k[1]), h, vacuous, True)


def estimate_problem_constants(problem, network, kappa, kkt, n_samples=2000, seed=0):
    """Lipschitz and sup constants on the ball of radius ``kappa``.

    Closed forms for quadratic costs with affine constraints, sampling
    otherwise.  Raises ``AssumptionViolation`` (2) when the active constraint
    gradients are dependent.
    """
    if problem.is_quadratic:
        return _closed_form_constants(problem, network, kappa, kkt)
    return _sampled_constants(problem, network, kappa, kkt, n_samples, seed)


# ledger ---------------------------------------------------------------------

def ledger_formulas(c):
    """Derived constants from the primitive ones.

    ``c`` holds ``kappa0, c_l, c_u, n, m, m_a, k0..k7, mu_f, q0, h, eps_bar1,
    norm_APB, norm_BPB`` and ``lambda_star_norm``.  Returns a dict with
    ``kappa1, kappa, M, beta, alpha1..alpha11 (no 5, 6), delta1, delta2,
    eps_bar, eps, gammabar1..gammabar20, gammabar0``.
    """
    k0, k1, k2, k3, k4, k5, k6, k7 = (c[f"k{i}"] for i in range(8))
    n, m, m_a = c["n"], c["m"], c["m_a"]
    c_l, c_u = c["c_l"], c["c_u"]
    mu_f, q0, h = c["mu_f"], c["q0"], c["h"]
    apb, bpb = c["norm_APB"], c["norm_BPB"]
    kappa0 = c["kappa0"]
    sq_n = math.sqrt(n)
    d = {}

    kappa1 = kappa0 * math.sqrt(max(3.0, c_u / c_l))
    kappa = max(2 * kappa0 + 1, math.sqrt(c_u / c_l) * (kappa1 + 1))
    d["kappa1"], d["kappa"] = kappa1, kappa

    net_term = 2 * apb ** 2 + bpb
    M = max((8 / k2 ** 2) * (32 / 3 * c_u * m ** 2 * (2 * k1 + 1) ** 2
                             + 9 / (2 * c_u) * k0 ** 2 * n ** 2 * net_term), 1.0)
    beta = 2 * (2 + M) * k2 ** 2 / q0
    d["M"], d["beta"] = M, beta

    lam_norm = c["lambda_star_norm"]
    s = k4 * k5 + k6 * (k3 + k4 * lam_norm)
    a1 = _div(q0, s)
    a2 = s / (2 * a1) + k1 * k6
    a3 = (3 * k1 * k2 * k6 + k2 * k4 * k5) / 2
    a4 = (k1 * k2 * k6 + 3 * k2 * k4 * k5) / 2
    a7 = k2 * k6 + beta / 2 * (kappa * k4 * k6 + k4 * k5 + k2 * k6)
    a8 = beta / 2 * (k1 ** 2 * k6 ** 2 + kappa * k4 * k6 * k2 ** 2)
    a9 = beta * (k2 * k6 / 2 + k6 ** 2) + k2 * k6
    a10 = beta * kappa * k4 * k6 * k2 ** 2 / 2
    delta1 = M * k2 ** 2 / (8 * a9)
    delta2 = 0.0 if m == m_a else mu_f / (2 * (m - m_a) * (1 + beta) * k1)
    a11 = (beta / 2 * (k4 * k5 + k2 * k6 * (1 + delta1 + delta1 ** 2) / delta1)
           + k2 * k6 * (1 + delta1) / delta1
           + k6 ** 2 + beta * k6 ** 2 * (1 + 2 * delta1) / (4 * delta1) + beta * kappa * k4 * k6)
    for i, v in zip(ALPHA_INDICES, (a1, a2, a3, a4, a7, a8, a9, a10, a11)):
        d[f"alpha{i}"] = v
    d["delta1"], d["delta2"] = delta1, delta2

    eps_bar = min(c["eps_bar1"], h / (4 * k1 * (1 + 2 * beta)))
    eps = eps_bar / 2
    d["eps_bar"], d["eps"] = eps_bar, eps

    g = [None] * 21
    g[1] = 1 / (16 * kappa0 * k5)
    g[2] = 1 / (2 * k5)
    g[3] = 1 / (16 * kappa0 * k7)
    g[4] = 1 / (2 * k7)
    g[5] = 1 / (beta * k6)
    g[6] = mu_f * eps ** 2 / (beta * (4 * kappa0 ** 2 * k4 * k5 + 2 * kappa0 * k6 * k7 + k5 * k6 * kappa)
                              + k7 ** 2 + k5 ** 2)
    g[7] = min(mu_f / (2 * (k1 ** 2 + 2 * k2 ** 2 + beta * a2)), math.sqrt(_div(mu_f, 2 * beta * a3)))
    g[8] = _div(M * k2 ** 2, 2 * beta * a4)
    g[9] = 1 / (2 * math.sqrt(a11)) if delta2 == 0 else min(1 / (2 * math.sqrt(a11)), delta2 / (4 * (1 + beta) * k1))
    g[10] = h / (4 * a11 * kappa)
    g[11] = min(mu_f / (8 * a7), 0.5 * _div(mu_f, a8) ** (1 / 3), math.sqrt(_div(M * k2 ** 2, 8 * a10)))
    g[12] = 2 * h / (kappa * k2 ** 2)
    g[13] = min(1 / (12 * kappa1 * k5), 1 / (math.sqrt(6) * k5), 1 / (12 * kappa1 * k7), 1 / (math.sqrt(6) * k7))
    g[14] = _div(min(math.sqrt(c_l / 3), 0.5), n * k0 * kappa * math.sqrt(6 * apb ** 2 + 3 * bpb))
    g[15] = min(_div(1, 2 * beta * k0 * (n * kappa1 * k4 + sq_n * k6)),
                _div(1, math.sqrt(2 * beta * n * k0 * k4 * k5)))
    g[16] = min(1 / (2 * k2),
                sq_n * k0 / (beta * k1 * k6 + m * k1 * (2 * k1 + 1)),
                math.sqrt(_div(2 * sq_n * k0, beta * k1 * k2 * k6)),
                m * (2 * k1 + 1) / (4 * sq_n * k0 * k2),
                math.sqrt(_div(m * (2 * k1 + 1), 2 * beta * k1 * k2 * k6)))
    g[17] = min(mu_f / (768 * n * k0 ** 2 * (2 * c_u + 3)),
                math.sqrt(3 / (64 * c_u * (n * k0 ** 2 + k1 ** 2 + k1))))
    g[18] = _div(mu_f * c_u, 12 * (2 * c_u + 3) * k0 ** 2 * n ** 2 * net_term)
    g[19] = 6 * mu_f * eps ** 2 / (M * k2 ** 2 * kappa1 ** 2)
    g[20] = min(math.sqrt(2 / (M * k2 ** 2)), 2 * h / (M * k2 ** 2 * kappa1))
    for i in range(1, 21):
        d[f"gammabar{i}"] = float(g[i])
    d["gammabar0"] = float(min(g[1:]))
    return d


@dataclass(frozen=True)
class ConstantsLedger:
    """Every constant of the stability certificate.

    ``values`` maps certificate names (``kappa0``, ``k0`` ... ``gammabar0``)
    to floats; ``h_vacuous`` flags an empty inactive set, in which case ``h``
    holds the substitute margin ``k7``.  ``gamma_cover`` is the largest
    stepsize for which ``kappa0`` covers the initialization box.
    """

    values: dict
    n: int
    m: int
    m_a: int
    h_vacuous: bool
    sampled: bool
    gamma_cover: float
    theta_star: float = 0.0
    lambda_star: tuple = field(default_factory=tuple)

    def __getattr__(self, name):
        try:
            return self.__dict__["values"][name]
        except KeyError:
            raise AttributeError(name) from None

    @property
    def gammabar(self):
        return tuple(self.values[f"gammabar{i}"] for i in range(1, 21))

    def as_dict(self):
        out = dict(self.values)
        out.update(h_vacuous=self.h_vacuous, sampled=self.sampled, gamma_cover=self.gamma_cover,
                   n=self.n, m=self.m, m_a=self.m_a)
        return out


LEDGER_ORDER = (("kappa0", "kappa1", "kappa") + tuple(f"k{i}" for i in range(8))
                + ("q0", "mu_f", "h", "eps_bar1", "eps_bar", "eps", "M", "beta")
                + tuple(f"alpha{i}" for i in ALPHA_INDICES) + ("delta1", "delta2")
                + tuple(f"gammabar{i}" for i in range(1, 21)) + ("gammabar0", "c_l", "c_u"))


def _check_positive(values):
    for name in LEDGER_ORDER:
        v = values[name]
        if name == "delta2" and v == 0.0:
            continue
        if name in ("k4", "alpha10") and v == 0.0 and values["k4"] == 0.0:
            continue  # affine constraints: gradient of g is constant
        if not (v > 0) or math.isnan(v):
            raise LedgerError(name, v)


def _assemble_once(problem, network, kkt, kappa0, consts_for, coupling):
    c_l, c_u = (network.c_l, network.c_u) if network.n > 1 else (1.0, 1.0)
    prim = {"kappa0": kappa0, "c_l": c_l, "c_u": c_u, "n": problem.n, "m": problem.m,
            "m_a": kkt.m_a, "norm_APB": coupling[0], "norm_BPB": coupling[1],
            "lambda_star_norm": float(np.linalg.norm(kkt.lambda_star))}
    kappa1 = kappa0 * math.sqrt(max(3.0, c_u / c_l))
    kappa = max(2 * kappa0 + 1, math.sqrt(c_u / c_l) * (kappa1 + 1))
    pc = consts_for(kappa)
    prim.update({f"k{i}": v for i, v in enumerate(pc.k)})
    prim.update(mu_f=pc.mu_f, q0=pc.q0, h=pc.h, eps_bar1=pc.eps_bar1)
    derived = ledger_formulas(prim)
    values = {k: float(v) for k, v in {**prim, **derived}.items()
              if k not in ("n", "m", "m_a", "norm_APB", "norm_BPB", "lambda_star_norm")}
    values["norm_APB"], values["norm_BPB"] = coupling
    return values, pc


def assemble_ledger(problem, network, kkt, eq, box, n_samples=2000, seed=0, bisection_steps=30):
    """Build the full ledger for an initialization box.

    ``kappa0`` must hold for every stepsize the certificate may be used
    with, because the reference ``xi*`` moves with the stepsize.  The
    smallest coverage limit ``G`` with ``gammabar0(G) <= G`` is located by
    bisection, so the ledger is valid on all of ``(0, gammabar0)``.

    Raises
    ------
    LedgerError
        A constant that must be positive is not.
    """
    if problem.m == 0:
        raise LedgerError("m", 0)
    coupling = network.coupling_norms()
    consts_for = lambda kappa: estimate_problem_constants(problem, network, kappa, kkt, n_samples, seed)

    def build(cover):
        kappa0 = kappa0_over_stepsizes(network, eq, box, cover)
        values, pc = _assemble_once(problem, network, kkt, kappa0, consts_for, coupling)
        return values, pc

    cover = 1.0
    values, pc = build(cover)
    while values["gammabar0"] > cover:
        cover *= 2.0
        values, pc = build(cover)
    # gammabar0 is nonincreasing in the coverage, so the smallest valid
    # coverage lies in [gammabar0(cover), cover]; bisect geometrically
    best = (cover, values, pc)
    lo, hi = values["gammabar0"], cover
    for _ in range(bisection_steps):
        mid = lo if hi / lo <= 1.0 + 1e-6 else math.sqrt(lo * hi)
        vals, p = build(mid)
        if vals["gammabar0"] <= mid:
            hi, best = mid, (mid, vals, p)
            if mid == lo:
                break
        else:
            lo = mid
        if hi / lo <= 1.0 + 1e-6:
            break
    cover, values, pc = best
    _check_positive(values)
    log.info("ledger assembled: gammabar0=%.6g kappa0=%.6g", values["gammabar0"], values["kappa0"])
    return ConstantsLedger(values, problem.n, problem.m, kkt.m_a, pc.h_vacuous, pc.sampled, cover,
                           float(kkt.theta_star), tuple(float(v) for v in kkt.lambda_star))


# rate certificate -----------------------------------------------------------

@dataclass(frozen=True)
class RateCertificate:
    """Exponential bound ``dist_t <= c mu^t dist_0`` for one stepsize.

    ``c`` can be astronomically large; ``log_c`` is always finite and ``c``
    is ``inf`` when it overflows a float.
    """

    gamma: float
    omega: float
    eta2: float
    T: float
    mu: float
    log_c: float

    @property
    def c(self):
        return math.exp(self.log_c) if self.log_c < 709.0 else math.inf

    def as_dict(self):
        return {"gamma": self.gamma, "omega": self.omega, "eta2": self.eta2, "T": self.T,
                "mu": self.mu, "c": self.c, "log_c": self.log_c}


def omega_gamma(ledger, gamma):
    L = ledger.values
    return min(gamma * L["mu_f"] / 12, gamma ** 2 * L["k2"] ** 2 / 12, gamma * L["h"] / (6 * L["kappa1"]),
               1 / 6, 1 / (8 * L["c_u"]))


def rate_certificate(ledger, gamma):
    """Certificate for ``0 < gamma < gammabar0``; refuses otherwise."""
    L = ledger.values
    if not 0 < gamma < L["gammabar0"]:
        raise CertificateRefused(f"stepsize {gamma!r} is outside (0, {L['gammabar0']!r})")
    omega = omega_gamma(ledger, gamma)
    eps2 = L["eps"] ** 2
    eta2 = gamma * L["mu_f"] * eps2 / (4 * omega)
    r = min(eps2, eta2)
    T = (3 * L["kappa0"] ** 2 - r) / (omega * r)
    mu = math.sqrt(1 - omega)
    log_c = 0.5 * (math.log(ledger.n * max(3.0, L["c_u"] / L["c_l"])) - T * math.log1p(-omega))
    return RateCertificate(float(gamma), omega, eta2, T, mu, log_c)


# Lyapunov functions ---------------------------------------------------------

def V_opt(ledger, gamma, x_m, lam, theta_star, lambda_star, grad_g):
    """``|x_m - theta*|^2 + |lam - lambda*|^2 + gamma beta (x_m - theta*) grad_g . (lam - lambda*)``.

    ``grad_g`` is the derivative of ``t -> g(1 t)`` at ``x_m`` (length ``m``).
    """
    dx = x_m - theta_star
    dl = np.asarray(lam, dtype=float) - np.asarray(lambda_star, dtype=float)
    return float(dx * dx + np.dot(dl, dl) + gamma * ledger.values["beta"] * dx * np.dot(grad_g, dl))


def V_net(network, eq, core):
    xi_t = np.concatenate([core.x_perp, core.z_perp - eq.z_perp_star])
    return float(xi_t @ network.P @ xi_t) if xi_t.size else 0.0


def V_total(ledger, network, problem, gamma, core, eq):
    """``(V, V_opt, V_net)`` with ``V = V_opt + 3 / (2 c_u) V_net``."""
    grad = problem.constraint_slopes(problem.consensual(core.x_m))
    vo = V_opt(ledger, gamma, core.x_m, core.lam, eq.theta_star, eq.lambda_star, grad)
    vn = V_net(network, eq, core)
    return vo + 1.5 / ledger.values["c_u"] * vn, vo, vn


class Certificate:
    """Ledger, rate certificate and Lyapunov function bound to one stepsize.

    Pass to ``algorithm.run`` to fill the ``V`` columns of a trajectory.
    """

    def __init__(self, problem, network, ledger, eq, gamma):
        if abs(eq.gamma - gamma) > 1e-15 * max(1.0, gamma):
            raise ValueError("equilibrium was built for a different stepsize")
        self.problem, self.network, self.ledger, self.eq, self.gamma = problem, network, ledger, eq, gamma
        self.rate = rate_certificate(ledger, gamma)

    def lyapunov(self, core):
        return V_total(self.ledger, self.network, self.problem, self.gamma, core, self.eq)

    def core_error(self, core):
        """``|(x_m - theta*, lam - lambda*, xi - xi*)|``."""
        eq = self.eq
        return math.sqrt((core.x_m - eq.theta_star) ** 2 + np.sum((core.lam - eq.lambda_star) ** 2)
                         + np.sum(core.x_perp ** 2) + np.sum((core.z_perp - eq.z_perp_star) ** 2))

    def in_omega(self, core, V=None):
        L = self.ledger.values
        if V is None:
            V = self.lyapunov(core)[0]
        return V <= 1.5 * L["kappa0"] ** 2 and self.core_error(core) <= L["kappa"]

    def descent_margin(self, V):
        L = self.ledger.values
        return min(self.gamma * L["mu_f"] * L["eps"] ** 2 / 8, self.rate.omega * V)


@dataclass
class MonitorReport:
    checked: int
    descent_violations: list
    envelope_violations: list
    first_violation: object
    left_omega: int

    @property
    def clean(self):
        return not self.descent_violations and not self.envelope_violations


def monitor_descent(states, certificate, slack=MONITOR_SLACK):
    """Check Lyapunov descent inside the level set and the exponential envelope.

    Parameters
    ----------
    states : sequence of AlgorithmState
        Consecutive iterates, ``states[0]`` the initial one.
    certificate : Certificate

    Returns
    -------
    MonitorReport
        Indices ``t`` where ``V(t+1) > V(t) - margin + slack`` with the
        state at ``t`` in the level set, and indices where
        ``dist_t > c mu^t dist_0`` (checked in log space).
    """
    from .algorithm import distance_to_optimal_set

    net, eq, rate = certificate.network, certificate.eq, certificate.rate
    descent, envelope = [], []
    left = 0
    cores = [to_core(net, s) for s in states]
    Vs = [certificate.lyapunov(c)[0] for c in cores]
    dists = [distance_to_optimal_set(s, eq, net) for s in states]
    log_d0 = math.log(dists[0]) if dists[0] > 0 else -math.inf
    log_mu = math.log(rate.mu)
    for t in range(len(states)):
        if t + 1 < len(states):
            if certificate.in_omega(cores[t], Vs[t]):
                if Vs[t + 1] > Vs[t] - certificate.descent_margin(Vs[t]) + slack:
                    descent.append(t)
            else:
                left += 1
        if dists[t] > 0:
            bound = rate.log_c + t * log_mu + log_d0
            if math.log(dists[t]) > bound + slack:
                envelope.append(t)
    first = min(descent + envelope) if descent or envelope else None
    return MonitorReport(len(states), descent, envelope, first, left)
