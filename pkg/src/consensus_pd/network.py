"""Communication graph, average-dispersion coordinates and consensus matrices.

The weight matrix is the weighted Laplacian

    K_ii = sum_{j in N_i} k_ij,   K_ij = -k_ij (j in N_i),

which must be symmetric with kernel ``span 1`` and spectrum in ``[0, 1)``.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .exceptions import AssumptionViolation, ConnectivityError, ShapeError, StabilityError

RANK_TOL = 1e-10
NORMALIZE_TARGET = 0.99
KRONECKER_MAX_DIM = 40


def preset_edges(name, n, weight):
    """Edge list ``[(i, j, w), ...]`` for the ``path``, ``cycle`` or ``complete`` graph."""
    if name == "path":
        pairs = [(i, i + 1) for i in range(n - 1)]
    elif name == "cycle":
        pairs = [(i, i + 1) for i in range(n - 1)]
        if n > 2:
            pairs.append((n - 1, 0))
    elif name == "complete":
        pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    else:
        raise ValueError(f"unknown network preset {name!r}")
    return [(i, j, float(weight)) for i, j in pairs]


def build_weight_matrix(n, weighted_edges, normalize=False):
    """Assemble and validate ``K``.

    Parameters
    ----------
    n : int
        Number of agents.
    weighted_edges : iterable of (i, j, k_ij)
        Undirected edges with 0-based endpoints.  An edge may be listed in
        both directions only with the same weight.
    normalize : bool
        If the largest eigenvalue is ``>= 1``, rescale every weight by
        ``0.99 / lambda_max`` instead of failing.

    Returns
    -------
    K : ndarray, shape (n, n)
    report : dict
        Eigenvalues, applied scale factor and the checks that ran.
    """
    weights = {}
    for i, j, w in weighted_edges:
        i, j, w = int(i), int(j), float(w)
        if not (0 <= i < n and 0 <= j < n) or i == j:
            raise ValueError(f"invalid edge ({i}, {j}) for {n} agents")
        if not w > 0:
            raise ValueError(f"edge ({i}, {j}) has nonpositive weight {w}")
        key = (min(i, j), max(i, j))
        if key in weights and weights[key] != w:
            raise AssumptionViolation(
                f"asymmetric weights on edge {key}: {weights[key]} vs {w}", 3)
        weights[key] = w

    K = np.zeros((n, n))
    for (i, j), w in weights.items():
        K[i, j] -= w
        K[j, i] -= w
        K[i, i] += w
        K[j, j] += w

    eig = np.linalg.eigvalsh(K)
    n_zero = int(np.sum(np.abs(eig) <= RANK_TOL))
    if n_zero != 1:
        raise ConnectivityError(
            f"kernel of K has dimension {n_zero}; the graph must be connected")
    scale = 1.0
    if eig[-1] >= 1.0:
        if not normalize:
            raise AssumptionViolation(
                f"largest eigenvalue of K is {eig[-1]:.6g} >= 1; enable normalize to rescale", 3)
        scale = NORMALIZE_TARGET / eig[-1]
        K = K * scale
        eig = eig * scale
    report = {
        "eigenvalues": eig.tolist(),
        "scale": scale,
        "symmetric": bool(np.array_equal(K, K.T)),
        "kernel_dim": n_zero,
        "spectrum_in_unit_interval": bool(eig[0] > -RANK_TOL and eig[-1] < 1.0),
    }
    return K, report


def build_dispersion_basis(n):
    """Orthonormal basis ``S`` of the complement of ``1``.

    Columns 2..n of the Householder reflector mapping ``e_1`` to
    ``1 / sqrt(n)``; for ``n = 1`` an ``n x 0`` matrix.
    """
    if n < 1:
        raise ValueError("n must be positive")
    if n == 1:
        return np.zeros((1, 0))
    v = np.zeros(n)
    v[0] = 1.0
    v -= 1.0 / np.sqrt(n)
    H = np.eye(n) - 2.0 * np.outer(v, v) / np.dot(v, v)
    return H[:, 1:]


def consensus_matrices(K, S):
    """Network-dynamics matrices ``A`` and ``B``.

    ``A = [[I - S'KS, -S'KS], [S'KS, I]]``, ``B = [S'; 0]``.

    Raises
    ------
    StabilityError
        If ``A`` is not Schur.
    """
    r = S.shape[1]
    n = K.shape[0]
    if r == 0:
        return np.zeros((0, 0)), np.zeros((0, n))
    L = S.T @ K @ S
    I = np.eye(r)
    A = np.block([[I - L, -L], [L, I]])
    B = np.vstack([S.T, np.zeros((r, n))])
    rho = float(np.max(np.abs(np.linalg.eigvals(A))))
    if rho >= 1.0:
        raise StabilityError(f"spectral radius of A is {rho:.6g} >= 1")
    return A, B


def solve_discrete_lyapunov(A):
    """Solve ``A' P A - P = -I``.

    Small systems use the vectorized Kronecker form directly; larger ones go
    through ``scipy.linalg.solve_discrete_lyapunov``.

    Returns
    -------
    P : ndarray
    c_l, c_u : float or None
        Extreme eigenvalues of ``P`` (``None`` when ``A`` is empty).
    """
    d = A.shape[0]
    if d == 0:
        return np.zeros((0, 0)), None, None
    rho = float(np.max(np.abs(np.linalg.eigvals(A))))
    if rho >= 1.0:
        raise StabilityError(f"A is not Schur (spectral radius {rho:.6g}); Lyapunov system is singular")
    if d <= KRONECKER_MAX_DIM:
        # column-major vec: vec(A' P A) = (A' kron A') vec(P)
        M = np.kron(A.T, A.T) - np.eye(d * d)
        vecP = np.linalg.solve(M, -np.eye(d).reshape(-1, order="F"))
        P = vecP.reshape((d, d), order="F")
    else:
        P = scipy.linalg.solve_discrete_lyapunov(A.T, np.eye(d))
    P = 0.5 * (P + P.T)
    eig = np.linalg.eigvalsh(P)
    if eig[0] <= 0:
        raise StabilityError("Lyapunov solution is not positive definite")
    return P, float(eig[0]), float(eig[-1])


@dataclass(frozen=True, eq=False)
class Network:
    """Validated network with every derived matrix precomputed."""

    n: int
    edges: tuple
    K: np.ndarray
    S: np.ndarray
    A: np.ndarray
    B: np.ndarray
    P: np.ndarray
    c_l: object
    c_u: object
    report: dict = field(default_factory=dict)

    @classmethod
    def from_edges(cls, n, weighted_edges, normalize=False):
        edges = tuple((int(i), int(j), float(w)) for i, j, w in weighted_edges)
        K, report = build_weight_matrix(n, edges, normalize)
        if report["scale"] != 1.0:
            edges = tuple((i, j, w * report["scale"]) for i, j, w in edges)
        S = build_dispersion_basis(n)
        A, B = consensus_matrices(K, S)
        P, c_l, c_u = solve_discrete_lyapunov(A)
        if A.size:
            report["spectral_radius_A"] = float(np.max(np.abs(np.linalg.eigvals(A))))
            report["lyapunov_residual"] = float(np.max(np.abs(A.T @ P @ A - P + np.eye(A.shape[0]))))
        return cls(n, edges, K, S, A, B, P, c_l, c_u, report)

    @classmethod
    def preset(cls, name, n, weight, normalize=False):
        return cls.from_edges(n, preset_edges(name, n, weight), normalize)

    @property
    def neighborhoods(self):
        nbrs = [set() for _ in range(self.n)]
        for i, j, _ in self.edges:
            nbrs[i].add(j)
            nbrs[j].add(i)
        return tuple(tuple(sorted(s)) for s in nbrs)

    @property
    def SKS(self):
        return self.S.T @ self.K @ self.S

    def decompose(self, chi):
        """``(chi_m, chi_perp) = (1'chi / n, S' chi)``."""
        chi = np.asarray(chi, dtype=float)
        if chi.shape != (self.n,):
            raise ShapeError(f"vector has shape {chi.shape}, network has {self.n} agents")
        return float(chi.mean()), self.S.T @ chi

    def recompose(self, chi_m, chi_perp):
        """``1 chi_m + S chi_perp``."""
        chi_perp = np.asarray(chi_perp, dtype=float)
        if chi_perp.shape != (self.n - 1,):
            raise ShapeError(f"dispersion has shape {chi_perp.shape}, expected ({self.n - 1},)")
        return chi_m + self.S @ chi_perp

    def coupling_norms(self):
        """``(|A'PB|, |B'PB|)`` in the spectral norm."""
        if self.A.size == 0:
            return 0.0, 0.0
        return (float(np.linalg.norm(self.A.T @ self.P @ self.B, 2)),
                float(np.linalg.norm(self.B.T @ self.P @ self.B, 2)))
