"""Dense real linear algebra kernels.

Matrices are plain 2-D ``float64`` numpy arrays; :func:`as_matrix` is the
single entry point that coerces and validates them.  The eigen and singular
value routines are Jacobi methods run in round-robin (parallel) ordering so
that each step applies ``n/2`` disjoint rotations at once with vectorized
row/column updates.
"""

import math
import warnings

import numpy as np
from scipy.linalg import LinAlgWarning, lu_factor, lu_solve

from .errors import (
    DimensionMismatch,
    NoConvergence,
    NonFiniteEntries,
    NotPSD,
    NotSymmetric,
    SingularMatrix,
    SingularOperator,
    SizeBudgetExceeded,
)

__all__ = [
    "as_matrix",
    "SymEigen",
    "Svd",
    "linsolve",
    "sym_eigen",
    "svd",
    "solve_lyapunov",
    "psd_factor",
    "expm",
]

SWEEP_BUDGET = 30
CONVERGENCE_TOL = 1e-12
PIVOT_TOL = 1e-13
LYAPUNOV_MAX_ORDER = 80
_EPS = np.finfo(float).eps


def as_matrix(x, name="matrix"):
    """Return ``x`` as a finite 2-D float64 array (scalars become 1x1)."""
    a = np.array(x, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    if a.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NonFiniteEntries(f"{name} has NaN or Inf entries")
    return a


class SymEigen:
    __slots__ = ("eigenvalues", "eigenvectors")

    def __init__(self, eigenvalues, eigenvectors):
        self.eigenvalues = eigenvalues
        self.eigenvectors = eigenvectors

    def __iter__(self):
        return iter((self.eigenvalues, self.eigenvectors))


class Svd:
    __slots__ = ("U", "singular_values", "V")

    def __init__(self, U, singular_values, V):
        self.U = U
        self.singular_values = singular_values
        self.V = V

    def __iter__(self):
        return iter((self.U, self.singular_values, self.V))


def linsolve(A, B):
    """Solve ``A X = B`` by LU with partial (row) pivoting.

    Raises :class:`SingularMatrix` when a pivot of the factorization is
    smaller than ``1e-13 * max|A_ij|``.
    """
    A = as_matrix(A, "A")
    B = np.asarray(B, dtype=float)
    vector_rhs = B.ndim == 1
    B = as_matrix(B.reshape(-1, 1) if vector_rhs else B, "B")
    n = A.shape[0]
    if A.shape[1] != n:
        raise DimensionMismatch(f"A must be square, got {A.shape}")
    if B.shape[0] != n:
        raise DimensionMismatch(f"B has {B.shape[0]} rows, expected {n}")
    scale = np.max(np.abs(A)) if A.size else 0.0
    if scale == 0.0:
        raise SingularMatrix("zero matrix")
    with warnings.catch_warnings():
        # exact zero pivots are reported by the guard below
        warnings.simplefilter("ignore", LinAlgWarning)
        lu, piv = lu_factor(A, check_finite=False)
    pivots = np.abs(np.diag(lu))
    k = int(np.argmin(pivots))
    if pivots[k] < PIVOT_TOL * scale:
        raise SingularMatrix(
            f"pivot {k} has magnitude {pivots[k]:.3e} < {PIVOT_TOL:g} * {scale:.3e}"
        )
    X = lu_solve((lu, piv), B, check_finite=False)
    return X[:, 0] if vector_rhs else X


def _round_robin(n):
    """Pair schedules covering every (p, q), p < q, once per sweep.

    Circle-method tournament: ``n - 1`` rounds (``n`` rounds for odd ``n``)
    of pairwise-disjoint index pairs, returned as ``(p, q)`` array tuples.
    """
    players = list(range(n)) + ([None] if n % 2 else [])
    size = len(players)
    rounds = []
    for _ in range(size - 1):
        ps, qs = [], []
        for i in range(size // 2):
            a, b = players[i], players[size - 1 - i]
            if a is None or b is None:
                continue
            ps.append(min(a, b))
            qs.append(max(a, b))
        rounds.append((np.array(ps), np.array(qs)))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def _rotation(theta):
    # smaller-angle root of t^2 + 2 theta t - 1 = 0
    sgn = np.where(theta >= 0, 1.0, -1.0)
    t = sgn / (np.abs(theta) + np.hypot(1.0, theta))
    c = 1.0 / np.hypot(1.0, t)
    return c, t * c


def _normalize_signs(V):
    # make the largest-magnitude entry of each column positive (first on ties)
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return signs


def _off_norm(A):
    return float(np.linalg.norm(A - np.diag(np.diag(A))))


def sym_eigen(M, sym_tol=1e-9):
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi.

    Parameters
    ----------
    M : array_like, (n, n)
        Symmetric up to ``sym_tol * ||M||_F``; symmetrized internally.
    sym_tol : float
        Relative asymmetry accepted before raising :class:`NotSymmetric`.

    Returns
    -------
    SymEigen
        Eigenvalues sorted descending and orthonormal eigenvectors in the
        columns of ``eigenvectors``.  Each eigenvector is scaled so that
        its largest-magnitude entry is positive.

    Sweeps stop once the off-diagonal Frobenius norm is below
    ``1e-12 * ||M||_F`` (after one polishing sweep); more than 30 sweeps
    raises :class:`NoConvergence`.
    """
    M = as_matrix(M, "M")
    n = M.shape[0]
    if M.shape[1] != n:
        raise DimensionMismatch(f"M must be square, got {M.shape}")
    fro = np.linalg.norm(M)
    if np.linalg.norm(M - M.T) > sym_tol * fro:
        raise NotSymmetric("matrix is not symmetric within tolerance")
    A = 0.5 * (M + M.T)
    V = np.eye(n)
    target = CONVERGENCE_TOL * fro
    rounds = _round_robin(n) if n > 1 else []

    reached = False
    for _ in range(SWEEP_BUDGET):
        off = _off_norm(A)
        if off == 0.0 or reached:
            break
        reached = off <= target
        for p, q in rounds:
            apq = A[p, q]
            active = apq != 0.0
            if not np.any(active):
                continue
            p, q, apq = p[active], q[active], apq[active]
            with np.errstate(over="ignore"):
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                c, s = _rotation(theta)
            c_, s_ = c[:, None], s[:, None]
            Ap, Aq = A[p, :].copy(), A[q, :].copy()
            A[p, :] = c_ * Ap - s_ * Aq
            A[q, :] = s_ * Ap + c_ * Aq
            Ap, Aq = A[:, p].copy(), A[:, q].copy()
            A[:, p] = Ap * c - Aq * s
            A[:, q] = Ap * s + Aq * c
            A[p, q] = 0.0
            A[q, p] = 0.0
            Vp, Vq = V[:, p].copy(), V[:, q].copy()
            V[:, p] = Vp * c - Vq * s
            V[:, q] = Vp * s + Vq * c
    else:
        if _off_norm(A) > target:
            raise NoConvergence(f"Jacobi eigen did not converge in {SWEEP_BUDGET} sweeps")

    lam = np.diag(A).copy()
    order = np.argsort(-lam, kind="stable")
    lam, V = lam[order], V[:, order]
    V = V * _normalize_signs(V)
    return SymEigen(lam, V)


def _complete_basis(U, filled):
    """Replace columns of U not in ``filled`` by an orthonormal completion."""
    n, k = U.shape
    basis = [U[:, j] for j in range(k) if filled[j]]
    candidates = iter(np.eye(n))
    for j in range(k):
        if filled[j]:
            continue
        for e in candidates:
            w = e.copy()
            for _ in range(2):
                for b in basis:
                    w -= (b @ w) * b
            nw = np.linalg.norm(w)
            if nw > 1e-8:
                U[:, j] = w / nw
                basis.append(U[:, j])
                break
    return U


def svd(M):
    """Thin SVD ``M = U diag(s) V^T`` by one-sided (Hestenes) Jacobi.

    Columns are orthogonalized pairwise until every pair satisfies
    ``|w_p . w_q| <= m * eps * ||w_p|| ||w_q||``, which gives small singular
    values to high relative accuracy for well-scaled inputs.  Singular
    values are returned descending; exactly-zero ones get an orthonormal
    completion in ``U``.
    """
    M = as_matrix(M, "M")
    n, m = M.shape
    if n < m:
        U, s, V = svd(M.T)
        return Svd(V, s, U)
    W = M.copy()
    V = np.eye(m)
    tol = max(m, 1) * _EPS
    rounds = _round_robin(m) if m > 1 else []

    for _ in range(SWEEP_BUDGET):
        rotated = False
        for p, q in rounds:
            Wp, Wq = W[:, p], W[:, q]
            alpha = np.sum(Wp * Wp, axis=0)
            beta = np.sum(Wq * Wq, axis=0)
            gamma = np.sum(Wp * Wq, axis=0)
            active = np.abs(gamma) > tol * np.sqrt(alpha * beta)
            if not np.any(active):
                continue
            rotated = True
            p, q = p[active], q[active]
            with np.errstate(over="ignore"):
                zeta = (beta[active] - alpha[active]) / (2.0 * gamma[active])
                c, s = _rotation(zeta)
            Wp, Wq = Wp[:, active], Wq[:, active]
            W[:, p] = Wp * c - Wq * s
            W[:, q] = Wp * s + Wq * c
            Vp, Vq = V[:, p].copy(), V[:, q].copy()
            V[:, p] = Vp * c - Vq * s
            V[:, q] = Vp * s + Vq * c
        if not rotated:
            break
    else:
        G = W.T @ W
        d = np.sqrt(np.outer(np.diag(G), np.diag(G)))
        off = np.abs(G - np.diag(np.diag(G)))
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(d > 0, off / d, 0.0)
        if ratio.max() > CONVERGENCE_TOL:
            raise NoConvergence(f"one-sided Jacobi did not converge in {SWEEP_BUDGET} sweeps")

    sigma = np.linalg.norm(W, axis=0)
    order = np.argsort(-sigma, kind="stable")
    sigma, W, V = sigma[order], W[:, order], V[:, order]
    filled = sigma > 0.0
    U = np.zeros((n, m))
    U[:, filled] = W[:, filled] / sigma[filled]
    if not np.all(filled):
        U = _complete_basis(U, filled)
    signs = _normalize_signs(V)
    return Svd(U * signs, sigma, V * signs)


def solve_lyapunov(A, Q, domain="continuous"):
    """Solve ``A P + P A^T + Q = 0`` (continuous) or ``A P A^T - P + Q = 0``
    (discrete) by Kronecker vectorization and a dense LU solve.

    Limited to ``n <= 80``.  A singular vectorized operator (eigenvalue
    pairs with ``l_i + l_j = 0`` or ``l_i l_j = 1``) raises
    :class:`SingularOperator`.  The result is symmetrized.
    """
    A = as_matrix(A, "A")
    Q = as_matrix(Q, "Q")
    n = A.shape[0]
    if A.shape != (n, n) or Q.shape != (n, n):
        raise DimensionMismatch(f"A {A.shape} and Q {Q.shape} must be square of equal size")
    if n > LYAPUNOV_MAX_ORDER:
        raise SizeBudgetExceeded(f"Lyapunov solve limited to n <= {LYAPUNOV_MAX_ORDER}, got {n}")
    eye = np.eye(n)
    # row-major vec: vec(A X B) = (A kron B^T) vec(X)
    if domain == "continuous":
        K = np.kron(A, eye) + np.kron(eye, A)
    elif domain == "discrete":
        K = np.kron(A, A) - np.eye(n * n)
    else:
        raise ValueError(f"unknown domain {domain!r}")
    try:
        x = linsolve(K, -Q.reshape(-1))
    except SingularMatrix as exc:
        raise SingularOperator(f"{domain} Lyapunov operator is singular: {exc}") from None
    P = x.reshape(n, n)
    return 0.5 * (P + P.T)


def psd_factor(P, tol=1e-10, neg_tol=None):
    """Factor a positive semidefinite ``P`` as ``R R^T`` with ``R`` n-by-r.

    Eigenvalues below ``-neg_tol * ||P||_2`` raise :class:`NotPSD`
    (``neg_tol`` defaults to ``tol``); the rank ``r`` counts eigenvalues
    above ``tol * lambda_max``.
    """
    neg_tol = tol if neg_tol is None else neg_tol
    P = as_matrix(P, "P")
    lam, V = sym_eigen(P)
    n = P.shape[0]
    norm2 = np.max(np.abs(lam)) if n else 0.0
    if n and lam[-1] < -neg_tol * norm2:
        raise NotPSD(f"eigenvalue {lam[-1]:.3e} below -{neg_tol:g} * {norm2:.3e}")
    keep = lam > tol * max(lam[0], 0.0) if n else np.zeros(0, bool)
    if n and lam[0] <= 0.0:
        keep[:] = False
    return V[:, keep] * np.sqrt(lam[keep])


# Pade coefficients and 1-norm thresholds for scaling and squaring
_PADE = {
    3: (120.0, 60.0, 12.0, 1.0),
    5: (30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0),
    7: (17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0),
    9: (17643225600.0, 8821612800.0, 2075673600.0, 302702400.0, 30270240.0,
        2162160.0, 110880.0, 3960.0, 90.0, 1.0),
    13: (64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
         1187353796428800.0, 129060195264000.0, 10559470521600.0,
         670442572800.0, 33522128640.0, 1323241920.0, 40840800.0, 960960.0,
         16380.0, 182.0, 1.0),
}
_THETA = {
    3: 1.495585217958292e-2,
    5: 2.539398330063230e-1,
    7: 9.504178996162932e-1,
    9: 2.097847961257068e0,
    13: 5.371920351148152e0,
}


def _pade_uv(A, m):
    b = _PADE[m]
    n = A.shape[0]
    eye = np.eye(n)
    A2 = A @ A
    if m < 13:
        powers = [eye, A2]
        for _ in range(2, (m + 1) // 2):
            powers.append(powers[-1] @ A2)
        U = A @ sum(b[2 * j + 1] * powers[j] for j in range(len(powers)))
        V = sum(b[2 * j] * powers[j] for j in range(len(powers)))
        return U, V
    A4 = A2 @ A2
    A6 = A4 @ A2
    U = A @ (A6 @ (b[13] * A6 + b[11] * A4 + b[9] * A2)
             + b[7] * A6 + b[5] * A4 + b[3] * A2 + b[1] * eye)
    V = (A6 @ (b[12] * A6 + b[10] * A4 + b[8] * A2)
         + b[6] * A6 + b[4] * A4 + b[2] * A2 + b[0] * eye)
    return U, V


def expm(A):
    """Matrix exponential by scaling and squaring with diagonal Pade
    approximants of degree 3, 5, 7, 9 or 13 chosen from ``||A||_1``."""
    A = as_matrix(A, "A")
    n = A.shape[0]
    if A.shape[1] != n:
        raise DimensionMismatch(f"A must be square, got {A.shape}")
    norm1 = np.max(np.sum(np.abs(A), axis=0)) if n else 0.0
    if norm1 == 0.0:
        return np.eye(n)
    for m in (3, 5, 7, 9):
        if norm1 <= _THETA[m]:
            U, V = _pade_uv(A, m)
            return linsolve(V - U, V + U)
    s = max(0, int(math.ceil(math.log2(norm1 / _THETA[13]))))
    U, V = _pade_uv(A / 2.0**s, 13)
    X = linsolve(V - U, V + U)
    for _ in range(s):
        X = X @ X
    return X
