"""Gramians, square-root balancing and balanced truncation."""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DegenerateHankel, OrderOutOfRange, SingularValueTie
from .lti import StateSpace, validate
from .numerics import psd_factor, solve_lyapunov, svd

RANK_TOL = 1e-12
# Gramian eigenvalues are kept down to rounding level; a looser cutoff
# leaves visible off-diagonal residue in the balanced Gramians and lets
# the truncation error exceed its bound.  Rank is decided on the Hankel
# singular values instead.
FACTOR_TOL = 1e-14
PSD_TOL = 1e-10
TIE_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class BalancedRealization:
    sys_balanced: StateSpace
    hsv: np.ndarray
    T: np.ndarray
    Tinv: np.ndarray

    @property
    def order(self):
        return self.hsv.size


@dataclass(frozen=True, eq=False)
class ReductionResult:
    sys_reduced: StateSpace
    order: int
    error_bound: float
    hsv_tail: np.ndarray
    positivity: Optional[object] = None


def gramians(sys):
    """Controllability and observability Gramians ``(P, Q)``.

    Continuous: ``AP + PA^T + BB^T = 0`` and ``A^T Q + QA + C^T C = 0``.
    Discrete: ``APA^T - P + BB^T = 0`` and ``A^T QA - Q + C^T C = 0``.
    """
    validate(sys)
    A, B, C = sys.A, sys.B, sys.C
    P = solve_lyapunov(A, B @ B.T, sys.domain)
    Q = solve_lyapunov(A.T, C.T @ C, sys.domain)
    return P, Q


def balance(sys, rank_tol=RANK_TOL, factor_tol=FACTOR_TOL):
    """Square-root balanced realization of a stable system.

    With ``P = R R^T``, ``Q = L L^T`` and ``L^T R = U S V^T`` the balancing
    pair is ``T = R V S^{-1/2}``, ``Tinv = S^{-1/2} U^T L^T``.  Hankel
    singular values at or below ``rank_tol * s_1`` are dropped together
    with their states, so a non-minimal input comes back minimal.
    """
    P, Q = gramians(sys)
    R = psd_factor(P, factor_tol, PSD_TOL)
    L = psd_factor(Q, factor_tol, PSD_TOL)
    scale = np.linalg.norm(sys.B) * np.linalg.norm(sys.C)
    if R.shape[1] == 0 or L.shape[1] == 0 or scale == 0.0:
        raise DegenerateHankel("system has no controllable and observable part")
    U, s, V = svd(L.T @ R)
    if s[0] < 1e-14 * scale:
        raise DegenerateHankel(f"largest Hankel singular value {s[0]:.3e} is negligible")
    keep = s > rank_tol * s[0]
    s, U, V = s[keep], U[:, keep], V[:, keep]
    root = np.sqrt(s)
    T = (R @ V) / root
    Tinv = (U.T @ L.T) / root[:, None]
    bal = StateSpace(Tinv @ sys.A @ T, Tinv @ sys.B, sys.C @ T, sys.D, sys.domain)
    return BalancedRealization(bal, s, T, Tinv)


def hankel_singular_values(sys):
    return balance(sys).hsv


def admissible_orders(hsv, tie_tol=TIE_TOL):
    """Orders ``r`` with a strict singular-value gap after ``sigma_r``
    (the full order is always admissible)."""
    hsv = np.asarray(hsv)
    n = hsv.size
    return [r for r in range(1, n + 1)
            if r == n or hsv[r - 1] - hsv[r] > tie_tol * hsv[0]]


def truncate(bal, r, tie_tol=TIE_TOL):
    """Keep the leading ``r`` balanced states.

    ``error_bound`` is twice the sum of the discarded Hankel singular
    values.  ``D`` is kept unchanged.  The reduced model is re-certified
    stable.  Raises :class:`SingularValueTie` when ``sigma_r`` and
    ``sigma_{r+1}`` are closer than ``tie_tol * sigma_1``.
    """
    hsv = bal.hsv
    n = hsv.size
    r = int(r)
    if not 1 <= r <= n:
        raise OrderOutOfRange(f"order must be in 1..{n}, got {r}")
    if r < n and hsv[r - 1] - hsv[r] <= tie_tol * hsv[0]:
        alternatives = admissible_orders(hsv, tie_tol)
        raise SingularValueTie(
            f"sigma_{r} and sigma_{r + 1} are tied "
            f"({hsv[r - 1]:.6g} vs {hsv[r]:.6g}); admissible orders: {alternatives}",
            alternatives,
        )
    sb = bal.sys_balanced
    reduced = StateSpace(sb.A[:r, :r], sb.B[:r], sb.C[:, :r], sb.D, sb.domain)
    validate(reduced)
    tail = hsv[r:].copy()
    return ReductionResult(reduced, r, 2.0 * float(np.sum(tail)), tail)


def balanced_truncation(sys, r, tie_tol=TIE_TOL):
    return truncate(balance(sys), r, tie_tol)
