"""State-space LTI systems: validation, responses and series connection."""

from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatch,
    DomainMismatch,
    SingularMatrix,
    SingularOperator,
    Unstable,
    WrongDomain,
)
from .numerics import as_matrix, expm, linsolve, solve_lyapunov, sym_eigen

CONTINUOUS = "continuous"
DISCRETE = "discrete"
DOMAINS = (CONTINUOUS, DISCRETE)

DEFAULT_GRID_POINTS = 120
DEFAULT_GRID_SPAN = (1e-3, 8.0)


def _frozen(a):
    a = a.copy()
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class StateSpace:
    """Immutable realization ``(A, B, C, D)`` in continuous or discrete time."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    domain: str = CONTINUOUS

    def __post_init__(self):
        if self.domain not in DOMAINS:
            raise ValueError(f"domain must be one of {DOMAINS}, got {self.domain!r}")
        mats = {}
        for name in "ABCD":
            mats[name] = _frozen(as_matrix(getattr(self, name), name))
            object.__setattr__(self, name, mats[name])
        n, m, p = mats["A"].shape[0], mats["B"].shape[1], mats["C"].shape[0]
        if min(n, m, p) < 1:
            raise DimensionMismatch("state, input and output dimensions must be >= 1")
        expected = {"A": (n, n), "B": (n, m), "C": (p, n), "D": (p, m)}
        for name, shape in expected.items():
            if mats[name].shape != shape:
                raise DimensionMismatch(
                    f"{name} has shape {mats[name].shape}, expected {shape}"
                )

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    @property
    def p(self):
        return self.C.shape[0]

    @property
    def is_siso(self):
        return self.m == 1 and self.p == 1

    @property
    def continuous(self):
        return self.domain == CONTINUOUS

    def matrices(self):
        return self.A, self.B, self.C, self.D

    def __eq__(self, other):
        if not isinstance(other, StateSpace):
            return NotImplemented
        return self.domain == other.domain and all(
            np.array_equal(x, y) for x, y in zip(self.matrices(), other.matrices())
        )

    __hash__ = None


@dataclass(frozen=True)
class StabilityCertificate:
    """Lyapunov certificate: ``P`` solves the Gramian equation with ``Q = I``.

    ``time_constant`` is ``2 * lambda_max(P)`` in continuous time, which is
    exactly ``1 / |Re lambda|`` of the slowest mode for normal ``A`` and an
    overestimate otherwise.
    """

    min_eigenvalue: float
    max_eigenvalue: float
    time_constant: float


def stability_certificate(sys):
    """Return the certificate, raising :class:`Unstable` if ``P`` is not
    positive definite or the Lyapunov operator is singular."""
    try:
        P = solve_lyapunov(sys.A, np.eye(sys.n), sys.domain)
    except SingularOperator:
        raise Unstable(
            "Lyapunov operator is singular (marginal or mirrored modes)",
            min_eigenvalue=0.0,
        ) from None
    lam = sym_eigen(P).eigenvalues
    if lam[-1] <= 0.0:
        raise Unstable(
            f"Lyapunov certificate not positive definite (min eigenvalue {lam[-1]:.6g})",
            min_eigenvalue=float(lam[-1]),
        )
    return StabilityCertificate(float(lam[-1]), float(lam[0]), float(2.0 * lam[0]))


def validate(sys):
    """Check dimensions and stability; returns the :class:`StabilityCertificate`."""
    if not isinstance(sys, StateSpace):
        raise TypeError("expected a StateSpace")
    return stability_certificate(sys)


@dataclass(frozen=True, eq=False)
class TimeGrid:
    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float).reshape(-1)
        if pts.size == 0:
            raise ValueError("grid must contain at least one point")
        if not np.all(np.isfinite(pts)) or pts[0] < 0 or np.any(np.diff(pts) <= 0):
            raise ValueError("grid points must be finite, nonnegative and strictly increasing")
        object.__setattr__(self, "points", _frozen(pts))

    def __len__(self):
        return self.points.size

    def __eq__(self, other):
        return isinstance(other, TimeGrid) and np.array_equal(self.points, other.points)

    __hash__ = None

    @property
    def is_integer(self):
        return bool(np.array_equal(self.points, np.arange(len(self))))

    @classmethod
    def integers(cls, count):
        return cls(np.arange(count, dtype=float))

    @classmethod
    def geometric(cls, t_min, t_max, count):
        if count == 1:
            return cls([t_min])
        return cls(np.geomspace(t_min, t_max, count))

    def refine(self):
        """Insert a midpoint in every interval (geometric where possible)."""
        pts = self.points
        if self.is_integer:
            return TimeGrid.integers(2 * len(self) - 1)
        a, b = pts[:-1], pts[1:]
        mid = np.where(a > 0, np.sqrt(a * b), 0.5 * (a + b))
        out = np.empty(2 * pts.size - 1)
        out[0::2], out[1::2] = pts, mid
        return TimeGrid(out)


def default_grid(sys, points=DEFAULT_GRID_POINTS, span=DEFAULT_GRID_SPAN, certificate=None):
    """Analysis grid: geometric from ``span[0]*tau`` to ``span[1]*tau`` in
    continuous time, ``0..points-1`` in discrete time."""
    if not sys.continuous:
        return TimeGrid.integers(points)
    cert = certificate or validate(sys)
    tau = cert.time_constant
    return TimeGrid.geometric(span[0] * tau, span[1] * tau, points)


def impulse_response(sys, grid):
    """Samples ``C expm(A t) B`` at each grid point, shape ``(N, p, m)``.

    The feedthrough ``D`` is not included.
    """
    if not sys.continuous:
        raise WrongDomain("impulse_response needs a continuous system; use markov_parameters")
    pts = grid.points if isinstance(grid, TimeGrid) else np.asarray(grid, float).reshape(-1)
    out = np.empty((pts.size, sys.p, sys.m))
    for i, t in enumerate(pts):
        out[i] = sys.C @ expm(sys.A * t) @ sys.B
    return out


def markov_parameters(sys, count):
    """``(D, CB, CAB, CA^2B, ...)`` as an array of shape ``(count, p, m)``."""
    if sys.continuous:
        raise WrongDomain("markov_parameters needs a discrete system")
    out = np.empty((count, sys.p, sys.m))
    if count == 0:
        return out
    out[0] = sys.D
    X = sys.B.copy()
    for j in range(1, count):
        out[j] = sys.C @ X
        X = sys.A @ X
    return out


def transfer_eval(sys, s):
    """Evaluate ``C (sI - A)^{-1} B + D`` at complex ``s``.

    The complex solve is done over the reals with the 2n-by-2n embedding
    ``[[xI - A, -yI], [yI, xI - A]]`` for ``s = x + iy``.
    """
    s = complex(s)
    n = sys.n
    eye = np.eye(n)
    shifted = s.real * eye - sys.A
    K = np.block([[shifted, -s.imag * eye], [s.imag * eye, shifted]])
    rhs = np.vstack([sys.B, np.zeros_like(sys.B)])
    try:
        X = linsolve(K, rhs)
    except SingularMatrix:
        raise SingularMatrix(f"s = {s} is numerically a pole") from None
    return sys.C @ (X[:n] + 1j * X[n:]) + sys.D


def frequency_points(sys, omegas):
    """Map angular frequencies to ``i*w`` (continuous) or ``exp(i*w)`` (discrete)."""
    omegas = np.asarray(omegas, dtype=float)
    return 1j * omegas if sys.continuous else np.exp(1j * omegas)


def series(sys1, sys2):
    """Cascade ``sys2 o sys1``: the output of ``sys1`` drives ``sys2``."""
    if sys1.domain != sys2.domain:
        raise DomainMismatch("cannot connect continuous and discrete systems")
    if sys1.p != sys2.m:
        raise DimensionMismatch(
            f"sys1 has {sys1.p} outputs but sys2 has {sys2.m} inputs"
        )
    n1, n2 = sys1.n, sys2.n
    A = np.block([[sys1.A, np.zeros((n1, n2))], [sys2.B @ sys1.C, sys2.A]])
    B = np.vstack([sys1.B, sys2.B @ sys1.D])
    C = np.hstack([sys2.D @ sys1.C, sys2.C])
    D = sys2.D @ sys1.D
    return StateSpace(A, B, C, D, sys1.domain)
