"""Seeded test-system families.

All randomness comes from :class:`SplitMix64`, a 64-bit splitmix generator
written out here so that a given seed yields bit-identical systems on every
platform and numpy version.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidPoles, PoleTie, SizeBudgetExceeded
from .lti import CONTINUOUS, DISCRETE, StateSpace, series
from .numerics import LYAPUNOV_MAX_ORDER

FAMILIES = ("lag_chain", "random_stable", "tridiag_relaxation", "heat_1d", "oscillatory")
POLE_TIE_TOL = 1e-9

_MASK = (1 << 64) - 1


class SplitMix64:
    def __init__(self, seed):
        self.state = int(seed) & _MASK

    def next_u64(self):
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)

    def random(self):
        """Uniform double in the open interval (0, 1)."""
        return ((self.next_u64() >> 11) + 0.5) * 2.0**-53

    def uniform(self, lo, hi, size=None):
        if size is None:
            return lo + (hi - lo) * self.random()
        return np.array([lo + (hi - lo) * self.random() for _ in range(size)])

    def normal(self, size=None):
        # Box-Muller, cosine branch only
        if size is None:
            u1, u2 = self.random(), self.random()
            return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)
        return np.array([self.normal() for _ in range(size)])

    def normal_matrix(self, rows, cols):
        return self.normal(rows * cols).reshape(rows, cols)


@dataclass
class GeneratorSpec:
    family: str
    order: int = 1
    seed: int = 0
    params: dict = field(default_factory=dict)

    def to_dict(self):
        return {"family": self.family, "order": self.order, "seed": self.seed,
                "params": dict(self.params)}

    @classmethod
    def from_dict(cls, d):
        return cls(d["family"], int(d.get("order", 1)), int(d.get("seed", 0)),
                   dict(d.get("params", {})))


def lag(pole, gain=1.0, domain=CONTINUOUS):
    return StateSpace([[pole]], [[1.0]], [[gain]], [[0.0]], domain)


def lag_chain(poles, gains=None):
    """Cascade of first-order lags ``gain_i / (s - pole_i)`` built with
    :func:`series`."""
    poles = [float(p) for p in poles]
    gains = [1.0] * len(poles) if gains is None else [float(g) for g in gains]
    if not poles:
        raise InvalidPoles("need at least one pole")
    if len(gains) != len(poles):
        raise InvalidPoles(f"{len(poles)} poles but {len(gains)} gains")
    if any(p >= 0 for p in poles):
        raise InvalidPoles(f"poles must be negative: {poles}")
    if any(g <= 0 for g in gains):
        raise InvalidPoles(f"gains must be positive: {gains}")
    srt = sorted(poles)
    for a, b in zip(srt, srt[1:]):
        if b - a <= POLE_TIE_TOL:
            raise PoleTie(f"poles {a} and {b} coincide within {POLE_TIE_TOL:g}")
    sys = lag(poles[0], gains[0])
    for p, g in zip(poles[1:], gains[1:]):
        sys = series(sys, lag(p, g))
    return sys


def default_chain_poles(n):
    return [-1.0] if n == 1 else list(np.linspace(-1.0, -3.0, n))


def seeded_chain_poles(n, seed, lo=-3.0, hi=-1.0):
    rng = SplitMix64(seed)
    while True:
        poles = sorted(rng.uniform(lo, hi, n), reverse=True)
        if all(a - b > POLE_TIE_TOL for a, b in zip(poles, poles[1:])):
            return [float(p) for p in poles]


def random_stable(n, m=1, p=1, seed=0, domain=CONTINUOUS):
    """Random stable system.

    Continuous: ``A = M - (||M||_F + 0.5) I``; the Frobenius norm bounds
    ``||M||_2``, so every eigenvalue has real part at most ``-0.5``.
    Discrete: ``A = M / (||M||_F + 0.5)``, spectral radius below one.
    """
    if n > LYAPUNOV_MAX_ORDER:
        raise SizeBudgetExceeded(f"random_stable limited to n <= {LYAPUNOV_MAX_ORDER}")
    rng = SplitMix64(seed)
    M = rng.normal_matrix(n, n)
    bound = np.linalg.norm(M) + 0.5
    if domain == CONTINUOUS:
        A = M - bound * np.eye(n)
    elif domain == DISCRETE:
        A = M / bound
    else:
        raise ValueError(f"unknown domain {domain!r}")
    B = rng.normal_matrix(n, m)
    C = rng.normal_matrix(p, n)
    D = rng.normal_matrix(p, m)
    return StateSpace(A, B, C, D, domain)


def tridiag_relaxation(n, seed=0):
    """Symmetric tridiagonal relaxation system with ``B = C^T >= 0``.

    Diagonal ``-(2 + |xi_i|)`` and off-diagonals in (0, 1) make ``A``
    strictly diagonally dominant with negative diagonal, hence ``A < 0``.
    """
    if n > LYAPUNOV_MAX_ORDER:
        raise SizeBudgetExceeded(f"tridiag_relaxation limited to n <= {LYAPUNOV_MAX_ORDER}")
    rng = SplitMix64(seed)
    diag = -(2.0 + np.abs(rng.normal(n)))
    off = rng.uniform(0.0, 1.0, n - 1)
    A = np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)
    b = rng.uniform(0.0, 1.0, n).reshape(n, 1)
    return StateSpace(A, b, b.T, [[0.0]])


def heat_1d(n):
    """Dirichlet heat equation on n interior nodes, input at the first node,
    output at the last."""
    if n < 2:
        raise ValueError("heat_1d needs n >= 2")
    A = (n + 1) ** 2 * (np.diag(-2.0 * np.ones(n)) + np.diag(np.ones(n - 1), 1)
                        + np.diag(np.ones(n - 1), -1))
    B = np.zeros((n, 1))
    B[0, 0] = 1.0
    C = np.zeros((1, n))
    C[0, -1] = 1.0
    return StateSpace(A, B, C, [[0.0]])


def oscillatory_params(seed):
    rng = SplitMix64(seed)
    return rng.uniform(0.5, 0.95), rng.uniform(3.0, 8.0)


def oscillatory(seed=0, a=None, omega=None):
    """Third-order realization of ``g(t) = exp(-t) (a + sin(omega t))``.

    With ``a < 1`` the impulse response dips below zero wherever
    ``sin(omega t) < -a``.  Transfer function
    ``a/(s+1) + omega/((s+1)^2 + omega^2)``.
    """
    sa, sw = oscillatory_params(seed)
    a = sa if a is None else float(a)
    omega = sw if omega is None else float(omega)
    A = np.array([[-1.0, 0.0, 0.0],
                  [0.0, -1.0, omega],
                  [0.0, -omega, -1.0]])
    B = np.array([[1.0], [0.0], [1.0]])
    C = np.array([[a, 1.0, 0.0]])
    return StateSpace(A, B, C, [[0.0]])


def generate(spec):
    """Build the system described by a :class:`GeneratorSpec`."""
    fam, n, seed, prm = spec.family, spec.order, spec.seed, spec.params
    if fam == "lag_chain":
        if "poles" in prm:
            poles = prm["poles"]
        elif prm.get("pole_mode", "linspace") == "seeded":
            lo, hi = prm.get("pole_range", (-3.0, -1.0))
            poles = seeded_chain_poles(n, seed, lo, hi)
        else:
            poles = default_chain_poles(n)
        return lag_chain(poles, prm.get("gains"))
    if fam == "random_stable":
        return random_stable(n, int(prm.get("inputs", 1)), int(prm.get("outputs", 1)),
                             seed, prm.get("domain", CONTINUOUS))
    if fam == "tridiag_relaxation":
        return tridiag_relaxation(n, seed)
    if fam == "heat_1d":
        return heat_1d(n)
    if fam == "oscillatory":
        return oscillatory(seed, prm.get("a"), prm.get("omega"))
    raise ValueError(f"unknown family {fam!r}; choose from {FAMILIES}")
