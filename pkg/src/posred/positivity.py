"""Sign regularity, Hankel kernels and positivity certificates.

Minors are enumerated exhaustively (row and column index sets in
lexicographic order) and evaluated with LU-based determinants.  A minor of
order ``j`` passes when it is at least ``-tol * max(1, max|M_ij|)**j``.
"""

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations
from typing import Optional

import numpy as np

from .errors import (
    NotSiso,
    OrderOutOfRange,
    SizeBudgetExceeded,
    TooShort,
    WrongDomain,
)
from .lti import TimeGrid, impulse_response, markov_parameters
from .numerics import as_matrix, svd, sym_eigen

MINOR_BUDGET = 2_000_000
MINOR_TOL = 1e-10
POSITIVITY_TOL = 1e-8
ZERO_TOL = 1e-12
RANK_TOL = 1e-10
GAP_TOL = 1e-8
SYMMETRY_TOL = 1e-10

SYMMETRIC_RELAXATION = "symmetric_relaxation"
SYMMETRIC = "symmetric"
NOT_SYMMETRIC = "none"

_CHUNK_ELEMENTS = 4_000_000


# -- variation counters --------------------------------------------------

def _signs(v, zero_tol):
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.size == 0:
        return v
    vmax = np.max(np.abs(v))
    if vmax == 0.0:
        return np.zeros_like(v)
    s = np.sign(v)
    s[np.abs(v) <= zero_tol * vmax] = 0.0
    return s


def sign_changes_minus(v, zero_tol=ZERO_TOL):
    """Sign alternations of ``v`` after dropping entries with
    ``|v_i| <= zero_tol * ||v||_inf``."""
    s = _signs(v, zero_tol)
    s = s[s != 0]
    return int(np.count_nonzero(s[1:] != s[:-1]))


def sign_changes_plus(v, zero_tol=ZERO_TOL):
    """Maximal sign alternations over all sign choices for the zero entries.

    Every run of ``L`` zeros at either end contributes ``L``.  An interior
    run between nonzeros ``a`` and ``b`` contributes ``L + 1`` when that
    has the parity forced by ``sign(a) * sign(b)`` and ``L`` otherwise.
    The all-zero vector gives 0.
    """
    s = _signs(v, zero_tol)
    nz = np.flatnonzero(s)
    if nz.size == 0:
        return 0
    count = int(nz[0]) + int(s.size - 1 - nz[-1])
    for i, j in zip(nz[:-1], nz[1:]):
        run = int(j - i - 1)
        differ = s[i] != s[j]
        count += run + 1 if (run + 1) % 2 == int(differ) else run
    return count


# -- compound matrices and minors ---------------------------------------

def _threads():
    try:
        return max(1, int(os.environ.get("POSRED_THREADS", "1")))
    except ValueError:
        return 1


def _index_sets(n, k):
    return np.array(list(combinations(range(n), k)), dtype=np.intp).reshape(-1, k)


def _minor_blocks(M, k, rows, cols):
    """Yield ``(row_offset, dets)`` blocks covering all k-by-k minors."""
    per_row = max(1, len(cols) * k * k)
    step = max(1, _CHUNK_ELEMENTS // per_row)
    starts = range(0, len(rows), step)

    def block(start):
        R = rows[start:start + step]
        if k == 1:
            return start, M[R[:, 0][:, None], cols[:, 0][None, :]]
        sub = M[R[:, None, :, None], cols[None, :, None, :]]
        return start, np.linalg.det(sub)

    nthreads = _threads()
    if nthreads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=nthreads) as pool:
            yield from pool.map(block, starts)
    else:
        for start in starts:
            yield block(start)


def _check_budget(n, m, k, budget):
    count = math.comb(n, k) * math.comb(m, k)
    if count > budget:
        raise SizeBudgetExceeded(
            f"{count} minors of order {k} exceed the budget of {budget}",
            certified_order=k - 1,
        )
    return count


def compound(M, k, budget=MINOR_BUDGET):
    """k-th multiplicative compound: all k-by-k minors of ``M`` with rows
    and columns indexed by k-subsets in lexicographic order."""
    M = as_matrix(M, "M")
    n, m = M.shape
    if not 1 <= k <= min(n, m):
        raise OrderOutOfRange(f"order must be in 1..{min(n, m)}, got {k}")
    _check_budget(n, m, k, budget)
    rows, cols = _index_sets(n, k), _index_sets(m, k)
    out = np.empty((len(rows), len(cols)))
    for start, dets in _minor_blocks(M, k, rows, cols):
        out[start:start + dets.shape[0]] = dets
    return out


@dataclass
class OrderScan:
    order: int
    count: int
    min_normalized: float
    witness: dict
    ok: bool


def _scan_order(M, j, tol, budget):
    n, m = M.shape
    count = _check_budget(n, m, j, budget)
    scale = max(1.0, float(np.max(np.abs(M)))) ** j
    rows, cols = _index_sets(n, j), _index_sets(m, j)
    best = None
    for start, dets in _minor_blocks(M, j, rows, cols):
        flat = int(np.argmin(dets))
        val = float(dets.reshape(-1)[flat])
        if best is None or val < best[0]:
            r, c = divmod(flat, len(cols))
            best = (val, start + r, c)
    val, r, c = best
    witness = {
        "order": j,
        "rows": [int(i) for i in rows[r]],
        "cols": [int(i) for i in cols[c]],
        "value": val,
        "normalized": val / scale,
    }
    return OrderScan(j, count, val / scale, witness, val >= -tol * scale)


@dataclass
class MinorCheck:
    ok: bool
    witness: Optional[dict]
    minors_checked: int
    orders: list = field(default_factory=list)


def _scan(M, k, tol, budget, stop_on_failure):
    M = as_matrix(M, "M")
    if not 1 <= k <= min(M.shape):
        raise OrderOutOfRange(f"order must be in 1..{min(M.shape)}, got {k}")
    scans = []
    for j in range(1, k + 1):
        try:
            scans.append(_scan_order(M, j, tol, budget))
        except SizeBudgetExceeded as exc:
            certified = 0
            for s in scans:
                if not s.ok:
                    break
                certified = s.order
            exc.certified_order = certified
            exc.partial = scans
            raise
        if stop_on_failure and not scans[-1].ok:
            break
    return scans


def minors_nonneg_up_to(M, k, tol=MINOR_TOL, budget=MINOR_BUDGET):
    """Check that all minors of order 1..k are nonnegative up to ``tol``.

    Returns a :class:`MinorCheck` whose witness is the minor with the most
    negative normalized value over every order checked (lexicographically
    first on ties).  Hitting the budget raises
    :class:`SizeBudgetExceeded` with ``certified_order`` set.
    """
    scans = _scan(M, k, tol, budget, stop_on_failure=False)
    worst = min(scans, key=lambda s: s.min_normalized)
    return MinorCheck(
        ok=all(s.ok for s in scans),
        witness=worst.witness,
        minors_checked=sum(s.count for s in scans),
        orders=scans,
    )


# -- Hankel matrices -----------------------------------------------------

def hankel_from_sequence(seq, rows, cols):
    """Hankel matrix ``H[i, j] = seq[i + j]``."""
    seq = np.asarray(seq, dtype=float).reshape(-1)
    if seq.size < rows + cols - 1:
        raise TooShort(f"need {rows + cols - 1} terms, got {seq.size}")
    i, j = np.indices((rows, cols))
    return seq[i + j]


def hankel_kernel_matrix(sys, grid):
    """Sampled Hankel kernel ``g(t_i + t_j)`` of a continuous SISO system."""
    if not sys.continuous:
        raise WrongDomain("kernel sampling needs a continuous system")
    if not sys.is_siso:
        raise NotSiso("kernel sampling needs a SISO system")
    t = grid.points
    sums = t[:, None] + t[None, :]
    uniq, inverse = np.unique(sums, return_inverse=True)
    g = impulse_response(sys, uniq)[:, 0, 0]
    H = g[inverse].reshape(sums.shape)
    return 0.5 * (H + H.T)


def kernel_matrix(sys, grid):
    """Continuous: sampled Hankel kernel.  Discrete: ``N``-by-``N`` Hankel
    matrix of the Markov parameters ``CB, CAB, ...`` with ``N = len(grid)``."""
    if sys.continuous:
        return hankel_kernel_matrix(sys, grid)
    if not sys.is_siso:
        raise NotSiso("Hankel certification needs a SISO system")
    N = len(grid)
    h = markov_parameters(sys, 2 * N)[1:, 0, 0]
    return hankel_from_sequence(h, N, N)


# -- external positivity -------------------------------------------------

def _samples(sys, grid):
    if sys.continuous:
        return grid.points, impulse_response(sys, grid)
    pts = grid.points.astype(int)
    h = markov_parameters(sys, int(pts.max()) + 2)[1:]
    return grid.points, h[pts]


def external_positivity(sys, grid, tol=POSITIVITY_TOL):
    """Entrywise check of the sampled impulse response (Markov parameters
    ``CA^tB`` in discrete time) against ``-tol * peak``, plus ``D >= -tol``.

    Returns ``(ok, worst)`` where ``worst`` describes the most negative
    sample.
    """
    times, samples = _samples(sys, grid)
    peak = float(np.max(np.abs(samples)))
    flat = int(np.argmin(samples))
    k, i, j = np.unravel_index(flat, samples.shape)
    value = float(samples[k, i, j])
    worst = {
        "time": float(times[k]),
        "output": int(i),
        "input": int(j),
        "value": value,
        "peak": peak,
    }
    d_ok = bool(np.all(sys.D >= -tol))
    return bool(value >= -tol * peak and d_ok), worst


# -- k-positivity --------------------------------------------------------

@dataclass(eq=False)
class PositivityReport:
    externally_positive: bool
    d_nonnegative: bool
    k_order: int
    grid: TimeGrid
    hankel_size: tuple
    tolerance: float
    minors_checked: int
    witness: Optional[dict] = None
    k_max: int = 0
    kernel_order: int = 0
    order_minima: list = field(default_factory=list)
    impulse_check: Optional[dict] = None
    complete: bool = True

    def to_dict(self):
        return {
            "externally_positive": self.externally_positive,
            "d_nonnegative": self.d_nonnegative,
            "k_order": self.k_order,
            "k_max": self.k_max,
            "kernel_order": self.kernel_order,
            "grid": [float(t) for t in self.grid.points],
            "hankel_size": [int(x) for x in self.hankel_size],
            "tolerance": self.tolerance,
            "minors_checked": self.minors_checked,
            "order_minima": [float(x) for x in self.order_minima],
            "witness": self.witness,
            "impulse_check": self.impulse_check,
            "complete": self.complete,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            externally_positive=d["externally_positive"],
            d_nonnegative=d["d_nonnegative"],
            k_order=d["k_order"],
            grid=TimeGrid(d["grid"]),
            hankel_size=tuple(d["hankel_size"]),
            tolerance=d["tolerance"],
            minors_checked=d["minors_checked"],
            witness=d.get("witness"),
            k_max=d.get("k_max", 0),
            kernel_order=d.get("kernel_order", 0),
            order_minima=list(d.get("order_minima", [])),
            impulse_check=d.get("impulse_check"),
            complete=d.get("complete", True),
        )

    def __eq__(self, other):
        if not isinstance(other, PositivityReport):
            return NotImplemented
        return self.to_dict() == other.to_dict()


def k_positivity_order(sys, grid, k_max=4, tol=MINOR_TOL, impulse_grid=None,
                       impulse_tol=POSITIVITY_TOL, budget=MINOR_BUDGET):
    """Largest order ``k <= k_max`` for which the sampled Hankel matrix has
    all minors of order ``1..k`` nonnegative.

    Continuous systems are certified on ``g(t_i + t_j)`` over ``grid``, a
    necessary condition for k-positivity of the Hankel operator.  Discrete
    systems use the finite Hankel matrix of Markov parameters.  When
    ``impulse_grid`` is given the impulse response is also sampled there;
    a negative sample (or a negative ``D``) sets ``k_order`` to 0 since the
    system is then not externally positive.
    """
    if not sys.is_siso:
        raise NotSiso("k-positivity certification needs a SISO system")
    H = kernel_matrix(sys, grid)
    cap = min(int(k_max), *H.shape)
    d_ok = bool(np.all(sys.D >= -tol))
    partial = False
    scans = []
    if cap >= 1:
        try:
            scans = _scan(H, cap, tol, budget, stop_on_failure=True)
        except SizeBudgetExceeded as exc:
            scans, partial = exc.partial, True
    kernel_order = 0
    for s in scans:
        if not s.ok:
            break
        kernel_order = s.order
    failing = next((s for s in scans if not s.ok), None)

    impulse_check = None
    imp_ok = True
    if impulse_grid is not None:
        imp_ok, worst = external_positivity(sys, impulse_grid, impulse_tol)
        impulse_check = {"ok": imp_ok, "tolerance": impulse_tol,
                         "points": len(impulse_grid), "worst": worst}

    externally_positive = kernel_order >= 1 and d_ok and imp_ok
    if failing is not None:
        witness = failing.witness
    elif kernel_order >= 1 and not imp_ok:
        witness = {"order": 1, "impulse_sample": impulse_check["worst"]}
    elif kernel_order >= 1 and not d_ok:
        witness = {"order": 1, "feedthrough": float(np.min(sys.D))}
    else:
        witness = None

    report = PositivityReport(
        externally_positive=externally_positive,
        d_nonnegative=d_ok,
        k_order=kernel_order if externally_positive else 0,
        grid=grid,
        hankel_size=H.shape,
        tolerance=tol,
        minors_checked=sum(s.count for s in scans),
        witness=witness,
        k_max=int(k_max),
        kernel_order=kernel_order,
        order_minima=[s.min_normalized for s in scans],
        impulse_check=impulse_check,
        complete=not partial,
    )
    if partial:
        raise SizeBudgetExceeded(
            f"minor budget exhausted after certifying order {kernel_order}",
            certified_order=kernel_order,
            partial=report,
        )
    return report


# -- singular vector sign structure -------------------------------------

@dataclass
class SignRecord:
    index: int
    sigma: float
    changes_u: int
    changes_v: int
    expected: int
    reliable: bool
    match: Optional[bool]

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class SignStructureReport:
    records: list
    k: int
    rank_tol: float

    @property
    def all_match(self):
        return bool(self.records) and all(r.match is True for r in self.records)

    def to_dict(self):
        return {"k": self.k, "rank_tol": self.rank_tol,
                "records": [r.to_dict() for r in self.records]}

    @classmethod
    def from_dict(cls, d):
        return cls([SignRecord(**r) for r in d["records"]], d["k"], d["rank_tol"])


def gk_sign_structure(H, k, rank_tol=RANK_TOL, gap_tol=GAP_TOL):
    """Compare sign changes of the leading singular vectors with ``i - 1``.

    Only singular values above ``rank_tol * sigma_1`` are reported.  A
    singular value closer than ``gap_tol * sigma_1`` to a neighbour has an
    ill-defined vector; such records are marked unreliable and carry
    ``match=None``.
    """
    H = as_matrix(H, "H")
    k = min(int(k), *H.shape)
    U, s, V = svd(H)
    records = []
    if s.size == 0 or s[0] == 0.0:
        return SignStructureReport(records, k, rank_tol)
    for i in range(k):
        if s[i] <= rank_tol * s[0]:
            break
        gaps = []
        if i > 0:
            gaps.append(s[i - 1] - s[i])
        if i + 1 < s.size:
            gaps.append(s[i] - s[i + 1])
        reliable = all(g > gap_tol * s[0] for g in gaps)
        su, sv = sign_changes_minus(U[:, i]), sign_changes_minus(V[:, i])
        match = (su == i and sv == i) if reliable else None
        records.append(SignRecord(i + 1, float(s[i]), su, sv, i, reliable, match))
    return SignStructureReport(records, k, rank_tol)


# -- symmetry ------------------------------------------------------------

def detect_symmetry(sys, tol=SYMMETRY_TOL):
    """Classify as ``symmetric_relaxation`` (``A = A^T < 0``, ``B = C^T``),
    ``symmetric`` or ``none``."""
    A, B, C = sys.A, sys.B, sys.C
    if B.shape != C.T.shape:
        return NOT_SYMMETRIC
    if np.linalg.norm(A - A.T) > tol * np.linalg.norm(A):
        return NOT_SYMMETRIC
    if np.linalg.norm(B - C.T) > tol * max(np.linalg.norm(B), np.linalg.norm(C)):
        return NOT_SYMMETRIC
    lam = sym_eigen(0.5 * (A + A.T)).eigenvalues
    return SYMMETRIC_RELAXATION if lam[0] < 0 else SYMMETRIC
