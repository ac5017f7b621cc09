import math
from itertools import combinations, product

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from posred import positivity
from posred.errors import (
    NotSiso,
    OrderOutOfRange,
    SizeBudgetExceeded,
    TooShort,
    WrongDomain,
)
from posred.generators import heat_1d, lag_chain, oscillatory, random_stable, tridiag_relaxation
from posred.lti import StateSpace, TimeGrid, default_grid, markov_parameters
from posred.positivity import (
    SYMMETRIC,
    SYMMETRIC_RELAXATION,
    NOT_SYMMETRIC,
    PositivityReport,
    SignStructureReport,
    compound,
    detect_symmetry,
    external_positivity,
    gk_sign_structure,
    hankel_from_sequence,
    hankel_kernel_matrix,
    k_positivity_order,
    kernel_matrix,
    minors_nonneg_up_to,
    sign_changes_minus,
    sign_changes_plus,
)


def lag(pole=-1.0, domain="continuous"):
    return StateSpace([[pole]], [[1.0]], [[1.0]], [[0.0]], domain)


def brute_minors(M, k):
    """Oracle: every k-by-k minor via numpy on explicit index sets."""
    n, m = M.shape
    return {(I, J): np.linalg.det(M[np.ix_(I, J)])
            for I in combinations(range(n), k) for J in combinations(range(m), k)}


GRID6 = TimeGrid.geometric(0.1, 2.0, 6)
GRID8 = TimeGrid.geometric(0.05, 4.0, 8)


# -- variation counters --------------------------------------------------

@pytest.mark.parametrize("v, expected", [([1, -1, 1], 2), ([1, 0, 1], 0), ([0, 0], 0), ([], 0)])
def test_sign_changes_minus(v, expected):
    assert sign_changes_minus(v) == expected


@pytest.mark.parametrize("v, expected", [([1, 0, 1], 2), ([1, -1], 1), ([0], 0),
                                         ([0, 1], 1), ([1, 0, -1], 1), ([0, 0, 1, 0], 3)])
def test_sign_changes_plus(v, expected):
    assert sign_changes_plus(v) == expected


def test_sign_changes_ignore_tiny_entries():
    assert sign_changes_minus([1.0, -1e-14, 1.0]) == 0
    assert sign_changes_plus([1.0, -1e-14, 1.0]) == 2


def _plus_by_enumeration(v):
    zeros = [i for i, x in enumerate(v) if x == 0]
    if len(zeros) == len(v):
        return 0
    best = 0
    for signs in product((-1.0, 1.0), repeat=len(zeros)):
        w = list(v)
        for i, s in zip(zeros, signs):
            w[i] = s
        best = max(best, sign_changes_minus(w))
    return best


@settings(max_examples=200, deadline=None)
@given(st.lists(st.sampled_from([-2.0, -1.0, 0.0, 1.0, 3.0]), min_size=1, max_size=9))
def test_sign_changes_plus_matches_enumeration(v):
    assert sign_changes_plus(v) == _plus_by_enumeration(v)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=1, max_size=12))
def test_minus_never_exceeds_plus(v):
    assert sign_changes_minus(v) <= sign_changes_plus(v) <= max(len(v) - 1, 0)


# -- compound ------------------------------------------------------------

def test_compound_2x2():
    M = np.array([[2.0, 1.0], [3.0, 4.0]])
    np.testing.assert_allclose(compound(M, 2), [[5.0]], rtol=1e-14)


@pytest.mark.parametrize("n, k", [(3, 1), (4, 2), (5, 3), (4, 4)])
def test_compound_identity(n, k):
    np.testing.assert_allclose(compound(np.eye(n), k), np.eye(math.comb(n, k)), atol=1e-15)


def test_compound_matches_brute_force_ordering():
    rng = np.random.default_rng(30)
    M = rng.normal(size=(4, 5))
    C = compound(M, 2)
    ref = brute_minors(M, 2)
    rows, cols = list(combinations(range(4), 2)), list(combinations(range(5), 2))
    for a, I in enumerate(rows):
        for b, J in enumerate(cols):
            assert C[a, b] == pytest.approx(ref[I, J], rel=1e-12, abs=1e-14)


def test_compound_cauchy_binet_50_trials():
    rng = np.random.default_rng(31)
    for trial in range(50):
        k = 2 + trial % 2
        A, B = rng.normal(size=(6, 6)), rng.normal(size=(6, 6))
        lhs = compound(A @ B, k)
        rhs = compound(A, k) @ compound(B, k)
        assert np.linalg.norm(lhs - rhs) <= 1e-8 * np.linalg.norm(rhs)


def test_compound_errors():
    with pytest.raises(OrderOutOfRange):
        compound(np.eye(3), 0)
    with pytest.raises(OrderOutOfRange):
        compound(np.eye(3), 4)
    with pytest.raises(SizeBudgetExceeded):
        compound(np.ones((30, 30)), 4)


# -- minors ----------------------------------------------------------------

def test_minors_negative_entry_witness():
    M = np.array([[1.0, 2.0], [-3.0, 4.0]])
    chk = minors_nonneg_up_to(M, 1)
    assert not chk.ok
    assert chk.witness["rows"] == [1] and chk.witness["cols"] == [0]
    assert chk.witness["value"] == -3.0


def test_minors_rank_one_ones():
    chk = minors_nonneg_up_to(np.ones((2, 2)), 2)
    assert chk.ok and chk.minors_checked == 5


def test_minors_vandermonde_strictly_positive():
    # exp(-lam_i t_j) is strictly totally positive when the rates decrease
    # along the rows while the times increase along the columns
    lam, t = np.array([3.0, 2.0, 1.0]), np.array([0.1, 0.5, 1.0])
    E = np.exp(-np.outer(lam, t))
    assert minors_nonneg_up_to(E, 3).ok
    for k in (1, 2, 3):
        assert min(brute_minors(E, k).values()) > 1e-12


def test_minors_vandermonde_increasing_rates_sign_reverse():
    # with both index sequences increasing every 2x2 minor is negative
    lam, t = np.array([1.0, 2.0, 3.0]), np.array([0.1, 0.5, 1.0])
    E = np.exp(-np.outer(lam, t))
    assert max(brute_minors(E, 2).values()) < 0
    chk = minors_nonneg_up_to(E, 3)
    assert not chk.ok and chk.witness["order"] == 2


def test_minors_negative_2x2():
    chk = minors_nonneg_up_to([[1.0, 2.0], [2.0, 1.0]], 2)
    assert not chk.ok and chk.witness["order"] == 2
    assert chk.witness["value"] == pytest.approx(-3.0)


def test_minors_scale_aware_tolerance():
    # rank-1 matrix with large entries: the exact 2x2 minors are zero and
    # rounding noise must not be reported as a failure
    v = np.array([1e3, 2.345e3, 7.77e2])
    assert minors_nonneg_up_to(np.outer(v, v), 3).ok


def test_minors_witness_deterministic_under_threads(monkeypatch):
    M = np.array([[(-1) ** (i * j) * 1.0 for j in range(9)] for i in range(9)])
    monkeypatch.setattr(positivity, "_CHUNK_ELEMENTS", 500)
    monkeypatch.setenv("POSRED_THREADS", "1")
    serial = minors_nonneg_up_to(M, 3)
    monkeypatch.setenv("POSRED_THREADS", "4")
    threaded = minors_nonneg_up_to(M, 3)
    assert serial.witness == threaded.witness
    # among tied minima the lexicographically first index pair is reported
    ref = brute_minors(M, serial.witness["order"])
    low = min(ref.values())
    first = min(key for key, val in ref.items() if val <= low + 1e-12)
    assert (tuple(serial.witness["rows"]), tuple(serial.witness["cols"])) == first


def test_minors_budget_reports_certified_order():
    with pytest.raises(SizeBudgetExceeded) as info:
        minors_nonneg_up_to(np.ones((40, 40)), 4)
    assert info.value.certified_order == 2


# -- Hankel matrices -----------------------------------------------------

def test_hankel_from_sequence():
    np.testing.assert_array_equal(hankel_from_sequence([1, 2, 3], 2, 2), [[1, 2], [2, 3]])
    with pytest.raises(TooShort):
        hankel_from_sequence([1, 2], 2, 2)


def test_hankel_geometric_rank_one():
    q = 0.5
    H = hankel_from_sequence(q ** np.arange(7), 4, 4)
    assert np.max(np.abs(compound(H, 2))) <= 1e-15
    np.testing.assert_allclose(H, np.outer(q ** np.arange(4), q ** np.arange(4)))


def test_hankel_of_markov_parameters():
    h = markov_parameters(lag(0.5, "discrete"), 8)[1:, 0, 0]
    np.testing.assert_array_equal(hankel_from_sequence(h, 4, 4),
                                  hankel_from_sequence(0.5 ** np.arange(7), 4, 4))
    np.testing.assert_array_equal(kernel_matrix(lag(0.5, "discrete"), TimeGrid.integers(4)),
                                  hankel_from_sequence(0.5 ** np.arange(7), 4, 4))


def test_kernel_lag_rank_one():
    H = hankel_kernel_matrix(lag(), GRID6)
    t = GRID6.points
    np.testing.assert_allclose(H, np.exp(-(t[:, None] + t[None, :])), rtol=1e-13)
    assert np.max(np.abs(compound(H, 2))) <= 1e-12


def test_kernel_two_exponentials():
    sys = StateSpace(np.diag([-1.0, -2.0]), [[1.0], [1.0]], [[1.0, 1.0]], [[0.0]])
    H = hankel_kernel_matrix(sys, GRID6)
    t = GRID6.points
    s = t[:, None] + t[None, :]
    np.testing.assert_allclose(H, np.exp(-s) + np.exp(-2 * s), rtol=1e-12)
    for k in (1, 2):
        assert min(brute_minors(H, k).values()) >= -1e-14
    assert minors_nonneg_up_to(H, 2).ok


def test_kernel_sign_change():
    H = hankel_kernel_matrix(oscillatory(a=0.9, omega=5.0), GRID8)
    assert H.min() < 0
    assert not minors_nonneg_up_to(H, 1).ok


def test_kernel_errors():
    with pytest.raises(WrongDomain):
        hankel_kernel_matrix(lag(0.5, "discrete"), GRID6)
    with pytest.raises(NotSiso):
        hankel_kernel_matrix(random_stable(3, 2, 1, 0), GRID6)


# -- external positivity -------------------------------------------------

def test_external_positivity_lag():
    ok, worst = external_positivity(lag(), default_grid(lag()))
    assert ok and worst["value"] > 0


def test_external_positivity_two_lag_chain():
    sys = lag_chain([-1.0, -2.0])
    grid = TimeGrid(np.concatenate([[0.0], np.geomspace(1e-3, 8.0, 50)]))
    ok, worst = external_positivity(sys, grid)
    assert ok and worst["value"] >= -1e-15
    assert worst["time"] == 0.0


def test_external_positivity_oscillatory():
    ok, worst = external_positivity(oscillatory(a=0.9, omega=5.0), default_grid(lag()))
    assert not ok and worst["value"] < 0
    t = worst["time"]
    assert worst["value"] == pytest.approx(np.exp(-t) * (0.9 + np.sin(5 * t)), rel=1e-10)


def test_external_positivity_negative_feedthrough():
    sys = StateSpace([[-1.0]], [[1.0]], [[1.0]], [[-0.5]])
    assert not external_positivity(sys, GRID6)[0]


def test_external_positivity_mimo_entrywise():
    A = np.diag([-1.0, -2.0])
    pos = StateSpace(A, np.eye(2), np.eye(2), np.zeros((2, 2)))
    neg = StateSpace(A, np.eye(2), [[1.0, 0.0], [0.0, -1.0]], np.zeros((2, 2)))
    assert external_positivity(pos, GRID6)[0]
    ok, worst = external_positivity(neg, GRID6)
    assert not ok and (worst["output"], worst["input"]) == (1, 1)


def test_external_positivity_discrete():
    assert external_positivity(lag(0.5, "discrete"), TimeGrid.integers(10))[0]
    assert not external_positivity(lag(-0.5, "discrete"), TimeGrid.integers(10))[0]


def test_heat_external_positivity():
    sys = heat_1d(8)
    assert external_positivity(sys, default_grid(sys))[0]


# -- k-positivity --------------------------------------------------------

def test_k_order_lag_rank_one():
    rep = k_positivity_order(lag(), GRID6, k_max=4)
    assert rep.k_order == 4 and rep.externally_positive
    assert rep.hankel_size == (6, 6)
    assert rep.minors_checked == sum(math.comb(6, j) ** 2 for j in range(1, 5))


def test_k_order_oscillatory():
    rep = k_positivity_order(oscillatory(a=0.9, omega=5.0), GRID8, k_max=4)
    assert rep.k_order == 0 and not rep.externally_positive
    assert rep.witness["order"] == 1 and rep.witness["value"] < 0


def test_k_order_three_lag_chain():
    # g = e^-t/2 - e^-2t + e^-3t/2 has residues of both signs, so by
    # Cauchy-Binet some 2x2 kernel minors are negative: the certified
    # order is 1, found by exhaustive enumeration below.
    sys = lag_chain([-1.0, -2.0, -3.0])
    rep = k_positivity_order(sys, GRID8, k_max=3)
    H = hankel_kernel_matrix(sys, GRID8)
    assert min(brute_minors(H, 1).values()) > 0
    worst2 = min(brute_minors(H, 2).values())
    assert worst2 < -1e-10 * max(1.0, np.abs(H).max()) ** 2
    assert rep.k_order == 1 and rep.externally_positive
    assert rep.witness["order"] == 2
    assert rep.witness["value"] == pytest.approx(worst2, rel=1e-9)


def test_k_order_relaxation_systems_pass_all_orders():
    for seed in range(4):
        sys = tridiag_relaxation(5, seed)
        assert detect_symmetry(sys) == SYMMETRIC_RELAXATION
        H = hankel_kernel_matrix(sys, GRID8)
        assert minors_nonneg_up_to(H, 4).ok
        assert k_positivity_order(sys, GRID8, k_max=4).k_order == 4


def test_k_order_consistent_with_external_positivity():
    systems = [lag(), lag_chain([-1.0, -2.0]), heat_1d(4), tridiag_relaxation(3, 1)]
    systems += [oscillatory(seed) for seed in range(5)]
    systems += [random_stable(3, 1, 1, seed) for seed in range(8)]
    for sys in systems:
        sys = StateSpace(sys.A, sys.B, sys.C, np.zeros((1, 1)))
        grid = GRID8
        rep = k_positivity_order(sys, grid, k_max=2)
        samples = hankel_kernel_matrix(sys, grid)
        assert (rep.k_order >= 1) == bool(np.all(samples >= -positivity.MINOR_TOL * max(1.0, np.abs(samples).max())))
        assert (rep.k_order >= 1) == rep.externally_positive


def test_k_order_impulse_grid_forces_zero():
    # kernel samples on a coarse grid miss the dip; the impulse grid does not
    sys = oscillatory(a=0.9, omega=5.0)
    coarse = TimeGrid([0.01, 0.02])
    assert k_positivity_order(sys, coarse, k_max=2).k_order >= 1
    rep = k_positivity_order(sys, coarse, k_max=2, impulse_grid=default_grid(sys))
    assert rep.k_order == 0 and not rep.externally_positive
    assert rep.kernel_order >= 1
    assert rep.impulse_check["worst"]["value"] < 0


def test_k_order_negative_feedthrough():
    rep = k_positivity_order(StateSpace([[-1.0]], [[1.0]], [[1.0]], [[-1.0]]), GRID6)
    assert rep.k_order == 0 and not rep.d_nonnegative and rep.kernel_order == 4


def test_k_order_discrete():
    rep = k_positivity_order(lag(0.5, "discrete"), TimeGrid.integers(5), k_max=3)
    assert rep.k_order == 3 and rep.hankel_size == (5, 5)


def test_k_order_bounded_by_matrix_size():
    rep = k_positivity_order(lag(), TimeGrid([0.1, 0.2]), k_max=4)
    assert rep.k_order == 2


def test_k_order_budget_partial():
    with pytest.raises(SizeBudgetExceeded) as info:
        k_positivity_order(lag(), TimeGrid.geometric(0.01, 2.0, 40), k_max=4)
    exc = info.value
    assert exc.certified_order == 2
    assert isinstance(exc.partial, PositivityReport) and not exc.partial.complete


def test_k_order_not_siso():
    with pytest.raises(NotSiso):
        k_positivity_order(random_stable(3, 2, 2, 0), GRID6)


def test_report_round_trip():
    rep = k_positivity_order(lag_chain([-1.0, -2.0, -3.0]), GRID8, k_max=3,
                             impulse_grid=GRID6)
    assert PositivityReport.from_dict(rep.to_dict()) == rep


# -- variation diminishing ------------------------------------------------

def _controlled_vector(rng, n, changes):
    cuts = np.sort(rng.choice(np.arange(1, n), size=changes, replace=False)) if changes else []
    signs = np.ones(n)
    sign = 1.0 if rng.random() < 0.5 else -1.0
    start = 0
    for cut in list(cuts) + [n]:
        signs[start:cut] = sign
        sign, start = -sign, cut
    return signs * rng.uniform(0.5, 1.5, n)


def test_variation_diminishing():
    rng = np.random.default_rng(40)
    lam = np.array([4.0, 2.9, 1.7, 1.0, 0.5])
    t = np.linspace(0.1, 1.5, 6)
    samples = [np.exp(-np.outer(t, lam)), hankel_kernel_matrix(tridiag_relaxation(4, 3), GRID6)]
    for H in samples:
        k = 4
        assert minors_nonneg_up_to(H, k).ok
        for _ in range(300):
            x = _controlled_vector(rng, H.shape[1], int(rng.integers(0, k)))
            assert sign_changes_minus(H @ x, 1e-9) <= sign_changes_minus(x)


# -- sign structure -------------------------------------------------------

def test_gk_rank_one():
    v = np.array([1.0, 2.0, 0.5])
    rep = gk_sign_structure(np.outer(v, v), 3)
    assert len(rep.records) == 1
    rec = rep.records[0]
    assert rec.changes_u == 0 and rec.changes_v == 0 and rec.match


def test_gk_three_lag_chain_kernel():
    H = hankel_kernel_matrix(lag_chain([-1.0, -2.0, -3.0]), GRID8)
    rep = gk_sign_structure(H, 3)
    assert [r.match for r in rep.records] == [True, True, True]
    assert [r.changes_u for r in rep.records] == [0, 1, 2]


def test_gk_vandermonde_strictly_tp():
    lam = np.array([3.5, 2.0, 1.0, 0.5])
    t = np.linspace(0.2, 2.0, 6)
    E = np.exp(-np.outer(t, lam))
    assert minors_nonneg_up_to(E, 4).ok
    assert gk_sign_structure(E, 4).all_match


def test_gk_tie_unreliable():
    rep = gk_sign_structure(np.eye(2), 2)
    assert all(not r.reliable and r.match is None for r in rep.records)
    assert not rep.all_match


def test_gk_round_trip():
    rep = gk_sign_structure(hankel_kernel_matrix(lag_chain([-1.0, -2.0]), GRID6), 2)
    again = SignStructureReport.from_dict(rep.to_dict())
    assert again.to_dict() == rep.to_dict()


# -- symmetry -------------------------------------------------------------

def test_detect_symmetry():
    b = np.array([[1.0], [1.0]])
    assert detect_symmetry(StateSpace(np.diag([-1.0, -2.0]), b, b.T, [[0.0]])) == SYMMETRIC_RELAXATION
    assert detect_symmetry(StateSpace([[-1.0, 1.0], [0.0, -1.0]], b, b.T, [[0.0]])) == NOT_SYMMETRIC
    assert detect_symmetry(StateSpace(np.diag([-1.0, -2.0]), b, [[1.0, 2.0]], [[0.0]])) == NOT_SYMMETRIC
    # symmetric but indefinite (valid as a discrete-time system)
    A = np.array([[0.5, 0.1], [0.1, -0.5]])
    assert detect_symmetry(StateSpace(A, b, b.T, [[0.0]], "discrete")) == SYMMETRIC


def test_detect_symmetry_generators():
    for seed in range(5):
        sys = tridiag_relaxation(6, seed)
        assert detect_symmetry(sys) == SYMMETRIC_RELAXATION
        assert np.all(np.linalg.eigvalsh(sys.A) < 0)
