import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from autobidlab import competition as cp
from autobidlab import landscape as ls
from autobidlab.errors import DivergentTail, InfiniteTotalVolume, NoRootInBracket, ValidationError


def setting(n=2, beta=0.5):
    return cp.CompetitiveSetting(ls.power(n), beta)


def grid_root(f, lo, hi, n=10_001):
    """Midpoint of the first sign change on a uniform grid."""
    xs = np.linspace(lo, hi, n)
    ys = np.array([f(float(x)) for x in xs])
    k = int(np.argmax(np.sign(ys[1:]) != np.sign(ys[:-1])))
    return 0.5 * (xs[k] + xs[k + 1]), (hi - lo) / (n - 1)


@pytest.mark.parametrize("n, root", [(1, 0.5), (2, 1 / math.sqrt(3)), (3, 0.25 ** (1 / 3))])
def test_reserve_rh(n, root):
    assert cp.reserve_rh(setting(n)) == pytest.approx(root, abs=1e-10)


def test_setting_validation():
    with pytest.raises(ValidationError):
        cp.CompetitiveSetting(ls.power(1), 1.0)
    with pytest.raises(InfiniteTotalVolume):
        cp.CompetitiveSetting(ls.steep_step(0.25, 0.01), 0.5)
    with pytest.raises(DivergentTail):
        cp.CompetitiveSetting(ls.pareto_hat(), 0.5)


def test_revenue_pieces_power1_closed_form():
    # H = p on [0,1], beta = 1/2: exclusion r(2r - r) + (1 - 4r^2)/4 for r <= 1/2
    S = setting(1)
    for r in (0.1, 0.3, 0.45):
        assert S.exclusion_revenue(r) == pytest.approx(r * r + (1 - 4 * r * r) / 4, abs=1e-12)
        assert S.inclusion_revenue(r) == pytest.approx(2 * r * r + (1 - 4 * r * r) / 4, abs=1e-12)


@pytest.mark.parametrize("n, beta", [(2, 0.5), (3, 0.5), (1, 0.3), (2, 0.3), (4, 0.1)])
def test_vh_against_grid_oracle(n, beta):
    S = setting(n, beta)
    th = cp.vh_threshold(S)
    rhs = S.exclusion_revenue(th.r_h)
    ref, cell = grid_root(lambda v: S.inclusion_revenue(v) - rhs, 0.0, 1.0)
    assert abs(th.v_h - ref) <= cell
    assert abs(th.residual) <= 1e-7
    assert th.sign_changes == 1


def test_vh_power2_value():
    th = cp.vh_threshold(setting(2))
    assert th.v_h == pytest.approx(0.33818, abs=1e-5)
    assert th.below_reserve


def test_vh_power1_is_tangent_root_at_zero():
    th = cp.vh_threshold(setting(1))
    assert th.v_h == 0.0 and th.sign_changes == 1
    assert abs(th.residual) <= 1e-7


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 5), st.floats(0.05, 0.95))
def test_vh_root_or_no_crossing(n, beta):
    S = setting(n, beta)
    rhs = S.exclusion_revenue(cp.reserve_rh(S))
    gaps = np.array([S.inclusion_revenue(float(v)) - rhs for v in np.linspace(0.0, 1.0, 2001)])
    try:
        th = cp.vh_threshold(S)
    except NoRootInBracket:
        assert gaps.min() > 0  # serving the bidder always wins
        return
    assert abs(th.residual) <= 1e-7 * max(1.0, rhs)
    assert th.sign_changes == 1 and 0.0 <= th.v_h <= 1.0


def test_vh_no_root_when_inclusion_dominates():
    with pytest.raises(NoRootInBracket):
        cp.vh_threshold(setting(1, 0.9))


@pytest.mark.parametrize("n", [1, 2, 3])
def test_t_threshold_closed_form(n):
    S = setting(n)
    v_h = cp.vh_threshold(S).v_h
    T_h = cp.t_threshold(S)
    assert T_h == pytest.approx(v_h * n / (n + 1), abs=1e-10)


def test_piecewise_bid_branches():
    S = setting(2)
    bidder = cp.CompetitiveBidder.build(S)
    v_h = bidder.v_h
    assert bidder.b_inverse == pytest.approx(1.5 * v_h, abs=1e-9)  # fpa bid is 2v/3
    assert bidder.bid(0.5 * v_h) == 0.0
    assert bidder.bid(v_h) == 0.0
    assert bidder.bid(1.2 * v_h) == v_h
    assert bidder.bid(bidder.b_inverse + 1e-9) == pytest.approx(v_h, abs=1e-8)
    assert bidder.bid(0.9) == pytest.approx(0.6, abs=1e-9)
    assert cp.mcpa_bid_competitive(S, 0.9) == pytest.approx(0.6, abs=1e-9)
    with pytest.raises(ValidationError):
        cp.mcpa_bid_competitive(S, -1.0)


def test_fpa_bid_monotone():
    assert cp.fpa_bid_monotone(ls.power(3), 0.0, 1.0)


def test_below_threshold_is_exclusion():
    S = setting(2)
    res = cp.tcpa_reserve_competitive(S, 0.1)
    assert res.excluded and res.n_star == 0.0
    assert res.r_star == pytest.approx(1 / math.sqrt(3))
    assert res.objective == pytest.approx(S.exclusion_revenue(res.r_star))


@pytest.mark.parametrize("n, T", [(1, 0.2), (1, 0.45), (2, 0.3), (3, 0.4)])
def test_reserve_problem_against_grid_oracle(n, T):
    S = setting(n)
    res = cp.tcpa_reserve_competitive(S, T)
    assert not res.excluded and res.n_star > T
    ns = np.linspace(T, res.upper, 10_001)
    J = np.array([cp.auctioneer_objective(S, T, float(x)) for x in ns])
    assert abs(res.n_star - ns[int(np.argmax(J))]) <= 1e-4
    assert res.objective >= J.max() - 1e-12
    if 0 < res.r_star < T:
        from autobidlab.onebidder import tcpa_marginal_bid

        assert tcpa_marginal_bid(S.landscape, T, res.r_star) == pytest.approx(res.n_star, abs=1e-8)


def test_small_beta_limit_smoke():
    S = cp.CompetitiveSetting(ls.power(1), 0.999)
    assert abs(S.exclusion_revenue(0.5) - 0.5 * (S.landscape.H(0.5 / 0.999) - 0.5) - 0.999 * S.tail(0.5 / 0.999)) < 1e-15
    with pytest.raises(NoRootInBracket):
        cp.vh_threshold(S)
