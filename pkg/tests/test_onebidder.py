import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from autobidlab import landscape as ls
from autobidlab import onebidder as ob
from autobidlab import valuation as vl
from autobidlab.errors import Irregular, TargetBelowReserve, ValidationError, ZeroVolume


def grid_argmax(f, lo, hi, n=200001):
    xs = np.linspace(lo, hi, n)
    ys = np.array([f(float(x)) for x in xs])
    return float(xs[int(np.argmax(ys))])


def discrete_tcpa_bid(L, T, r, top, cells=200):
    """Highest price level whose cheaper queries average at most T."""
    edges = np.linspace(L.p_low, top, cells + 1)
    mass = np.diff([L.H(float(e)) for e in edges])
    price = np.maximum(edges[1:], r)
    spend = np.cumsum(price * mass)
    vol = np.cumsum(mass)
    ok = (edges[1:] >= r) & (spend <= T * vol + 1e-15)
    return float(edges[1:][ok][-1]) if ok.any() else r, (top - L.p_low) / cells


# -- marginal tCPA bid ---------------------------------------------------


def test_bid_equals_reserve_when_target_does():
    assert ob.tcpa_marginal_bid(ls.power(2), 0.4, 0.4) == pytest.approx(0.4)


def test_power1_bid_doubles_target():
    assert ob.tcpa_marginal_bid(ls.power(1), 0.3) == pytest.approx(0.6, abs=1e-12)


@pytest.mark.parametrize("n", [1, 2, 3, 5])
def test_power_bid_closed_form(n):
    T = 0.3 * n / (n + 1)
    assert ob.tcpa_marginal_bid(ls.power(n), T) == pytest.approx(T * (n + 1) / n, abs=1e-12)


def test_slack_target_caps_at_top():
    sol = ob.solve_tcpa_bid(ls.power(1), 0.6)
    assert sol.slack and sol.bid == 1.0


def test_target_below_reserve():
    with pytest.raises(TargetBelowReserve):
        ob.tcpa_marginal_bid(ls.power(1), 0.2, 0.3)
    with pytest.raises(ValidationError):
        ob.tcpa_marginal_bid(ls.power(1), -0.1)


def test_bid_matches_brute_force_grid():
    L = ls.power(1)
    b, cell = discrete_tcpa_bid(L, 0.3, 0.0, 1.0)
    assert abs(ob.tcpa_marginal_bid(L, 0.3) - b) <= cell * (1 + 1e-9)


families = st.sampled_from(
    [ls.power(1), ls.power(2), ls.power(4), ls.piecewise_eps(0.05), ls.empirical([0.1, 0.3, 0.35, 0.6, 1.0])]
)


@settings(max_examples=80, deadline=None)
@given(families, st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_bid_properties(L, t, s):
    lo, hi = L.p_low, L.p_high
    r = lo + s * 0.5 * (hi - lo)
    T = r + t * 0.5 * (hi - r)
    sol = ob.solve_tcpa_bid(L, T, r)
    assert sol.bid >= T
    if not sol.slack:
        assert abs(sol.residual) <= 1e-8
    assert ob.tcpa_marginal_bid(L, min(T * 1.05 + 1e-3, hi), r) >= sol.bid - 1e-12
    assert ob.tcpa_marginal_bid(L, T, r * 0.5) >= sol.bid - 1e-12


@settings(max_examples=40, deadline=None)
@given(st.floats(1.05, 40.0))
def test_pareto_bid_residual(T):
    sol = ob.solve_tcpa_bid(ls.pareto_hat(), T, 1.0)
    L = ls.pareto_hat()
    assert abs(L.H(sol.bid) * (sol.bid - T) - L.cum_H(1.0, sol.bid)) <= 1e-8 * max(1.0, sol.bid)


# -- mCPA shading --------------------------------------------------------


def test_fpa_examples():
    assert ob.fpa_bid(ls.power(1), 1.0) == pytest.approx(0.5, abs=1e-10)
    assert ob.fpa_bid(ls.pareto_hat(), 4.0) == pytest.approx(2.0, abs=1e-10)
    assert ob.fpa_bid(ls.power(1), 0.0) == 0.0


@pytest.mark.parametrize("n", [2, 3, 5])
def test_fpa_power_maximizer_is_n_over_n_plus_1(n):
    # the maximizer of (v-b) b^n is n v/(n+1), checked on a dense grid
    b = ob.fpa_bid(ls.power(n), 1.0)
    assert b == pytest.approx(n / (n + 1), abs=1e-9)
    assert b == pytest.approx(grid_argmax(lambda x: (1 - x) * x**n, 0, 1), abs=1e-5)


@settings(max_examples=30, deadline=None)
@given(st.sampled_from([ls.power(2), ls.piecewise_eps(0.1), ls.empirical([0.2, 0.25, 0.7, 0.9])]), st.floats(0.3, 1.5))
def test_fpa_not_beaten_by_grid(L, v):
    obj = lambda b: (v - b) * L.H(b)
    top = min(v, L.p_high)
    best = max(obj(float(x)) for x in np.linspace(L.p_low, top, 2001))
    assert obj(ob.fpa_bid(L, v)) >= best - 1e-10


def test_tcpa_target_examples():
    assert ob.tcpa_target(ls.power(1), 1.0) == pytest.approx(0.5)
    assert ob.tcpa_target(ls.power(1), 0.8) == pytest.approx(0.4)
    assert ob.tcpa_target(ls.power(3), 1.0) == pytest.approx(0.75)
    assert ob.tcpa_target(ls.pareto_hat(), math.e) == pytest.approx(1 / (1 - 1 / math.e), abs=1e-10)
    with pytest.raises(ZeroVolume):
        ob.tcpa_target(ls.pareto_hat(), 0.5)


def test_target_reproduces_value_as_marginal_bid():
    L = ls.power(2)
    for v in (0.3, 0.6, 0.9):
        assert ob.tcpa_marginal_bid(L, ob.tcpa_target(L, v)) == pytest.approx(v, abs=1e-9)


def test_auctioneer_reserve_rules():
    assert [ob.mcpa_best_reserve(b) for b in (0.3, 0.0, 1.7)] == [0.3, 0.0, 1.7]
    assert [ob.tcpa_best_reserve(T) for T in (0.3, 0.0, 5.0)] == [0.0, 0.0, 0.0]
    with pytest.raises(ValidationError):
        ob.mcpa_best_reserve(-1)


def test_tcpa_reserve_zero_is_revenue_optimal_by_grid():
    # per-type revenue T*H(b(T;r)) is largest at r = 0 once T is fixed
    L, T = ls.power(2), 0.4
    revs = [T * L.H(ob.tcpa_marginal_bid(L, T, float(r))) for r in np.linspace(0, T, 41)]
    assert int(np.argmax(revs)) == 0


# -- equilibrium reports -------------------------------------------------


def test_commitment_uniform_power1():
    rep = ob.commitment_outcome(vl.uniform(), ls.power(1))
    assert rep.reserve_announced == pytest.approx(0.5)
    assert rep.expected["welfare"] == pytest.approx(7 / 24, abs=1e-9)
    assert rep.expected["utility"] == pytest.approx(1 / 12, abs=1e-9)
    assert rep.expected["revenue"] == pytest.approx(5 / 24, abs=1e-9)
    assert rep.accounting_gap() < 1e-12


def test_commitment_revenue_equals_virtual_surplus():
    D, L = vl.uniform(), ls.power(2)
    ref = vl.expectation(D, lambda v: (2 * v - 1) * L.H(v) if v >= 0.5 else 0.0, breakpoints=(0.5,))
    assert ob.commitment_outcome(D, L).expected["revenue"] == pytest.approx(ref, abs=1e-9)


@pytest.mark.parametrize("n", [1, 2, 3, 5])
def test_nocommit_revenues_uniform_power(n):
    D, L = vl.uniform(), ls.power(n)
    assert ob.tcpa_nocommit_outcome(D, L).expected["revenue"] == pytest.approx(n / ((n + 1) * (n + 2)), abs=1e-9)
    mcpa = ob.mcpa_nocommit_outcome(D, L).expected["revenue"]
    assert mcpa == pytest.approx((n / (n + 1)) ** (n + 1) / (n + 2), abs=1e-9)


def test_mcpa_revenue_against_riemann_sum():
    L = ls.power(2)
    vs = (np.arange(200) + 0.5) / 200
    ref = np.mean([(b := grid_argmax(lambda x: (v - x) * x * x, 0, v, 2001)) * b * b for v in vs])
    got = ob.mcpa_nocommit_outcome(vl.uniform(), L).expected["revenue"]
    assert got == pytest.approx(ref, rel=2e-3)


def test_tcpa_nocommit_is_efficient():
    rep = ob.tcpa_nocommit_outcome(vl.uniform(), ls.power(2), grid=17)
    assert all(r.marginal_bid == r.v for r in rep.rows)
    assert rep.reserve_final == 0.0


@pytest.mark.parametrize("v", [2.0, 4.0, 9.0, 16.0])
def test_pareto_point_mass_revenues(v):
    D, L = vl.point_mass(v), ls.pareto_hat()
    assert ob.mcpa_nocommit_outcome(D, L).expected["revenue"] == pytest.approx(math.sqrt(v) - 1, abs=1e-7)
    assert ob.tcpa_nocommit_outcome(D, L).expected["revenue"] == pytest.approx(math.log(v), abs=1e-7)


def test_commitment_needs_density():
    with pytest.raises(Irregular):
        ob.commitment_outcome(vl.point_mass(1.0), ls.power(1))


def test_report_dict_has_csv_fields():
    d = ob.tcpa_nocommit_outcome(vl.uniform(), ls.power(1), grid=5).to_dict()
    assert len(d["per_type"]) == 5
    assert set(d["per_type"][0]) == set(ob.CSV_FIELDS)


# -- structural comparisons -----------------------------------------------


def test_utility_comparison_examples():
    rows = ob.theorem1_check(vl.point_mass(1.0), ls.power(1))
    assert (rows[0].tcpa, rows[0].mcpa) == (pytest.approx(0.5), pytest.approx(0.25))
    rows = ob.theorem1_check(vl.point_mass(1.0), ls.power(3))
    assert rows[0].tcpa == pytest.approx(0.25)
    rows = ob.theorem1_check(vl.point_mass(4.0), ls.pareto_hat())
    assert rows[0].tcpa == pytest.approx(3 - math.log(4), abs=1e-9)
    assert rows[0].mcpa == pytest.approx(1.0, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.floats(0.01, 1.0))
def test_utility_comparison_power_strict(n, v):
    rows = ob.theorem1_check(vl.point_mass(v), ls.power(n))
    assert rows[0].margin > 0


def test_revenue_comparison_examples():
    res = ob.revenue_comparison(vl.point_mass(1.0), ls.power(1))
    assert res.verdict == "theorem-consistent"
    assert (res.rows[0].tcpa, res.rows[0].mcpa) == (pytest.approx(0.5), pytest.approx(0.25))
    t, m = ob.per_type_revenues(ls.pareto_hat(), 16.0)
    assert (t, m) == (pytest.approx(math.log(16), abs=1e-8), pytest.approx(3.0, abs=1e-8))
    t, m = ob.per_type_revenues(ls.pareto_hat(), 4.0)
    assert t > m
    res = ob.revenue_comparison(vl.uniform(1.0, 20.0), ls.pareto_hat())
    assert not res.assumption2 and res.mixed_signs


def test_revenue_crossing_matches_bisection():
    f = lambda v: math.sqrt(v) - 1 - math.log(v)
    lo, hi = 12.0, 13.0
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if f(mid) < 0 else (lo, mid)
    assert ob.revenue_crossing(ls.pareto_hat(), 12.0, 13.0) == pytest.approx(lo, abs=1e-8)


def test_value_of_commitment_uniform_quarter():
    cv = ob.value_of_commitment(vl.uniform(0.25, 1.0), ls.steep_step(0.25, 1e-3))
    assert cv.psi == pytest.approx(0.75, abs=1e-9)
    assert cv.pi_myerson == pytest.approx(1 / 3)
    assert cv.pi_floor_spa == pytest.approx(0.25)
    assert cv.bound_holds


def test_value_of_commitment_psi_one_on_step_landscape():
    # the eps*p background below the kink costs O(eps) of the ratio
    gaps = []
    for eps in (1e-2, 1e-3, 1e-4):
        cv = ob.value_of_commitment(vl.uniform(0.5, 1.0), ls.steep_step(0.5, eps))
        assert cv.psi == pytest.approx(1.0)
        gaps.append(abs(cv.ratio - 1.0))
        assert gaps[-1] <= eps
    assert gaps[0] > gaps[1] > gaps[2]


def test_value_of_commitment_bound_can_fail_with_mass_below_support():
    # Power(1) puts volume below the lowest type 0.5; closed forms 7/24 and 5/12
    cv = ob.value_of_commitment(vl.uniform(0.5, 1.0), ls.power(1))
    assert cv.pi_nc == pytest.approx(7 / 24, abs=1e-9)
    assert cv.pi_c == pytest.approx(5 / 12, abs=1e-9)
    assert cv.ratio == pytest.approx(0.7) and not cv.bound_holds


def test_showing_commitment_zero_revenue():
    sc = ob.value_of_showing_commitment(vl.uniform(), ls.piecewise_eps(0.01))
    assert sc.pi_wb == 0.0 and sc.ratio == math.inf
    assert ob.value_of_showing_commitment(vl.uniform(), ls.power(1)).pi_wb == 0.0
