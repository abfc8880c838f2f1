"""One bidder facing an exogenous price landscape.

Covers the tCPA marginal-bid fixed point, the first-price-like mCPA bid,
the no-commitment target, and the commitment / no-commitment outcomes
together with the structural comparisons between them.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from . import numerics
from .errors import (
    Irregular,
    TargetBelowReserve,
    ValidationError,
    ViolationFound,
    ZeroVolume,
)
from .landscape import PriceLandscape, check_assumption2
from .numerics import Tolerance
from .valuation import (
    ValuationDist,
    check_regularity,
    expectation,
    myerson_reserve,
    virtual_value,
)

COMMITMENT = "Commitment"
NOCOMMIT_MCPA = "NoCommit-mCPA"
NOCOMMIT_TCPA = "NoCommit-tCPA"
WRONG_BELIEF = "WrongBelief"

DEFAULT_GRID = 129
_ROOT_TOL = Tolerance(abs_tol=1e-300, rel_tol=1e-13, max_iter=400)
EXPECT_TOL = Tolerance(abs_tol=1e-12, rel_tol=1e-11, max_iter=400)


@dataclass(frozen=True)
class MarginalBid:
    bid: float
    slack: bool
    residual: float


def _residual(L: PriceLandscape, T: float, r: float, b: float) -> float:
    return L.H(b) * (b - T) - L.cum_H(max(r, L.p_low), max(b, r, L.p_low))


def solve_tcpa_bid(L: PriceLandscape, T: float, r: float = 0.0) -> MarginalBid:
    """Uniform marginal bid of a tCPA bidder with target ``T`` under reserve
    ``r``: the root ``b >= T`` of ``H(b)(b - T) = int_r^b H``.

    When the root lies beyond the top of the support the constraint is
    slack: the bid is capped at ``p_high`` and ``slack`` is set.
    """
    if T < 0 or r < 0:
        raise ValidationError("target and reserve must be nonnegative")
    if T < r:
        raise TargetBelowReserve(f"target {T} below reserve {r}")
    g = lambda b: _residual(L, T, r, b)
    lo = T
    if g(lo) >= 0.0:
        return MarginalBid(lo, False, 0.0)
    seed = max(2.0 * T, T + 1e-9, 2.0 * L.p_low, 1e-6)
    hi = numerics.expand_bracket(g, lo, seed, cap=L.p_high)
    if g(hi) < 0.0:
        return MarginalBid(hi, True, g(hi))
    b = numerics.find_root(g, (lo, hi), _ROOT_TOL)
    return MarginalBid(b, False, g(b))


def tcpa_marginal_bid(L: PriceLandscape, T: float, r: float = 0.0) -> float:
    return solve_tcpa_bid(L, T, r).bid


def tcpa_spend(L: PriceLandscape, r: float, b: float) -> float:
    """Actual spend when every query priced at most ``b`` is bought under
    reserve ``r``: ``r H(r) + int_r^b z dH``."""
    if b < r:
        return 0.0
    r_eff = max(r, L.p_low)
    return b * L.H(b) - L.cum_H(r_eff, max(b, r_eff))


def fpa_bid(L: PriceLandscape, v: float, grid_size: int = 256) -> float:
    """Maximizer of ``(v - b) H(b)`` over ``[p_low, min(v, p_high)]``.

    The grid/golden-section result is polished on the first-order condition
    ``h(b)(v - b) = H(b)`` when that condition brackets a root nearby.
    """
    if v <= L.p_low:
        return L.p_low
    top = min(v, L.p_high)
    obj = lambda b: (v - b) * L.H(b)
    b0, y0 = numerics.maximize_1d(obj, (L.p_low, top), grid_size=grid_size)
    if y0 <= 0.0:
        return L.p_low
    foc = lambda b: L.h(b) * (v - b) - L.H(b)
    width = (top - L.p_low) / (grid_size - 1)
    a, c = max(L.p_low, b0 - width), min(top, b0 + width)
    try:
        if foc(a) > 0 > foc(c):
            b1 = numerics.find_root(foc, (a, c), _ROOT_TOL)
            if obj(b1) >= y0 - 1e-15 * abs(y0):
                return b1
    except ArithmeticError:
        pass
    return b0


def tcpa_target(L: PriceLandscape, v: float) -> float:
    """No-commitment optimal target: ``v - int_{p_low}^v H / H(v)``."""
    Hv = L.H(v)
    if Hv <= 0.0:
        raise ZeroVolume(f"H({v}) = 0: no queries below the valuation")
    return v - L.cum_H(L.p_low, v) / Hv


def mcpa_best_reserve(b: float) -> float:
    if b < 0:
        raise ValidationError("bid must be nonnegative")
    return b


def tcpa_best_reserve(T: float) -> float:
    if T < 0:
        raise ValidationError("target must be nonnegative")
    return 0.0


# --------------------------------------------------------------------------
# reports


@dataclass
class TypeRow:
    v: float
    bid: float
    marginal_bid: float
    volume: float
    spend: float
    utility: float
    revenue: float
    welfare: float

    @classmethod
    def from_allocation(cls, v, bid, marginal_bid, volume, spend):
        return cls(v, bid, marginal_bid, volume, spend, v * volume - spend, spend, v * volume)


CSV_FIELDS = ("v", "bid", "marginal_bid", "volume", "spend", "utility", "revenue", "welfare")


@dataclass
class EquilibriumReport:
    regime: str
    rows: list
    expected: dict
    reserve_announced: float
    reserve_final: object
    extras: dict = field(default_factory=dict)

    def accounting_gap(self) -> float:
        return max(
            (abs(r.spend + r.utility - r.v * r.volume) for r in self.rows), default=0.0
        )

    def to_dict(self) -> dict:
        return {
            "regime": self.regime,
            "reserve_announced": self.reserve_announced,
            "reserve_final": self.reserve_final,
            "expected": dict(self.expected),
            "per_type": [asdict(r) for r in self.rows],
            "extras": dict(self.extras),
        }


def _build_report(
    regime: str,
    D: ValuationDist,
    L: PriceLandscape,
    row_fn: Callable[[float], TypeRow],
    grid: int,
    reserve_announced: float,
    reserve_final,
    breakpoints=(),
    extras=None,
) -> EquilibriumReport:
    cache: dict = {}

    def row(v: float) -> TypeRow:
        r = cache.get(v)
        if r is None:
            r = cache[v] = row_fn(v)
        return r

    bps = tuple(breakpoints) + (L.p_low,) + tuple(L.kinks)
    if L.support.bounded:
        bps += (L.p_high,)
    expected = {
        name: expectation(D, lambda v, n=name: getattr(row(v), n), EXPECT_TOL, bps)
        for name in ("revenue", "utility", "welfare", "volume")
    }
    rows = [row(float(v)) for v in D.type_grid(grid)]
    return EquilibriumReport(
        regime, rows, expected, reserve_announced, reserve_final, extras or {}
    )


def _require_regular(D: ValuationDist) -> float:
    if D.is_point:
        raise Irregular("commitment benchmark needs a valuation density")
    if not check_regularity(D):
        raise Irregular(f"{D.family} is not regular")
    return myerson_reserve(D)


def commitment_row(L: PriceLandscape, v: float, r: float) -> TypeRow:
    if v < r or L.H(v) <= 0.0:
        return TypeRow.from_allocation(v, v, v, 0.0, 0.0)
    vol = L.H(v)
    return TypeRow.from_allocation(v, v, v, vol, tcpa_spend(L, r, v))


def commitment_outcome(D: ValuationDist, L: PriceLandscape, grid: int = DEFAULT_GRID) -> EquilibriumReport:
    """Myerson-reserve outcome, identical under mCPA and tCPA when the
    auctioneer commits."""
    r = _require_regular(D)
    return _build_report(
        COMMITMENT, D, L, lambda v: commitment_row(L, v, r), grid, r, r, breakpoints=(r,)
    )


def mcpa_row(L: PriceLandscape, v: float) -> TypeRow:
    b = fpa_bid(L, v)
    vol = L.H(b)
    return TypeRow.from_allocation(v, b, b, vol, b * vol)


def mcpa_nocommit_outcome(D: ValuationDist, L: PriceLandscape, grid: int = DEFAULT_GRID) -> EquilibriumReport:
    """Auctioneer lifts the reserve to the bid; the bidder shades as in a
    first-price auction."""
    return _build_report(
        NOCOMMIT_MCPA, D, L, lambda v: mcpa_row(L, v), grid, 0.0, "per-type"
    )


def tcpa_row(L: PriceLandscape, v: float) -> TypeRow:
    vol = L.H(v)
    if vol <= 0.0:
        return TypeRow.from_allocation(v, v, v, 0.0, 0.0)
    T = tcpa_target(L, v)
    return TypeRow.from_allocation(v, T, v, vol, T * vol)


def tcpa_nocommit_outcome(D: ValuationDist, L: PriceLandscape, grid: int = DEFAULT_GRID) -> EquilibriumReport:
    """Auctioneer drops the reserve to zero; the bidder's marginal bid
    equals its value, so the allocation is efficient."""
    return _build_report(
        NOCOMMIT_TCPA, D, L, lambda v: tcpa_row(L, v), grid, 0.0, 0.0
    )


# --------------------------------------------------------------------------
# structural comparisons


def _type_points(D: ValuationDist, L: PriceLandscape, type_grid) -> np.ndarray:
    if type_grid is None:
        type_grid = D.type_grid(65)
    elif isinstance(type_grid, int):
        type_grid = D.type_grid(type_grid)
    pts = np.asarray(type_grid, dtype=float)
    return pts[pts > L.p_low]


@dataclass
class ComparisonRow:
    v: float
    tcpa: float
    mcpa: float

    @property
    def margin(self) -> float:
        return self.tcpa - self.mcpa

    @property
    def strict(self) -> bool:
        return self.margin > 0


def theorem1_check(D: ValuationDist, L: PriceLandscape, type_grid=None, raise_on_violation=True):
    """Per-type bidder utilities under the two no-commitment subgames.

    ``u_tCPA(v) = (v - T*(v)) H(v)`` against ``u_mCPA(v) = (v - b*(v)) H(b*(v))``.
    """
    rows = []
    for v in _type_points(D, L, type_grid):
        v = float(v)
        b = fpa_bid(L, v)
        rows.append(ComparisonRow(v, L.cum_H(L.p_low, v), (v - b) * L.H(b)))
    bad = [r for r in rows if not r.strict]
    if bad and raise_on_violation:
        r = bad[0]
        raise ViolationFound(
            f"tCPA utility {r.tcpa:.6g} not above mCPA utility {r.mcpa:.6g} at v={r.v:.6g}",
            instance={"landscape": L.to_spec(), "valuation": D.to_spec(), "v": r.v},
        )
    return rows


@dataclass
class RevenueComparison:
    rows: list
    assumption2: bool
    assumption2_violation: Optional[float]
    verdict: str

    @property
    def min_margin(self) -> float:
        return min(r.margin for r in self.rows)

    @property
    def mixed_signs(self) -> bool:
        return any(r.margin > 0 for r in self.rows) and any(r.margin < 0 for r in self.rows)


def per_type_revenues(L: PriceLandscape, v: float) -> tuple[float, float]:
    """``(pi_tCPA|v, pi_mCPA|v) = (T*(v) H(v), b*(v) H(b*(v)))``."""
    b = fpa_bid(L, v)
    return tcpa_target(L, v) * L.H(v), b * L.H(b)


def revenue_comparison(D: ValuationDist, L: PriceLandscape, type_grid=None) -> RevenueComparison:
    ok, where = check_assumption2(L)
    rows = [ComparisonRow(float(v), *per_type_revenues(L, float(v))) for v in _type_points(D, L, type_grid)]
    all_strict = all(r.strict for r in rows)
    if ok and all_strict:
        verdict = "theorem-consistent"
    elif ok:
        verdict = "violation"
    elif all_strict:
        verdict = "assumption-violated; tCPA still ahead"
    else:
        verdict = "assumption-violated; mixed signs" if any(r.strict for r in rows) else "assumption-violated; mCPA ahead"
    return RevenueComparison(rows, ok, where, verdict)


def revenue_crossing(L: PriceLandscape, lo: float, hi: float) -> float:
    """Type at which per-type tCPA and mCPA revenues cross in ``[lo, hi]``."""
    diff = lambda v: (lambda t, m: t - m)(*per_type_revenues(L, v))
    return numerics.find_root(diff, (lo, hi), Tolerance(1e-13, 1e-12, 400))


@dataclass
class CommitmentValue:
    psi: float
    ratio: float
    pi_nc: float
    pi_c: float
    pi_floor_spa: float
    pi_myerson: float
    reserve: float

    @property
    def bound_holds(self) -> bool:
        return self.ratio >= self.psi - 1e-6


def value_of_commitment(D: ValuationDist, L: PriceLandscape, grid: int = DEFAULT_GRID) -> CommitmentValue:
    """Benchmark ``psi`` for ``pi_NC / pi_C`` and the realized ratio.

    ``psi`` compares a single-item second-price sale with reserve at the
    bottom of the support, ``E[phi_F(v)]`` (kept signed), with Myerson's
    revenue ``r (1 - F(r))``. The ratio can dip below ``psi`` when the
    landscape puts volume below the support of ``F``
    (``pi_NC = E[phi_F H] - int_0^{v_low} H``); ``bound_holds`` reports it.
    """
    if not D.support.bounded:
        raise ValidationError("value of commitment needs a bounded valuation support")
    r = _require_regular(D)
    pi_spa = expectation(D, lambda v: virtual_value(D, v), EXPECT_TOL)
    pi_mye = r * (1.0 - D.F(r))
    psi = pi_spa / pi_mye
    pi_nc = tcpa_nocommit_outcome(D, L, grid=3).expected["revenue"]
    pi_c = commitment_outcome(D, L, grid=3).expected["revenue"]
    ratio = pi_nc / pi_c if pi_c > 0 else math.inf
    return CommitmentValue(psi, ratio, pi_nc, pi_c, pi_spa, pi_mye, r)


@dataclass
class ShowingCommitment:
    pi_wb: float
    pi_c: float
    report: EquilibriumReport

    @property
    def ratio(self) -> float:
        """``pi_C / pi_WB``; ``inf`` when the wrong-belief revenue vanishes."""
        return math.inf if self.pi_wb == 0.0 else self.pi_c / self.pi_wb


def wrong_belief_row(L: PriceLandscape, v: float, r: float) -> TypeRow:
    if L.H(v) <= 0.0:
        return TypeRow.from_allocation(v, v, 0.0, 0.0, 0.0)
    T = tcpa_target(L, v)
    if T < r:
        return TypeRow.from_allocation(v, T, 0.0, 0.0, 0.0)
    sol = solve_tcpa_bid(L, T, r)
    vol = L.H(sol.bid)
    spend = tcpa_spend(L, r, sol.bid) if sol.slack else T * vol
    return TypeRow.from_allocation(v, T, sol.bid, vol, spend)


def value_of_showing_commitment(D: ValuationDist, L: PriceLandscape, grid: int = DEFAULT_GRID) -> ShowingCommitment:
    """Revenue when the bidder submits its no-commitment target but the
    auctioneer keeps the Myerson reserve."""
    r = _require_regular(D)
    report = _build_report(
        WRONG_BELIEF, D, L, lambda v: wrong_belief_row(L, v, r), grid, r, r
    )
    pi_c = commitment_outcome(D, L, grid=3).expected["revenue"]
    return ShowingCommitment(report.expected["revenue"], pi_c, report)
