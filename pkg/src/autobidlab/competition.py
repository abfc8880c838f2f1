"""One platform bidder against unconstrained buyers.

On every query the top competing bid is ``p0`` (distributed by the
landscape) and the runner-up bids ``beta * p0``. Above ``p_high`` the
landscape is clamped: ``H`` equals the total volume and the price tail is
empty.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import numerics
from .errors import InfiniteTotalVolume, NoRootInBracket, NoSignChange, ValidationError, ViolationFound
from .landscape import PriceLandscape, virtual_value_numerator
from .numerics import Tolerance
from .onebidder import fpa_bid, tcpa_marginal_bid

_TOL = Tolerance(abs_tol=1e-14, rel_tol=1e-13, max_iter=400)


@dataclass(frozen=True)
class CompetitiveSetting:
    landscape: PriceLandscape
    beta: float

    def __post_init__(self):
        if not 0.0 < self.beta < 1.0:
            raise ValidationError(f"beta must lie in (0, 1), got {self.beta}")
        if not math.isfinite(self.landscape.total_volume):
            raise InfiniteTotalVolume("competitive setting needs finite total volume")
        # raises DivergentTail for landscapes like pareto_hat
        self.landscape.tail_price_mass(self.landscape.p_low)

    def tail(self, a: float) -> float:
        L = self.landscape
        if a >= L.p_high:
            return 0.0
        return L.tail_price_mass(max(a, L.p_low))

    def exclusion_revenue(self, r: float) -> float:
        """Competition-only revenue under reserve ``r``: ``r`` is paid on
        ``(r, r/beta]`` and the runner-up bid above."""
        L, b = self.landscape, self.beta
        return r * (L.H(r / b) - L.H(r)) + b * self.tail(r / b)

    def inclusion_revenue(self, v: float) -> float:
        """Revenue when the bidder bids ``v`` with its reserve at ``v``."""
        L, b = self.landscape, self.beta
        return v * L.H(v / b) + b * self.tail(v / b)


def reserve_rh(S: CompetitiveSetting, grid_size: int = 257) -> float:
    """Zero of the (volume-normalized) virtual value of the landscape."""
    L = S.landscape
    g = lambda p: virtual_value_numerator(L, p)
    if g(L.p_low) >= 0:
        return L.p_low
    if not L.support.bounded:
        hi = numerics.expand_bracket(g, L.p_low, max(1.0, 2 * L.p_low))
        return numerics.find_root(g, (L.p_low, hi), _TOL)
    # the numerator also vanishes at p_high; bracket the first crossing instead
    grid = L.validation_grid(grid_size)
    vals = [g(float(p)) for p in grid]
    k = next(i for i, val in enumerate(vals) if val >= 0)
    if vals[k] == 0:
        return float(grid[k])
    return numerics.find_root(g, (float(grid[k - 1]), float(grid[k])), _TOL)


@dataclass(frozen=True)
class Threshold:
    v_h: float
    r_h: float
    residual: float
    sign_changes: int

    @property
    def below_reserve(self) -> bool:
        return self.v_h < self.r_h


def vh_threshold(S: CompetitiveSetting, grid_size: int = 1025) -> Threshold:
    """Bid at which the auctioneer is indifferent between serving the
    bidder (reserve = bid) and excluding it (reserve ``r_H``)."""
    L = S.landscape
    r_h = reserve_rh(S)
    rhs = S.exclusion_revenue(r_h)
    gap = lambda v: S.inclusion_revenue(v) - rhs
    if L.support.bounded:
        # past beta*p_high the left side is v*H_tot, still increasing
        top = max(S.beta * L.p_high, rhs / L.total_volume)
    else:
        top = numerics.expand_bracket(gap, L.p_low, 1.0)
    tol = Tolerance(abs_tol=1e-13 * max(1.0, abs(rhs)), rel_tol=1e-13, max_iter=400)
    try:
        v_h = numerics.find_root(gap, (L.p_low, top), tol)
    except NoSignChange as exc:
        raise NoRootInBracket(f"indifference equation has no root on [{L.p_low}, {top}]") from exc
    grid = np.linspace(L.p_low, top, grid_size)
    changes = numerics.count_sign_changes([gap(float(v)) for v in grid])
    if changes == 0 and abs(gap(v_h)) <= tol.abs_tol:
        changes = 1  # root sits on a bracket edge
    return Threshold(v_h, r_h, gap(v_h), changes)


def _fpa_inverse(L: PriceLandscape, target: float, hi: float) -> float:
    """Value whose unconstrained mCPA bid equals ``target``."""
    if target <= L.p_low:
        return target
    f = lambda v: fpa_bid(L, v) - target
    hi = numerics.expand_bracket(f, target, max(hi, 2 * target))
    return numerics.find_root(f, (target, hi), Tolerance(1e-12, 1e-12, 400))


@dataclass(frozen=True)
class CompetitiveBidder:
    """Piecewise mCPA strategy: sit out, bid the threshold, or bid freely."""

    setting: CompetitiveSetting
    v_h: float
    b_inverse: float

    @classmethod
    def build(cls, S: CompetitiveSetting) -> "CompetitiveBidder":
        v_h = vh_threshold(S).v_h
        return cls(S, v_h, _fpa_inverse(S.landscape, v_h, 2.0 * max(v_h, 1e-9)))

    def bid(self, v: float) -> float:
        if v <= self.v_h:
            return 0.0
        if v <= self.b_inverse:
            return self.v_h
        return fpa_bid(self.setting.landscape, v)


def mcpa_bid_competitive(S: CompetitiveSetting, v: float) -> float:
    if v < 0:
        raise ValidationError("valuation must be nonnegative")
    return CompetitiveBidder.build(S).bid(v)


def fpa_bid_monotone(L: PriceLandscape, lo: float, hi: float, n: int = 257) -> bool:
    """Numerical check that the unconstrained bid map is nondecreasing."""
    bs = [fpa_bid(L, float(v)) for v in np.linspace(lo, hi, n)]
    return all(b2 >= b1 - 1e-12 for b1, b2 in zip(bs[:-1], bs[1:]))


def t_threshold(S: CompetitiveSetting) -> float:
    """Target whose reserve-free tCPA marginal bid equals ``v_H``."""
    L = S.landscape
    v_h = vh_threshold(S).v_h
    if v_h <= L.p_low:
        return v_h
    f = lambda T: tcpa_marginal_bid(L, T, 0.0) - v_h
    return numerics.find_root(f, (0.0, v_h), Tolerance(1e-14, 1e-13, 400))


def auctioneer_objective(S: CompetitiveSetting, T: float, n: float) -> float:
    """Revenue when the bidder's final marginal bid is ``n``: target times
    the bidder's volume, the bid as price on ``(n, n/beta]``, runner-up
    bids above."""
    L, b = S.landscape, S.beta
    return T * L.H(n) + n * (L.H(n / b) - L.H(n)) + b * S.tail(n / b)


@dataclass(frozen=True)
class CompetitiveReserve:
    n_star: float
    r_star: float
    objective: float
    excluded: bool
    upper: float

    @property
    def interior_of_target(self) -> bool:
        return self.n_star > 0 and not self.excluded


def tcpa_reserve_competitive(S: CompetitiveSetting, T: float, grid_size: int = 256) -> CompetitiveReserve:
    """Auctioneer's best reserve against a tCPA bid ``T``, searched through
    the induced marginal bid ``n in [T, b(T; 0)]``."""
    L = S.landscape
    if T < 0:
        raise ValidationError("target must be nonnegative")
    T_h = t_threshold(S)
    if T < T_h:
        r_h = reserve_rh(S)
        return CompetitiveReserve(0.0, r_h, S.exclusion_revenue(r_h), True, 0.0)
    upper = tcpa_marginal_bid(L, T, 0.0)
    J = lambda n: auctioneer_objective(S, T, n)
    if upper <= T:
        return CompetitiveReserve(T, T, J(T), False, upper)
    n_star, obj = numerics.maximize_1d(J, (T, upper), _TOL, grid_size=grid_size)
    if n_star <= T:
        raise ViolationFound(f"auctioneer optimum sits at the target (T={T})", instance={"T": T, "beta": S.beta})
    if n_star >= upper:
        r_star = 0.0
    elif n_star <= T:
        r_star = T
    else:
        r_star = numerics.find_root(
            lambda r: tcpa_marginal_bid(L, T, r) - n_star, (0.0, T), Tolerance(1e-14, 1e-13, 400)
        )
    return CompetitiveReserve(n_star, r_star, obj, False, upper)
