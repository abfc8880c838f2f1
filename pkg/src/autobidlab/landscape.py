"""Query price landscapes.

A landscape ``H(p)`` is the volume of queries whose intrinsic price is at
most ``p``; ``h`` is its density. Every named family ships closed-form
primitives of ``H`` so that the fixed-point equations downstream can be
solved to ~1e-12 without nested quadrature. Arbitrary callables are
accepted too and fall back on adaptive quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import numerics
from .errors import DivergentTail, DomainError, InfiniteTotalVolume, InvalidFamily
from .numerics import Interval, Tolerance

Fn = Callable[[float], float]

EMPIRICAL_JITTER = 1e-9
UPPER_QUANTILE = 1.0 - 1e-6


@dataclass(frozen=True, eq=False)
class PriceLandscape:
    """Immutable price distribution on ``support``.

    ``primitive(b)`` returns ``int_lo^b H`` for ``b`` inside the support;
    when omitted it is computed by quadrature. ``kinks`` lists points
    where ``h`` jumps, used to split integrals.
    """

    support: Interval
    cdf: Fn
    density: Fn
    total_volume: float
    primitive: Optional[Fn] = None
    kinks: tuple = ()
    family: str = "custom"
    params: dict = field(default_factory=dict)
    integrable: bool = True
    divergent_tail: bool = False

    @property
    def p_low(self) -> float:
        return self.support.lo

    @property
    def p_high(self) -> float:
        return self.support.hi

    def H(self, p: float) -> float:
        if p <= self.p_low:
            return 0.0
        if p >= self.p_high:
            return self.total_volume
        return self.cdf(p)

    def h(self, p: float) -> float:
        if p < self.p_low or p >= self.p_high:
            return 0.0
        return self.density(p)

    def _prim(self, b: float) -> float:
        # int_{p_low}^{b} H, with H clamped to total volume above p_high
        if b <= self.p_low:
            return 0.0
        if b > self.p_high:
            return self._prim(self.p_high) + (b - self.p_high) * self.total_volume
        if self.primitive is not None:
            return self.primitive(b)
        return numerics.integrate(self.cdf, (self.p_low, b), breakpoints=self.kinks)

    def cum_H(self, a: float, b: float) -> float:
        """``int_a^b H(z) dz``."""
        if a < self.p_low - 1e-15 or b < a:
            raise DomainError(f"cum_H needs p_low <= a <= b, got a={a}, b={b}")
        if b == a:
            return 0.0
        return max(self._prim(b) - self._prim(max(a, self.p_low)), 0.0)

    def tail_price_mass(self, a: float) -> float:
        """``int_a^{p_high} z dH(z)``: price-weighted volume above ``a``."""
        if a < self.p_low - 1e-15:
            raise DomainError(f"tail_price_mass needs a >= p_low, got {a}")
        a = max(a, self.p_low)
        if a >= self.p_high:
            return 0.0
        if self.divergent_tail:
            raise DivergentTail(f"{self.family}: int z h(z) dz diverges")
        if self.support.bounded:
            # Stieltjes integration by parts; also picks up any jump in H
            top = self.p_high
            return max(top * self.total_volume - a * self.H(a) - self.cum_H(a, top), 0.0)
        return _unbounded_tail(self, a)

    def price_mass_below(self, a: float) -> float:
        """``int_{p_low}^a z dH(z)``."""
        a = min(max(a, self.p_low), self.p_high)
        return max(a * self.H(a) - self.cum_H(self.p_low, a), 0.0)

    def upper_cut(self) -> float:
        """Finite right end for validation grids."""
        if self.support.bounded:
            return self.p_high
        if math.isfinite(self.total_volume):
            target = UPPER_QUANTILE * self.total_volume
            hi = numerics.expand_bracket(
                lambda p: self.H(p) - target, self.p_low, max(2 * self.p_low, 1.0)
            )
            return numerics.find_root(lambda p: self.H(p) - target, (self.p_low, hi))
        return 100.0 * max(1.0, self.p_low, *self.kinks)

    def validation_grid(self, grid_size: int = 256) -> np.ndarray:
        lo, hi = self.p_low, self.upper_cut()
        pts = [np.linspace(lo, hi, grid_size)]
        if hi / max(lo, 1e-300) > 100:
            pts.append(np.geomspace(max(lo, 1e-6 * hi), hi, grid_size))
        for k in self.kinks:
            if lo < k < hi:
                pts.append(np.array([k * (1 - 1e-9), k]))
        g = np.unique(np.concatenate(pts))
        return g[(g >= lo) & (g <= hi)]

    def validate(self, grid_size: int = 256) -> None:
        g = self.validation_grid(grid_size)
        if self.H(self.p_low) != 0.0 and self.cdf(self.p_low) > 1e-12:
            raise InvalidFamily(f"{self.family}: atom at p_low")
        Hs = np.array([self.H(float(p)) for p in g])
        if np.any(np.diff(Hs) < -1e-12):
            raise InvalidFamily(f"{self.family}: H decreasing somewhere")
        interior = g[(g > self.p_low) & (g < min(self.p_high, g[-1]))]
        hs = np.array([self.h(float(p)) for p in interior])
        if np.any(hs <= 0):
            bad = float(interior[np.argmax(hs <= 0)])
            raise InvalidFamily(f"{self.family}: density not positive at {bad}")

    def to_spec(self) -> dict:
        return {"family": self.family, **self.params}


def _unbounded_tail(L: PriceLandscape, a: float) -> float:
    """Tail mass on an unbounded support with a decade-by-decade
    convergence heuristic."""
    f = lambda z: z * L.h(z)
    start = max(a, 1.0)
    total = numerics.integrate(f, (a, start), breakpoints=L.kinks) if start > a else 0.0
    prev_piece = math.inf
    hi = start
    for _ in range(40):
        nxt = hi * 10.0
        piece = numerics.integrate(f, (hi, nxt), breakpoints=L.kinks)
        total += piece
        if piece <= 1e-12 * max(total, 1.0):
            return total
        if piece >= 0.5 * prev_piece and hi > 1e3 * start:
            break
        prev_piece, hi = piece, nxt
    raise DivergentTail(f"{L.family}: tail mass does not settle above {a}")


def check_assumption2(L: PriceLandscape, grid_size: int = 256):
    """Is ``v h(v)`` nondecreasing on the validation grid?

    Returns ``(ok, first_violation)``; ``first_violation`` is ``None`` when
    ``ok``.
    """
    if grid_size < 2:
        raise DomainError("grid_size must be >= 2")
    g = L.validation_grid(grid_size)
    g = g[g < L.p_high] if L.support.bounded else g
    vals = np.array([p * L.h(float(p)) for p in g])
    scale = max(float(np.max(np.abs(vals))), 1e-300)
    drops = np.diff(vals) < -1e-12 * scale
    if np.any(drops):
        return False, float(g[int(np.argmax(drops)) + 1])
    return True, None


def normalized_virtual_value(L: PriceLandscape, p: float) -> float:
    """``p - (1 - G(p)) / g(p)`` for the volume-normalized landscape
    ``G = H / H_tot``. The normalization cancels, so this equals
    ``p - (H_tot - H(p)) / h(p)``."""
    if not math.isfinite(L.total_volume):
        raise InfiniteTotalVolume(f"{L.family} has infinite total volume")
    if not L.support.contains(p):
        raise DomainError(f"{p} outside support")
    hp = L.h(p)
    if hp <= 0:
        return -math.inf
    return p - (L.total_volume - L.H(p)) / hp


def virtual_value_numerator(L: PriceLandscape, p: float) -> float:
    """``h(p) * phi_H(p)``: same sign as the virtual value, finite where
    ``h`` vanishes."""
    if not math.isfinite(L.total_volume):
        raise InfiniteTotalVolume(f"{L.family} has infinite total volume")
    return p * L.h(p) - (L.total_volume - L.H(p))


# --------------------------------------------------------------------------
# families


def power(n: int) -> PriceLandscape:
    """``H(p) = p**n`` on [0, 1]."""
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise InvalidFamily(f"power landscape needs a positive integer n, got {n}")
    n = int(n)
    return PriceLandscape(
        support=Interval(0.0, 1.0),
        cdf=lambda p: p**n,
        density=lambda p: n * p ** (n - 1),
        total_volume=1.0,
        primitive=lambda b: b ** (n + 1) / (n + 1),
        family="power",
        params={"n": n},
    )


def pareto_hat() -> PriceLandscape:
    """``H(p) = 1 - 1/p`` on [1, inf). Not integrable; its price tail
    ``int z h`` diverges."""
    return PriceLandscape(
        support=Interval(1.0, math.inf),
        cdf=lambda p: 1.0 - 1.0 / p,
        density=lambda p: 1.0 / (p * p),
        total_volume=1.0,
        primitive=lambda b: b - math.log(b) - 1.0,
        family="pareto_hat",
        integrable=False,
        divergent_tail=True,
    )


def piecewise_eps(eps: float) -> PriceLandscape:
    """Two-slope landscape on [0, 1] with a kink at ``eps``.

    ``(1-eps)/eps * p`` up to ``eps``, ``(1-eps) + eps*p`` above. The two
    branches differ by ``eps**2`` at the kink, so ``H`` has a small jump
    just above ``eps``; ``h(eps)`` is the right limit.
    """
    eps = float(eps)
    if not 0.0 < eps < 1.0:
        raise InvalidFamily(f"piecewise_eps needs eps in (0, 1), got {eps}")
    steep = (1.0 - eps) / eps
    below_total = steep * eps * eps / 2.0

    def cdf(p):
        return steep * p if p <= eps else (1.0 - eps) + eps * p

    def density(p):
        return steep if p < eps else eps

    def prim(b):
        if b <= eps:
            return steep * b * b / 2.0
        return below_total + (1.0 - eps) * (b - eps) + eps * (b * b - eps * eps) / 2.0

    return PriceLandscape(
        support=Interval(0.0, 1.0),
        cdf=cdf,
        density=density,
        total_volume=1.0,
        primitive=prim,
        kinks=(eps,),
        family="piecewise_eps",
        params={"eps": eps},
    )


def steep_step(kink: float, eps: float) -> PriceLandscape:
    """``H(p) = eps*p + ramp(p)`` on [0, inf), where ``ramp`` climbs from 0
    to 1 linearly on ``[kink, kink + eps]``.

    A continuous stand-in for a unit mass of queries priced at ``kink``
    plus a thin uniform background; as ``eps -> 0`` it tends to
    ``1{p >= kink} + eps*p``. Nothing but the background sits below
    ``kink``.
    """
    kink, eps = float(kink), float(eps)
    if not (0.0 < eps and 0.0 <= kink):
        raise InvalidFamily(f"steep_step needs eps > 0 and kink >= 0, got eps={eps}, kink={kink}")
    top = kink + eps

    def ramp(p):
        return min(max((p - kink) / eps, 0.0), 1.0)

    def density(p):
        return eps + (1.0 / eps if kink <= p < top else 0.0)

    def prim(b):
        if b <= kink:
            r = 0.0
        elif b <= top:
            r = (b - kink) ** 2 / (2.0 * eps)
        else:
            r = eps / 2.0 + (b - top)
        return eps * b * b / 2.0 + r

    return PriceLandscape(
        support=Interval(0.0, math.inf),
        cdf=lambda p: eps * p + ramp(p),
        density=density,
        total_volume=math.inf,
        primitive=prim,
        kinks=(kink, top),
        family="steep_step",
        params={"kink": kink, "eps": eps},
        integrable=False,
        divergent_tail=True,
    )


def empirical(prices, jitter: float = EMPIRICAL_JITTER) -> PriceLandscape:
    """Piecewise-linear CDF through sorted sample prices.

    Knot ``i`` (0-based) of ``m`` carries volume ``i/(m-1)``, so ``H`` is
    zero at the cheapest price and one at the dearest. Duplicated prices
    are spread ``jitter`` apart to keep the density finite and positive.
    """
    p = np.sort(np.asarray(prices, dtype=float))
    if p.ndim != 1 or np.any(~np.isfinite(p)) or np.any(p <= 0):
        raise InvalidFamily("empirical landscape needs finite positive prices")
    if np.unique(p).size < 2:
        raise InvalidFamily("empirical landscape needs at least 2 distinct prices")
    for i in range(1, p.size):
        if p[i] <= p[i - 1]:
            p[i] = p[i - 1] + jitter
    m = p.size
    vol = np.arange(m) / (m - 1)
    slopes = np.diff(vol) / np.diff(p)
    seg_int = np.concatenate([[0.0], np.cumsum((vol[:-1] + vol[1:]) / 2 * np.diff(p))])
    knots = p

    def locate(x):
        return min(max(int(np.searchsorted(knots, x, side="right")) - 1, 0), m - 2)

    def cdf(x):
        i = locate(x)
        return float(vol[i] + slopes[i] * (x - knots[i]))

    def density(x):
        return float(slopes[locate(x)])

    def prim(b):
        i = locate(b)
        d = b - knots[i]
        return float(seg_int[i] + vol[i] * d + slopes[i] * d * d / 2.0)

    return PriceLandscape(
        support=Interval(float(p[0]), float(p[-1])),
        cdf=cdf,
        density=density,
        total_volume=1.0,
        primitive=prim,
        kinks=tuple(float(k) for k in p[1:-1]),
        family="empirical",
        params={"prices": [float(x) for x in np.sort(np.asarray(prices, dtype=float))]},
    )


def from_callables(cdf: Fn, density: Fn, lo: float, hi: float = math.inf, **kw) -> PriceLandscape:
    """Landscape from user-supplied ``H`` and ``h``; integrals by quadrature."""
    total = kw.pop("total_volume", None)
    if total is None:
        total = cdf(hi) if math.isfinite(hi) else math.inf
    return PriceLandscape(
        support=Interval(lo, hi), cdf=cdf, density=density, total_volume=total, **kw
    )


_FAMILIES = {
    "power": lambda d: power(d["n"]),
    "pareto_hat": lambda d: pareto_hat(),
    "piecewise_eps": lambda d: piecewise_eps(d["eps"]),
    "steep_step": lambda d: steep_step(d["kink"], d["eps"]),
    "empirical": lambda d: empirical(d["prices"]),
}


def make_landscape(spec) -> PriceLandscape:
    """Build and validate a landscape from a JSON-style dict or a shorthand
    string such as ``"power:3"``, ``"pareto_hat"``, ``"piecewise_eps:0.01"``
    or ``"steep_step:0.25:1e-4"``."""
    if isinstance(spec, PriceLandscape):
        return spec
    if isinstance(spec, str):
        spec = _parse_shorthand(spec)
    if not isinstance(spec, dict) or "family" not in spec:
        raise InvalidFamily(f"landscape spec must name a family: {spec!r}")
    fam = spec["family"]
    if fam not in _FAMILIES:
        raise InvalidFamily(f"unknown landscape family {fam!r}")
    try:
        L = _FAMILIES[fam](spec)
    except KeyError as exc:
        raise InvalidFamily(f"landscape {fam!r} missing parameter {exc}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, InvalidFamily):
            raise
        raise InvalidFamily(f"landscape {fam!r}: {exc}") from None
    L.validate()
    return L


def _parse_shorthand(s: str) -> dict:
    name, *args = s.strip().split(":")
    try:
        if name == "power":
            return {"family": "power", "n": int(args[0])}
        if name == "pareto_hat":
            return {"family": "pareto_hat"}
        if name == "piecewise_eps":
            return {"family": "piecewise_eps", "eps": float(args[0])}
        if name == "steep_step":
            return {"family": "steep_step", "kink": float(args[0]), "eps": float(args[1])}
    except (IndexError, ValueError):
        raise InvalidFamily(f"bad landscape shorthand {s!r}") from None
    raise InvalidFamily(f"unknown landscape shorthand {s!r}")
