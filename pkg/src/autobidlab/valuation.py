"""Bidder valuation distributions, virtual values and the Myerson reserve."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import numerics
from .errors import Irregular, InvalidFamily, NoDensity
from .numerics import Interval, Tolerance

Fn = Callable[[float], float]


@dataclass(frozen=True, eq=False)
class ValuationDist:
    support: Interval
    cdf: Fn
    pdf: Optional[Fn]
    ppf: Optional[Fn] = None
    family: str = "custom"
    params: dict = field(default_factory=dict)
    kinks: tuple = ()

    @property
    def lo(self) -> float:
        return self.support.lo

    @property
    def hi(self) -> float:
        return self.support.hi

    @property
    def is_point(self) -> bool:
        return self.family == "point"

    def F(self, v: float) -> float:
        if v < self.lo:
            return 0.0
        if v >= self.hi:
            return 1.0
        return self.cdf(v)

    def f(self, v: float) -> float:
        if self.pdf is None:
            raise NoDensity(f"{self.family} has no density")
        if v < self.lo or v > self.hi:
            return 0.0
        return self.pdf(v)

    def quantile(self, u: float) -> float:
        if self.is_point:
            return self.lo
        if self.ppf is not None:
            return self.ppf(u)
        if u <= 0:
            return self.lo
        if u >= 1:
            return self.hi
        return numerics.find_root(lambda v: self.F(v) - u, (self.lo, self.hi))

    def type_grid(self, n: int = 129) -> np.ndarray:
        """Chebyshev-spaced quantile grid (endpoints included)."""
        if self.is_point:
            return np.array([self.lo])
        return np.array([self.quantile(float(u)) for u in numerics.chebyshev_nodes(n)])

    def to_spec(self) -> dict:
        return {"family": self.family, **self.params}


def uniform(lo: float = 0.0, hi: float = 1.0) -> ValuationDist:
    lo, hi = float(lo), float(hi)
    if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi and lo >= 0):
        raise InvalidFamily(f"uniform needs 0 <= lo < hi finite, got [{lo}, {hi}]")
    w = hi - lo
    return ValuationDist(
        support=Interval(lo, hi),
        cdf=lambda v: (v - lo) / w,
        pdf=lambda v: 1.0 / w,
        ppf=lambda u: lo + u * w,
        family="uniform",
        params={"lo": lo, "hi": hi},
    )


def truncated_pareto(alpha: float, lo: float, hi: float) -> ValuationDist:
    """Pareto(alpha) with scale ``lo`` truncated to ``[lo, hi]``."""
    alpha, lo, hi = float(alpha), float(lo), float(hi)
    if not (alpha > 0 and 0 < lo < hi and math.isfinite(hi)):
        raise InvalidFamily("truncated_pareto needs alpha > 0 and 0 < lo < hi < inf")
    z = 1.0 - (lo / hi) ** alpha

    def cdf(v):
        return (1.0 - (lo / v) ** alpha) / z

    def pdf(v):
        return alpha * lo**alpha * v ** (-alpha - 1.0) / z

    def ppf(u):
        return lo * (1.0 - u * z) ** (-1.0 / alpha)

    return ValuationDist(
        support=Interval(lo, hi),
        cdf=cdf,
        pdf=pdf,
        ppf=ppf,
        family="truncated_pareto",
        params={"alpha": alpha, "lo": lo, "hi": hi},
    )


def point_mass(v: float) -> ValuationDist:
    v = float(v)
    if not (math.isfinite(v) and v >= 0):
        raise InvalidFamily(f"point mass needs a finite nonnegative value, got {v}")
    # degenerate interval widened by one ulp so Interval stays nonempty
    return ValuationDist(
        support=Interval(v, math.nextafter(v, math.inf)),
        cdf=lambda x: 1.0 if x >= v else 0.0,
        pdf=None,
        family="point",
        params={"v": v},
    )


def mixture(components, weights) -> ValuationDist:
    """Finite mixture of densities on a common support hull."""
    w = np.asarray(weights, dtype=float)
    if w.size != len(components) or np.any(w <= 0):
        raise InvalidFamily("mixture needs one positive weight per component")
    if any(c.pdf is None for c in components):
        raise InvalidFamily("mixture components need densities")
    w = w / w.sum()
    lo = min(c.lo for c in components)
    hi = max(c.hi for c in components)
    kinks = tuple(sorted({x for c in components for x in (c.lo, c.hi)} - {lo, hi}))
    return ValuationDist(
        support=Interval(lo, hi),
        cdf=lambda v: float(sum(wi * c.F(v) for wi, c in zip(w, components))),
        pdf=lambda v: float(sum(wi * c.f(v) for wi, c in zip(w, components))),
        family="mixture",
        params={"components": [c.to_spec() for c in components], "weights": w.tolist()},
        kinks=kinks,
    )


def virtual_value(D: ValuationDist, v: float) -> float:
    """``v - (1 - F(v)) / f(v)``."""
    if D.pdf is None:
        raise NoDensity(f"{D.family} has no density")
    fv = D.f(v)
    tail = 1.0 - D.F(v)
    if tail <= 0:
        return v
    if fv <= 0:
        return -math.inf
    return v - tail / fv


def check_regularity(D: ValuationDist, grid_size: int = 256) -> bool:
    if D.pdf is None:
        raise NoDensity(f"{D.family} has no density")
    g = np.linspace(D.lo, D.hi, grid_size)
    extra = [k * s for k in D.kinks for s in (1 - 1e-9, 1 + 1e-9)]
    g = np.unique(np.concatenate([g, extra]))
    g = g[(g >= D.lo) & (g <= D.hi)]
    phi = np.array([virtual_value(D, float(v)) for v in g])
    finite = np.isfinite(phi)
    phi, g = phi[finite], g[finite]
    scale = max(float(np.max(np.abs(phi))), 1.0)
    return bool(np.all(np.diff(phi) >= -1e-12 * scale))


def myerson_reserve(D: ValuationDist, tol: Tolerance = numerics.DEFAULT_TOL) -> float:
    """Zero of the virtual value, clamped to the bottom of the support."""
    if not check_regularity(D):
        raise Irregular(f"{D.family} has a non-monotone virtual value")
    # f*phi keeps the sign of phi and stays finite
    g = lambda v: v * D.f(v) - (1.0 - D.F(v))
    if g(D.lo) >= 0:
        return D.lo
    return numerics.find_root(g, (D.lo, D.hi), Tolerance(1e-14, tol.rel_tol, tol.max_iter))


def expectation(
    D: ValuationDist,
    g: Fn,
    tol: Tolerance = numerics.DEFAULT_TOL,
    breakpoints=(),
) -> float:
    """``E[g(v)]``; direct evaluation for a point mass."""
    if D.is_point:
        return float(g(D.lo))
    return numerics.integrate(
        lambda v: g(v) * D.f(v),
        (D.lo, D.hi),
        tol,
        breakpoints=tuple(breakpoints) + D.kinks,
    )


_FAMILIES = {
    "uniform": lambda d: uniform(d.get("lo", 0.0), d.get("hi", 1.0)),
    "point": lambda d: point_mass(d["v"]),
    "truncated_pareto": lambda d: truncated_pareto(d["alpha"], d["lo"], d["hi"]),
}


def make_valuation(spec) -> ValuationDist:
    if isinstance(spec, ValuationDist):
        return spec
    if isinstance(spec, str):
        name, *args = spec.split(":")
        try:
            if name == "uniform":
                spec = {"family": "uniform", "lo": float(args[0]), "hi": float(args[1])} if args else {"family": "uniform"}
            elif name == "point":
                spec = {"family": "point", "v": float(args[0])}
            else:
                raise InvalidFamily(f"unknown valuation shorthand {spec!r}")
        except (IndexError, ValueError):
            raise InvalidFamily(f"bad valuation shorthand {spec!r}") from None
    if not isinstance(spec, dict) or spec.get("family") not in _FAMILIES:
        raise InvalidFamily(f"unknown valuation spec {spec!r}")
    try:
        return _FAMILIES[spec["family"]](spec)
    except KeyError as exc:
        raise InvalidFamily(f"valuation {spec['family']!r} missing parameter {exc}") from None
