"""Scalar numerical kernels: bracketing root finder, adaptive quadrature and
1-D maximization.

Root finding and quadrature delegate the inner iteration to scipy
(``brentq`` and ``quad``); this module owns the contracts around them:
bracket checks, endpoint shortcuts, semi-infinite substitution, error
translation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import integrate as _spi
from scipy import optimize as _spo

from .errors import (
    DomainError,
    MaxIterExceeded,
    NoSignChange,
    NonFiniteIntegrand,
)

ScalarFn = Callable[[float], float]

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float = math.inf

    def __post_init__(self):
        if not math.isfinite(self.lo):
            raise DomainError(f"interval lower end must be finite, got {self.lo}")
        if math.isnan(self.hi) or not self.lo < self.hi:
            raise DomainError(f"empty interval [{self.lo}, {self.hi}]")

    @property
    def bounded(self) -> bool:
        return math.isfinite(self.hi)

    def contains(self, x: float) -> bool:
        return self.lo <= x <= self.hi


@dataclass(frozen=True)
class Tolerance:
    abs_tol: float = 1e-10
    rel_tol: float = 1e-10
    max_iter: int = 200

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise DomainError("tolerances must be positive")
        if self.max_iter < 1:
            raise DomainError("max_iter must be >= 1")


DEFAULT_TOL = Tolerance()


def _as_interval(domain) -> Interval:
    if isinstance(domain, Interval):
        return domain
    lo, hi = domain
    return Interval(float(lo), float(hi))


def find_root(f: ScalarFn, bracket, tol: Tolerance = DEFAULT_TOL) -> float:
    """Root of ``f`` inside ``bracket``.

    An endpoint with ``|f| <= abs_tol`` is returned as is (the lower one
    first), so degenerate problems whose root sits on the bracket edge do
    not depend on the sign of rounding noise.
    """
    iv = _as_interval(bracket)
    if not iv.bounded:
        raise DomainError("find_root needs a finite bracket; expand it first")
    lo, hi = iv.lo, iv.hi
    flo, fhi = f(lo), f(hi)
    if not (math.isfinite(flo) and math.isfinite(fhi)):
        raise NonFiniteIntegrand(f"non-finite value at bracket ends: {flo}, {fhi}")
    if abs(flo) <= tol.abs_tol:
        return lo
    if abs(fhi) <= tol.abs_tol:
        return hi
    if (flo > 0) == (fhi > 0):
        raise NoSignChange(f"f({lo})={flo:.6g} and f({hi})={fhi:.6g} share a sign")
    try:
        return float(
            _spo.brentq(
                f,
                lo,
                hi,
                xtol=min(tol.abs_tol, 1e-12),
                rtol=max(tol.rel_tol * 1e-2, 4 * np.finfo(float).eps),
                maxiter=tol.max_iter,
            )
        )
    except RuntimeError as exc:
        raise MaxIterExceeded(str(exc)) from exc


def expand_bracket(
    f: ScalarFn,
    lo: float,
    seed: float,
    cap: float = math.inf,
    growth: float = 2.0,
) -> float:
    """Grow an upper end geometrically from ``seed`` until ``f`` changes sign
    relative to ``f(lo)``.

    Returns the first upper end with a sign change, or ``cap`` if that is
    reached first (callers inspect ``f(cap)`` to detect slack problems).
    Growth stops at ``2**60 * seed``.
    """
    flo = f(lo)
    seed = max(seed, lo + 1e-12, 1e-12)
    limit = min(cap, seed * 2.0**60)
    hi = min(seed, limit)
    while True:
        fh = f(hi)
        if (fh > 0) != (flo > 0) or fh == 0:
            return hi
        if hi >= limit:
            if math.isfinite(cap) and hi >= cap:
                return cap
            raise MaxIterExceeded(f"no sign change below {limit:.3g}")
        hi = min(hi * growth if hi > 0 else seed, limit)


def _checked(f: ScalarFn) -> ScalarFn:
    def g(x):
        y = f(x)
        if not math.isfinite(y):
            raise NonFiniteIntegrand(f"integrand returned {y} at {x}")
        return y

    return g


def integrate(
    f: ScalarFn,
    domain,
    tol: Tolerance = DEFAULT_TOL,
    breakpoints: Iterable[float] = (),
) -> float:
    """Adaptive quadrature of ``f`` over ``domain``.

    Semi-infinite domains go through ``z = lo + t/(1-t)``. ``breakpoints``
    are kinks or jumps inside the domain; the integral is split there.
    """
    iv = _as_interval(domain)
    g = _checked(f)
    lo, hi = iv.lo, iv.hi

    if iv.bounded:
        pieces = [lo] + sorted(p for p in set(breakpoints) if lo < p < hi) + [hi]
        return sum(_quad(g, a, b, tol) for a, b in zip(pieces[:-1], pieces[1:]))

    def mapped(t):
        if t >= 1.0:
            return 0.0
        s = 1.0 - t
        return g(lo + t / s) / (s * s)

    cuts = sorted(
        (p - lo) / (1.0 + p - lo) for p in set(breakpoints) if math.isfinite(p) and p > lo
    )
    pieces = [0.0] + cuts + [1.0]
    return sum(_quad(mapped, a, b, tol) for a, b in zip(pieces[:-1], pieces[1:]))


def _quad(g: ScalarFn, a: float, b: float, tol: Tolerance) -> float:
    if b <= a:
        return 0.0
    val, err, info = _spi.quad(
        g,
        a,
        b,
        epsabs=tol.abs_tol,
        epsrel=tol.rel_tol,
        limit=tol.max_iter,
        full_output=True,
    )[:3]
    if not math.isfinite(val):
        raise NonFiniteIntegrand(f"quadrature produced {val} on [{a}, {b}]")
    # quad flags roundoff even when the estimate is good; only a large error
    # estimate counts as failure
    if err > 1e3 * max(tol.abs_tol, tol.rel_tol * abs(val)):
        raise MaxIterExceeded(f"quadrature error estimate {err:.3g} on [{a}, {b}]")
    return float(val)


def maximize_1d(
    f: ScalarFn,
    domain,
    tol: Tolerance = DEFAULT_TOL,
    grid_size: int = 256,
) -> tuple[float, float]:
    """Global-ish maximizer on a bounded interval: uniform grid scan, then
    golden-section refinement around the best grid node.

    Ties go to the smallest argmax, so a constant ``f`` returns
    ``domain.lo``.
    """
    iv = _as_interval(domain)
    if not iv.bounded:
        raise DomainError("maximize_1d needs a bounded domain")
    if grid_size < 2:
        raise DomainError("grid_size must be >= 2")
    xs = np.linspace(iv.lo, iv.hi, grid_size)
    ys = np.array([f(float(x)) for x in xs])
    i = int(np.argmax(ys))  # first occurrence -> smallest x on ties
    best_x, best_y = float(xs[i]), float(ys[i])

    a = float(xs[max(i - 1, 0)])
    b = float(xs[min(i + 1, grid_size - 1)])
    x, y = _golden(f, a, b, tol)
    if y > best_y or (y == best_y and x < best_x):
        best_x, best_y = x, y
    return best_x, best_y


def _golden(f: ScalarFn, a: float, b: float, tol: Tolerance) -> tuple[float, float]:
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(tol.max_iter):
        if b - a <= tol.abs_tol + tol.rel_tol * abs(c):
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
    else:
        if b - a > 1e3 * (tol.abs_tol + tol.rel_tol * abs(c)):
            raise MaxIterExceeded("golden-section search did not converge")
    cands = [(fa, xa) for xa, fa in ((a, f(a)), (c, fc), (d, fd), (b, f(b)))]
    y, x = max(cands, key=lambda t: (t[0], -t[1]))
    return x, y


def chebyshev_nodes(n: int) -> np.ndarray:
    """``n`` points in [0, 1] clustered at both ends (Chebyshev-Lobatto)."""
    if n == 1:
        return np.array([0.5])
    k = np.arange(n)
    return 0.5 * (1.0 - np.cos(np.pi * k / (n - 1)))


def count_sign_changes(values: Sequence[float]) -> int:
    signs = [v > 0 for v in values if v != 0]
    return sum(1 for s, t in zip(signs[:-1], signs[1:]) if s != t)
