"""Discrete multi-bidder simulator.

A finite query set is sold by second-price auctions with personal (and
possibly per-query) reserves. Participant 0 is the bidder under study,
participants ``1..n`` are the extra-buyers. Bids are per conversion; the
effective bid of ``i`` on ``x`` is ``b_i * q_i(x)``. Ties in effective bid go
to the lowest id.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import NoConvergence, ValidationError, ViolationFound
from .landscape import PriceLandscape

log = logging.getLogger(__name__)

MCPA = "mCPA"
TCPA = "tCPA"
PER_QUERY = "PerQueryPersonalized"
UNIFORM = "UniformPerBidder"

_AVG_SLACK = 1e-12  # relative slack on the average-cost constraint


@dataclass(frozen=True, eq=False)
class QuerySpace:
    """``weights[x] = mu(x)``, ``conversion[i, x] = q_i(x)``, ``floors[x] = p_B(x)``."""

    weights: np.ndarray
    conversion: np.ndarray
    floors: np.ndarray
    ids: tuple = ()

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        q = np.atleast_2d(np.asarray(self.conversion, dtype=float))
        p = np.asarray(self.floors, dtype=float)
        if w.ndim != 1 or q.shape[1] != w.size or p.shape != w.shape:
            raise ValidationError("query arrays have mismatched shapes")
        if np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise ValidationError("query weights must be positive")
        if np.any(q <= 0) or np.any(q > 1):
            raise ValidationError("conversion rates must lie in (0, 1]")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValidationError("floors must be finite and nonnegative")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "conversion", q)
        object.__setattr__(self, "floors", p)
        if not self.ids:
            object.__setattr__(self, "ids", tuple(range(w.size)))

    @property
    def m(self) -> int:
        return self.weights.size

    @property
    def n_participants(self) -> int:
        return self.conversion.shape[0]

    def to_dict(self) -> dict:
        return {
            "queries": [
                {
                    "id": qid,
                    "weight": float(self.weights[x]),
                    "conversion": [float(c) for c in self.conversion[:, x]],
                    "floor": float(self.floors[x]),
                }
                for x, qid in enumerate(self.ids)
            ]
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QuerySpace":
        qs = d["queries"]
        if not qs:
            raise ValidationError("query space is empty")
        return cls(
            weights=np.array([q["weight"] for q in qs]),
            conversion=np.array([q["conversion"] for q in qs]).T,
            floors=np.array([q.get("floor", 0.0) for q in qs]),
            ids=tuple(q.get("id", k) for k, q in enumerate(qs)),
        )


@dataclass(frozen=True)
class BidderSpec:
    id: int
    format: str
    value: float
    submitted: float  # bid for mCPA, target for tCPA

    def __post_init__(self):
        if self.format not in (MCPA, TCPA):
            raise ValidationError(f"unknown format {self.format!r}")
        if not (self.value >= 0 and self.submitted > 0):
            raise ValidationError("values must be nonnegative and bids/targets positive")

    def to_dict(self) -> dict:
        key = "bid" if self.format == MCPA else "target"
        return {"id": self.id, "format": self.format, "value": self.value, key: self.submitted}

    @classmethod
    def from_dict(cls, d: dict) -> "BidderSpec":
        fmt = d.get("format")
        key = "bid" if fmt == MCPA else "target"
        if key not in d:
            raise ValidationError(f"bidder {d.get('id')} needs a {key!r}")
        return cls(int(d["id"]), fmt, float(d["value"]), float(d[key]))


@dataclass(frozen=True, eq=False)
class ReservePolicy:
    """Reserve table ``table[i, x]`` (per conversion)."""

    mode: str
    table: np.ndarray

    def __post_init__(self):
        if self.mode not in (PER_QUERY, UNIFORM):
            raise ValidationError(f"unknown reserve mode {self.mode!r}")
        t = np.atleast_2d(np.asarray(self.table, dtype=float))
        if np.any(t < 0) or np.any(np.isnan(t)):
            raise ValidationError("reserves must be nonnegative")
        if self.mode == UNIFORM and np.any(t != t[:, :1]):
            raise ValidationError("uniform policy must not vary across queries")
        object.__setattr__(self, "table", t)

    @classmethod
    def uniform(cls, per_bidder: Sequence[float], m: int, mode: str = UNIFORM) -> "ReservePolicy":
        return cls(mode, np.repeat(np.asarray(per_bidder, dtype=float)[:, None], m, axis=1))

    @classmethod
    def zeros(cls, n: int, m: int, mode: str = UNIFORM) -> "ReservePolicy":
        return cls(mode, np.zeros((n, m)))

    def with_row(self, i: int, r: float) -> "ReservePolicy":
        t = self.table.copy()
        t[i, :] = r
        return ReservePolicy(self.mode, t)

    def with_cell(self, i: int, x: int, r: float) -> "ReservePolicy":
        if self.mode == UNIFORM:
            raise ValidationError("uniform policy has no per-query cells")
        t = self.table.copy()
        t[i, x] = r
        return ReservePolicy(self.mode, t)

    def to_dict(self) -> dict:
        if self.mode == UNIFORM:
            return {"mode": self.mode, "values": [float(r) for r in self.table[:, 0]]}
        return {"mode": self.mode, "values": [[float(r) for r in row] for row in self.table]}

    @classmethod
    def from_dict(cls, d: dict, n: int, m: int) -> "ReservePolicy":
        mode = d.get("mode", UNIFORM)
        vals = np.asarray(d.get("values", np.zeros(n)), dtype=float)
        if vals.ndim == 1:
            if vals.size != n:
                raise ValidationError("one reserve per participant expected")
            return cls.uniform(vals, m, mode)
        if vals.shape != (n, m):
            raise ValidationError("reserve table must be participants x queries")
        return cls(mode, vals)


@dataclass(frozen=True, eq=False)
class AuctionOutcome:
    winners: np.ndarray  # -1 when unsold
    prices: np.ndarray  # price per conversion paid by the winner
    volume: np.ndarray
    spend: np.ndarray
    utility: np.ndarray
    revenue: float

    def won_by(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.winners == i)

    def to_dict(self) -> dict:
        return {
            "winners": [int(w) for w in self.winners],
            "prices": [float(p) for p in self.prices],
            "volume": [float(v) for v in self.volume],
            "spend": [float(s) for s in self.spend],
            "utility": [float(u) for u in self.utility],
            "revenue": float(self.revenue),
        }


def intrinsic_price(Q: QuerySpace, x: int, bids: dict, for_bidder: int) -> float:
    """Price per conversion ``for_bidder`` must beat on query ``x``."""
    qi = Q.conversion[for_bidder, x]
    rival = max((b * Q.conversion[j, x] / qi for j, b in bids.items() if j != for_bidder), default=0.0)
    return max(rival, float(Q.floors[x]))


def _eligible(Q: QuerySpace, bids: np.ndarray, R: np.ndarray) -> np.ndarray:
    b = bids[:, None]
    return (b > 0) & (b >= R) & (b >= Q.floors[None, :])


def run_auction(Q: QuerySpace, final_bids, reserves: ReservePolicy, values=None) -> AuctionOutcome:
    bids = np.asarray(final_bids, dtype=float)
    if bids.shape != (Q.n_participants,) or np.any(bids < 0):
        raise ValidationError("one nonnegative bid per participant expected")
    R = reserves.table
    eff = _effective(Q, bids, R)
    cols = np.arange(Q.m)
    winners = np.argmax(eff, axis=0)  # first max: lowest id wins ties
    sold = eff[winners, cols] > -np.inf
    rest = eff.copy()
    rest[winners, cols] = -np.inf
    second = np.maximum(rest.max(axis=0), 0.0) if Q.n_participants > 1 else np.zeros(Q.m)
    qw = Q.conversion[winners, cols]
    prices = np.maximum.reduce([second / qw, R[winners, cols], Q.floors])
    winners = np.where(sold, winners, -1)
    prices = np.where(sold, prices, 0.0)
    conv = np.where(sold, Q.weights * qw, 0.0)
    n = Q.n_participants
    volume = np.zeros(n)
    spend = np.zeros(n)
    for i in range(n):
        mine = winners == i
        volume[i] = conv[mine].sum()
        spend[i] = (prices[mine] * conv[mine]).sum()
    vals = np.full(n, np.nan) if values is None else np.asarray(values, dtype=float)
    return AuctionOutcome(winners, prices, volume, spend, vals * volume - spend, float(spend.sum()))


@dataclass(frozen=True)
class BestResponse:
    bid: float
    n_won: int
    avg_cost: float
    binding: bool
    slack: bool


def _effective(Q: QuerySpace, bids: np.ndarray, R: np.ndarray) -> np.ndarray:
    return np.where(_eligible(Q, bids, R), bids[:, None] * Q.conversion, -np.inf)


def tcpa_best_response(
    Q: QuerySpace, bids: np.ndarray, R: np.ndarray, i: int, T: float, v: float, eff=None
) -> BestResponse:
    """Largest set of queries ``i`` can take at average cost <= ``T``.

    The reported bid is ``max(T, smallest bid that wins that set)``, which
    keeps the bid at or above the target without winning anything extra.
    """
    qi = Q.conversion[i]
    if Q.n_participants > 1:
        e = (_effective(Q, bids, R) if eff is None else eff).copy()
        e[i] = -np.inf
        top = e.max(axis=0)
        live = top > -np.inf
        # a lower id wins ties, so matching it is not enough
        strict = live & (e[:i] == top).any(axis=0) if i > 0 else np.zeros(Q.m, dtype=bool)
        t = np.where(live, np.maximum(top, 0.0), 0.0) / qi
    else:
        t = np.zeros(Q.m)
        strict = np.zeros(Q.m, dtype=bool)
    if Q.n_participants > 1:
        # the auction compares b*q against top; make sure t*q really reaches it
        top0 = np.where(live, np.maximum(top, 0.0), 0.0)
        for _ in range(4):
            short = t * qi < top0
            if not short.any():
                break
            t = np.where(short, np.nextafter(t, np.inf), t)
    c = np.maximum.reduce([t, R[i], Q.floors])
    need = c.copy()
    beat = strict & (c == t)
    for _ in range(4):
        short = beat & (need * qi <= top0) if Q.n_participants > 1 else np.zeros(Q.m, dtype=bool)
        if not short.any():
            break
        need = np.where(short, np.nextafter(need, np.inf), need)
    need = np.maximum(need, np.nextafter(0.0, 1.0))  # bids must be positive
    order = np.argsort(need, kind="stable")
    need_s, c_s = need[order], c[order]
    w = (Q.weights * qi)[order]
    cum_spend = np.cumsum(c_s * w)
    cum_vol = np.cumsum(w)
    ok = (cum_spend <= T * cum_vol * (1 + _AVG_SLACK)) & (need_s <= max(v, T))
    k = int(np.argmin(ok)) if not ok.all() else Q.m
    while 0 < k < Q.m and need_s[k] == need_s[k - 1]:
        k -= 1  # cannot split a group of queries sharing one threshold
    bid = max(T, float(need_s[k - 1])) if k else T
    if bid > v:
        log.warning("bidder %d: bid %.6g clamped to value %.6g", i, bid, v)
        bid = v
    avg = float(cum_spend[k - 1] / cum_vol[k - 1]) if k else 0.0
    winnable = int(np.sum(need <= max(v, T)))
    return BestResponse(bid, k, avg, bool(k and abs(avg - T) <= 1e-6 * max(1.0, T)), k == winnable)


@dataclass(frozen=True, eq=False)
class FixedPoint:
    bids: np.ndarray
    rounds: int
    responses: dict = field(default_factory=dict)


def tcpa_fixed_point(
    Q: QuerySpace,
    specs: Sequence[BidderSpec],
    reserves: ReservePolicy,
    init=None,
    damping: float = 0.5,
    tol: float = 1e-8,
    max_rounds: int = 10_000,
    undamped_rounds: int = 25,
) -> FixedPoint:
    """Final marginal bids: mCPA bids are fixed, tCPA bids best-respond.

    A short undamped pass is tried first (best responses are piecewise
    constant, so it often lands on an exact fixed point); otherwise the
    damped synchronous iteration takes over from the same start.
    """
    n = Q.n_participants
    if len(specs) != n:
        raise ValidationError(f"{len(specs)} bidder specs for {n} participants")
    base = np.array([s.submitted for s in specs], dtype=float)
    start = base.copy() if init is None else np.asarray(init, dtype=float).copy()
    tidx = [s.id for s in specs if s.format == TCPA]
    for s in specs:
        if s.format == MCPA:
            start[s.id] = s.submitted
            if s.submitted > s.value:
                log.warning("bidder %d: bid %.6g clamped to value %.6g", s.id, s.submitted, s.value)
                start[s.id] = s.value
    if not tidx:
        return FixedPoint(start, 0)
    R = reserves.table

    def respond(b):
        eff = _effective(Q, b, R)
        return {i: tcpa_best_response(Q, b, R, i, specs[i].submitted, specs[i].value, eff) for i in tidx}

    bids = start.copy()
    seen = set()
    for k in range(undamped_rounds):
        br = respond(bids)
        new = bids.copy()
        for i, r in br.items():
            new[i] = r.bid
        if np.max(np.abs(new - bids)) <= tol:
            return FixedPoint(new, k + 1, br)
        key = new.tobytes()
        if key in seen:
            break
        seen.add(key)
        bids = new

    bids = start.copy()
    history = []
    visited = {}
    for k in range(max_rounds):
        key = bids.tobytes()
        if key in visited:
            # responses take finitely many values, so a repeat is a true cycle
            raise NoConvergence(
                f"tCPA best responses cycle with period {k - visited[key]}",
                last_iterate=bids.tolist(),
                diagnostics={"cycle_period": k - visited[key], "last_deltas": history[-10:]},
            )
        visited[key] = k
        br = respond(bids)
        target = bids.copy()
        for i, r in br.items():
            target[i] = r.bid
        delta = float(np.max(np.abs(target - bids)))
        history.append(delta)
        if delta <= tol:
            br2 = respond(target)
            if all(abs(br2[i].bid - target[i]) <= tol for i in tidx):
                return FixedPoint(target, undamped_rounds + k + 1, br2)
        bids = bids + damping * (target - bids)
    raise NoConvergence(
        f"tCPA best responses did not settle in {max_rounds} rounds",
        last_iterate=bids.tolist(),
        diagnostics={"last_deltas": history[-10:]},
    )


def _base_table(Q: QuerySpace, specs, mode: str) -> ReservePolicy:
    # mCPA participants: reserve at the bid; tCPA participants start at 0
    r = [s.submitted if s.format == MCPA else 0.0 for s in specs]
    return ReservePolicy.uniform(r, Q.m, mode)


@dataclass(frozen=True, eq=False)
class ReserveSearch:
    policy: ReservePolicy
    revenue: float
    bids: np.ndarray
    outcome: AuctionOutcome
    evaluations: int


def _better(a: float, b: float) -> bool:
    if not math.isfinite(b):
        return a > b
    return a > b + 1e-12 * max(1.0, abs(b))


def evaluate_policy(Q, specs, policy: ReservePolicy, init=None) -> tuple:
    fp = tcpa_fixed_point(Q, specs, policy, init=init)
    out = run_auction(Q, fp.bids, policy, values=[s.value for s in specs])
    return out, fp.bids


def auctioneer_best_reserves(
    Q: QuerySpace,
    specs: Sequence[BidderSpec],
    mode: str = PER_QUERY,
    grid: int = 64,
    starts: Sequence[ReservePolicy] = (),
    init=None,
    fixed: Sequence[int] = (),
    max_passes: int = 4,
    cell_grid: int = 5,
) -> ReserveSearch:
    """Coordinate search over tCPA participants' personal reserves.

    mCPA participants get a reserve equal to their bid. Each tCPA reserve
    is searched on a uniform grid over ``[0, T_i]`` and refined once
    around the best node. In per-query mode each pass then tries
    ``cell_grid`` levels on every single (participant, query) cell. Passes
    repeat until no move improves revenue.
    ``starts`` seeds extra starting policies (which may carry per-query
    rows in per-query mode); ``fixed`` lists participants whose reserve
    row is never moved. Every fixed point starts from ``init``.
    """
    base = _base_table(Q, specs, mode)
    coords = [s.id for s in specs if s.format == TCPA and s.id not in set(fixed)]
    evals = 0
    cache = {}
    failures = []

    def score(policy):
        nonlocal evals
        key = policy.table.tobytes()
        if key not in cache:
            evals += 1
            try:
                cache[key] = evaluate_policy(Q, specs, policy, init)
            except NoConvergence as exc:
                cache[key] = exc  # no predictable outcome: never chosen
                failures.append(exc)
        hit = cache[key]
        if isinstance(hit, NoConvergence):
            return -math.inf, None, None
        out, bids = hit
        return out.revenue, out, bids

    best = None
    for s0 in [base, *starts]:
        if s0.mode != mode:
            s0 = ReservePolicy(mode, s0.table)
        cur = s0
        cur_rev = score(cur)[0]
        for _ in range(max_passes):
            improved = False
            for i in coords:
                T = specs[i].submitted
                nodes = np.linspace(0.0, T, grid)
                revs = [score(cur.with_row(i, float(r)))[0] for r in nodes]
                j = int(np.argmax(revs))
                step = T / (grid - 1)
                fine = np.linspace(max(0.0, nodes[j] - step), min(T, nodes[j] + step), max(grid // 4, 3))
                cands = [(revs[j], float(nodes[j]))] + [(score(cur.with_row(i, float(r)))[0], float(r)) for r in fine]
                rev, r = max(cands, key=lambda t: (t[0], -t[1]))
                if _better(rev, cur_rev):
                    cur, cur_rev, improved = cur.with_row(i, r), rev, True
            if mode == PER_QUERY:
                # per-query moves: one (participant, query) cell at a time
                for i in coords:
                    levels = np.linspace(0.0, specs[i].submitted, cell_grid)
                    for x in range(Q.m):
                        for r in levels:
                            if r == cur.table[i, x]:
                                continue
                            cand = cur.with_cell(i, x, float(r))
                            rev = score(cand)[0]
                            if _better(rev, cur_rev):
                                cur, cur_rev, improved = cand, rev, True
            if not improved:
                break
        if best is None or _better(cur_rev, best[1]):
            best = (cur, cur_rev)
    if not math.isfinite(best[1]):
        raise failures[0] if failures else NoConvergence("no reserve policy admits a fixed point")
    rev, out, bids = score(best[0])
    return ReserveSearch(best[0], rev, bids, out, evals)


# ----------------------------------------------------------------------
# No-swapping graph


@dataclass(frozen=True)
class SwapVerdict:
    acyclic: bool
    edges: tuple
    cycle: tuple = ()


def no_swap_check(outcome1: AuctionOutcome, outcome2: AuctionOutcome) -> SwapVerdict:
    """Handover graph: edge ``(i, j)`` when a query won by ``i`` in the first
    outcome is won by ``j != i`` in the second."""
    w1, w2 = np.asarray(outcome1.winners), np.asarray(outcome2.winners)
    if w1.shape != w2.shape:
        raise ValidationError("outcomes cover different query spaces")
    edges = sorted({(int(a), int(b)) for a, b in zip(w1, w2) if a >= 0 and b >= 0 and a != b})
    adj = {}
    for a, b in edges:
        adj.setdefault(a, []).append(b)
    state, stack = {}, []

    def dfs(u):
        state[u] = 1
        stack.append(u)
        for nxt in adj.get(u, ()):
            if state.get(nxt) == 1:
                return tuple(stack[stack.index(nxt):]) + (nxt,)
            if nxt not in state:
                found = dfs(nxt)
                if found:
                    return found
        state[u] = 2
        stack.pop()
        return ()

    for u in sorted(adj):
        if u not in state:
            cyc = dfs(u)
            if cyc:
                return SwapVerdict(False, tuple(edges), cyc)
    return SwapVerdict(True, tuple(edges))


# ----------------------------------------------------------------------
# Random instances


@dataclass(frozen=True)
class InstanceGenerator:
    n_queries: int = 20
    n_extra: int = 2
    value_range: tuple = (0.0, 1.5)
    conversion_range: tuple = (0.1, 1.0)
    floor_range: tuple = (0.0, 0.5)
    weight_range: tuple = (0.5, 1.5)
    tcpa_share: float = 0.5
    bid_fraction: tuple = (0.5, 1.0)
    target_fraction: tuple = (0.3, 1.0)

    def query_space(self, rng: np.random.Generator) -> QuerySpace:
        m, n = self.n_queries, self.n_extra + 1
        return QuerySpace(
            weights=rng.uniform(*self.weight_range, size=m),
            conversion=rng.uniform(*self.conversion_range, size=(n, m)),
            floors=rng.uniform(*self.floor_range, size=m),
        )

    def extras(self, rng: np.random.Generator, formats=None) -> list:
        out = []
        for j in range(1, self.n_extra + 1):
            v = max(float(rng.uniform(*self.value_range)), 1e-6)
            tcpa = rng.uniform() < self.tcpa_share if formats is None else formats[j - 1] == TCPA
            frac = rng.uniform(*(self.target_fraction if tcpa else self.bid_fraction))
            out.append(BidderSpec(j, TCPA if tcpa else MCPA, v, float(v * frac)))
        return out


def discretize_landscape(L: PriceLandscape, m: int, n_participants: int = 1) -> QuerySpace:
    """Queries at volume-midpoint quantiles of ``L`` used as floors, with
    unit conversion for every participant."""
    tot = L.total_volume
    if not math.isfinite(tot):
        raise ValidationError("discretization needs finite total volume")
    from . import numerics

    prices = []
    for k in range(m):
        target = (k + 0.5) / m * tot
        prices.append(numerics.find_root(lambda p: L.H(p) - target, (L.p_low, L.upper_cut())))
    return QuerySpace(np.full(m, tot / m), np.ones((n_participants, m)), np.array(prices))


def trial_rngs(seed: int, trials: int) -> list:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(trials)]


# ----------------------------------------------------------------------
# World M versus world T


@dataclass(frozen=True, eq=False)
class WorldPair:
    world_m: ReserveSearch
    world_t: ReserveSearch
    query_space: QuerySpace
    specs_m: tuple
    specs_t: tuple

    def bidder_won(self, world: str) -> np.ndarray:
        w = self.world_m if world == "M" else self.world_t
        return w.outcome.won_by(0)

    def metrics(self) -> dict:
        m, t = self.world_m.outcome, self.world_t.outcome
        return {
            "revenue": (m.revenue, t.revenue),
            "revenue_from_bidder": (float(m.spend[0]), float(t.spend[0])),
            "volume": (float(m.volume[0]), float(t.volume[0])),
            "utility": (float(m.utility[0]), float(t.utility[0])),
        }

    def to_dict(self) -> dict:
        return {
            "instance": {
                **self.query_space.to_dict(),
                "bidders_M": [s.to_dict() for s in self.specs_m],
                "bidders_T": [s.to_dict() for s in self.specs_t],
            },
            "reserves_M": self.world_m.policy.to_dict(),
            "reserves_T": self.world_t.policy.to_dict(),
            "bids_M": [float(b) for b in self.world_m.bids],
            "bids_T": [float(b) for b in self.world_t.bids],
            "metrics": {k: list(v) for k, v in self.metrics().items()},
        }


def _replicate_in_m(Q: QuerySpace, world_t: ReserveSearch, b: float) -> ReservePolicy:
    """World-M policy mimicking world T for the extra-buyers: each extra
    faces the bidder's world-T effective bid as a personal per-query
    reserve, and is shut out of the queries the bidder won in world T."""
    t = world_t.policy.table.copy()
    b_t = world_t.bids[0]
    won = world_t.outcome.winners == 0
    for j in range(1, Q.n_participants):
        mimic = b_t * Q.conversion[0] / Q.conversion[j]
        t[j] = np.where(won, np.inf, np.maximum(t[j], mimic))
    t[0] = b
    big = np.max(t[np.isfinite(t)]) if np.any(np.isfinite(t)) else 1.0
    t[~np.isfinite(t)] = 1e6 * max(big, 1.0)
    return ReservePolicy(PER_QUERY, t)


def world_pair(
    Q: QuerySpace,
    extras: Sequence[BidderSpec],
    v: float,
    b_mcpa: float,
    mode: str = PER_QUERY,
    grid: int = 16,
    fix_extras: bool = False,
    rounds: int = 3,
) -> WorldPair:
    """Bidder mCPA at ``b`` (world M) against tCPA at ``T = b`` (world T),
    each with the auctioneer's searched reserves.

    World T's search is seeded with world M's policy (bidder reserve set
    to the target) and world M's equilibrium bids, so the replication
    argument is always available to it. In per-query mode world M is in
    turn offered the policy that mimics world T for the extra-buyers;
    the exchange repeats until neither side changes.
    """
    if not 0 < b_mcpa <= v:
        raise ValidationError("need 0 < b_mcpa <= v")
    specs_m = (BidderSpec(0, MCPA, v, b_mcpa), *extras)
    specs_t = (BidderSpec(0, TCPA, v, b_mcpa), *extras)
    fixed = tuple(s.id for s in extras) if fix_extras else ()
    wm = auctioneer_best_reserves(Q, specs_m, mode, grid=grid, fixed=fixed)
    wt = None
    for _ in range(rounds):
        seed_policy = wm.policy.with_row(0, b_mcpa)
        wt_new = auctioneer_best_reserves(Q, specs_t, mode, grid=grid, starts=[seed_policy], init=wm.bids, fixed=fixed)
        if wt is not None and wt_new.revenue <= wt.revenue:
            wt_new = wt
        wt = wt_new
        if mode != PER_QUERY or fix_extras:
            break
        mimic = _replicate_in_m(Q, wt, b_mcpa)
        try:
            out, bids = evaluate_policy(Q, specs_m, mimic, init=wt.bids)
        except NoConvergence:
            break
        if out.revenue <= wm.revenue + 1e-12 * max(1.0, wm.revenue):
            break
        wm = auctioneer_best_reserves(Q, specs_m, mode, grid=grid, starts=[mimic], init=bids, fixed=fixed)
    return WorldPair(wm, wt, Q, specs_m, specs_t)


@dataclass(frozen=True, eq=False)
class TrialRow:
    trial: int
    margins: dict
    strict: bool
    violations: tuple
    detail: dict

    def to_dict(self) -> dict:
        return {
            "trial": self.trial,
            "margins": self.margins,
            "strict": self.strict,
            "violations": list(self.violations),
        }


@dataclass(frozen=True, eq=False)
class CheckReport:
    name: str
    rows: tuple
    params: dict
    skipped: int = 0

    @property
    def violations(self) -> int:
        return sum(1 for r in self.rows if r.violations)

    @property
    def strict_cases(self) -> int:
        return sum(1 for r in self.rows if r.strict)

    @property
    def strict_fraction(self) -> float:
        return self.strict_cases / len(self.rows) if self.rows else 0.0

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def min_margins(self) -> dict:
        keys = self.rows[0].margins.keys() if self.rows else ()
        return {k: min(r.margins[k] for r in self.rows) for k in keys}

    def to_dict(self) -> dict:
        return {
            "check": self.name,
            "params": self.params,
            "trials": len(self.rows),
            "violations": self.violations,
            "strict_cases": self.strict_cases,
            "strict_fraction": self.strict_fraction,
            "skipped": self.skipped,
            "min_margins": self.min_margins(),
            "rows": [r.to_dict() for r in self.rows],
        }

    def first_violation(self) -> Optional[TrialRow]:
        return next((r for r in self.rows if r.violations), None)


def compare_worlds(pair: WorldPair, grid: int, trial: int = 0) -> TrialRow:
    met = pair.metrics()
    scale = max(abs(x) for vals in met.values() for x in vals)
    tol = 1e-6 * (1.0 + scale)
    margins = {k: float(t - m) for k, (m, t) in met.items()}
    bad = tuple(k for k, d in margins.items() if d < -tol)
    strict = margins["utility"] > tol
    return TrialRow(trial, margins, strict, bad, pair.to_dict())


def theorem2_check(
    v: float = 1.0,
    b_mcpa: float = 0.25,
    trials: int = 100,
    seed: int = 0,
    gen: InstanceGenerator = InstanceGenerator(),
    grid: int = 16,
    raise_on_violation: bool = False,
) -> CheckReport:
    """World T against world M on seeded random realizations with
    per-query personalized reserves."""
    rows, skipped = [], []
    for k, rng in enumerate(trial_rngs(seed, trials)):
        Q = gen.query_space(rng)
        try:
            pair = world_pair(Q, gen.extras(rng), v, b_mcpa, PER_QUERY, grid)
        except NoConvergence:
            skipped.append(k)
            continue
        rows.append(compare_worlds(pair, grid, k))
    params = {"v": v, "b_mcpa": b_mcpa, "trials": trials, "seed": seed, "grid": grid,
              "n_queries": gen.n_queries, "n_extra": gen.n_extra, "no_equilibrium": skipped}
    report = CheckReport("theorem2", tuple(rows), params, len(skipped))
    if raise_on_violation and report.violations:
        row = report.first_violation()
        raise ViolationFound(f"world T falls short of world M in trial {row.trial}: {row.violations}", instance=row.detail)
    return report


def is_tcpa_symmetric(Q: QuerySpace, extras: Sequence[BidderSpec]) -> bool:
    """Equal targets and conversion profiles that are permutations of one
    another, for all tCPA extra-buyers."""
    t = [s for s in extras if s.format == TCPA]
    if len(t) <= 1:
        return True
    ref = np.sort(Q.conversion[t[0].id])
    return all(s.submitted == t[0].submitted and np.array_equal(np.sort(Q.conversion[s.id]), ref) for s in t[1:])


def containment_row(pair: WorldPair, grid: int, trial: int = 0) -> TrialRow:
    xm, xt = set(pair.bidder_won("M").tolist()), set(pair.bidder_won("T").tolist())
    row = compare_worlds(pair, grid, trial)
    missing = sorted(xm - xt)
    viol = tuple(v for v in row.violations if v == "utility")
    if missing:
        viol += ("containment",)
    margins = {"utility": row.margins["utility"], "containment": float(-len(missing))}
    detail = {**row.detail, "X_M": sorted(xm), "X_T": sorted(xt), "missing": missing}
    return TrialRow(trial, margins, row.strict or xt > xm, viol, detail)


def theorem3_check(
    v: float = 1.0,
    b_mcpa: float = 0.5,
    trials: int = 100,
    seed: int = 0,
    gen: InstanceGenerator = InstanceGenerator(n_extra=1, tcpa_share=1.0),
    grid: int = 16,
    instances: Optional[Sequence[tuple]] = None,
    raise_on_violation: bool = False,
) -> CheckReport:
    """Containment of the bidder's mCPA queries in its tCPA queries when
    the bidder's reserve is uniform and extra-buyers' reserves are held
    fixed. Asymmetric instances are skipped."""
    rows = []
    if instances is None:
        instances = []
        for rng in trial_rngs(seed, trials):
            Q = gen.query_space(rng)
            instances.append((Q, gen.extras(rng)))
    asym, no_eq = [], []
    for k, (Q, extras) in enumerate(instances):
        if not is_tcpa_symmetric(Q, extras):
            asym.append(k)
            continue
        try:
            pair = world_pair(Q, extras, v, b_mcpa, UNIFORM, grid, fix_extras=True)
        except NoConvergence:
            no_eq.append(k)
            continue
        rows.append(containment_row(pair, grid, k))
    params = {"v": v, "b_mcpa": b_mcpa, "trials": len(instances), "seed": seed, "grid": grid,
              "not_symmetric": asym, "no_equilibrium": no_eq}
    report = CheckReport("theorem3", tuple(rows), params, len(asym) + len(no_eq))
    if raise_on_violation and report.violations:
        row = report.first_violation()
        raise ViolationFound(f"containment fails in trial {row.trial}", instance=row.detail)
    return report


def random_swap_pair(rng: np.random.Generator, n_queries: int = 10, n_bidders: int = 4) -> tuple:
    """Two outcomes from independent uniform-bid profiles on one query space
    with zero floors and reserves."""
    Q = QuerySpace(
        np.ones(n_queries),
        rng.uniform(0.1, 1.0, size=(n_bidders, n_queries)),
        np.zeros(n_queries),
    )
    R = ReservePolicy.zeros(n_bidders, n_queries)
    b1 = rng.uniform(0.01, 1.0, size=n_bidders)
    b2 = rng.uniform(0.01, 1.0, size=n_bidders)
    return Q, run_auction(Q, b1, R), run_auction(Q, b2, R), b1, b2


def strict_ordering(Q: QuerySpace, bids: np.ndarray) -> bool:
    eff = np.sort(bids[:, None] * Q.conversion, axis=0)
    return bool(np.all(eff[-1] > eff[-2])) if Q.n_participants > 1 else True


def cyclic_counter_instance() -> tuple:
    """Two bidders trading two queries between outcomes."""
    def mk(w):
        w = np.array(w)
        return AuctionOutcome(w, np.zeros(2), np.ones(2), np.zeros(2), np.zeros(2), 0.0)

    return mk([0, 1]), mk([1, 0])
