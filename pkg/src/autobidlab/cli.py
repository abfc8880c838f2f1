"""Command-line scenario runner.

Exit codes: 0 success, 1 a checked claim failed, 2 invalid input,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path
from typing import Optional

import numpy as np

from . import aucsim, competition, onebidder
from .errors import AutobidError, ClaimViolation, NumericError, ValidationError
from .landscape import check_assumption2, make_landscape, steep_step
from .scenario import THEOREM1_PAIRS, Scenario, csv_to_rows, dumps, normalize, rows_to_csv
from .valuation import make_valuation, myerson_reserve

EXIT_OK, EXIT_CLAIM, EXIT_INVALID, EXIT_NUMERIC = 0, 1, 2, 3


class CommandResult:
    def __init__(self, outputs: dict, residuals: Optional[dict] = None, csv_rows=None, csv_fields=None, failed: Optional[list] = None):
        self.outputs = outputs
        self.residuals = residuals or {}
        self.csv_rows = csv_rows
        self.csv_fields = csv_fields
        self.failed = failed or []


def _param(sc: Scenario, key: str, default=None, cast=float):
    if key not in sc.params:
        if default is None:
            raise ValidationError(f"missing parameter {key!r}")
        return default
    try:
        val = cast(sc.params[key])
    except (TypeError, ValueError):
        raise ValidationError(f"parameter {key!r} has the wrong type") from None
    if cast is float and not math.isfinite(val):
        raise ValidationError(f"parameter {key!r} must be finite")
    if key in ("v", "T", "r") and val < 0:
        raise ValidationError(f"parameter {key!r} must be nonnegative")
    return val


def _grid(sc: Scenario, default: int) -> int:
    g = sc.params.get("grid", default)
    if not isinstance(g, int) or g < 2:
        raise ValidationError("grid must be an integer >= 2")
    return g


def _setting(sc: Scenario) -> competition.CompetitiveSetting:
    sc.require("landscape", "competition")
    beta = sc.competition.get("beta") if isinstance(sc.competition, dict) else None
    if not isinstance(beta, (int, float)):
        raise ValidationError("competition block needs a numeric 'beta'")
    return competition.CompetitiveSetting(make_landscape(sc.landscape), float(beta))


# ----------------------------------------------------------------------
# solve-bid


def cmd_solve(sc: Scenario) -> CommandResult:
    op = _param(sc, "op", cast=str)
    if op in ("fpa_bid", "tcpa_marginal_bid", "tcpa_target", "revenue_crossing"):
        sc.require("landscape")
        L = make_landscape(sc.landscape)
    if op == "fpa_bid":
        v = _param(sc, "v")
        b = onebidder.fpa_bid(L, v)
        foc = L.h(b) * (v - b) - L.H(b) if L.p_low < b < v else 0.0
        return CommandResult({"b": b, "v": v, "utility": (v - b) * L.H(b)}, {"foc": foc})
    if op == "tcpa_marginal_bid":
        T, r = _param(sc, "T"), _param(sc, "r", 0.0)
        mb = onebidder.solve_tcpa_bid(L, T, r)
        return CommandResult({"b": mb.bid, "T": T, "r": r, "slack": mb.slack}, {"binding": mb.residual})
    if op == "tcpa_target":
        v = _param(sc, "v")
        T = onebidder.tcpa_target(L, v)
        return CommandResult({"T": T, "v": v}, {"spend_minus_target": onebidder.tcpa_spend(L, 0.0, v) - T * L.H(v)})
    if op == "revenue_crossing":
        x = onebidder.revenue_crossing(L, _param(sc, "lo"), _param(sc, "hi"))
        t, m = onebidder.per_type_revenues(L, x)
        return CommandResult({"v": x}, {"tcpa_minus_mcpa": t - m})
    if op == "myerson_reserve":
        sc.require("valuation")
        return CommandResult({"r": myerson_reserve(make_valuation(sc.valuation))})
    if op in ("reserve_rh", "vh_threshold", "t_threshold", "mcpa_bid_competitive", "tcpa_reserve_competitive"):
        S = _setting(sc)
        if op == "reserve_rh":
            return CommandResult({"r_h": competition.reserve_rh(S)})
        if op == "vh_threshold":
            th = competition.vh_threshold(S)
            return CommandResult(
                {"v_h": th.v_h, "r_h": th.r_h, "v_h_below_r_h": th.below_reserve, "sign_changes": th.sign_changes},
                {"indifference": th.residual},
            )
        if op == "t_threshold":
            T = competition.t_threshold(S)
            v_h = competition.vh_threshold(S).v_h
            return CommandResult({"T_h": T, "v_h": v_h}, {"bid_minus_v_h": onebidder.tcpa_marginal_bid(S.landscape, T, 0.0) - v_h})
        if op == "mcpa_bid_competitive":
            return CommandResult({"b": competition.mcpa_bid_competitive(S, _param(sc, "v"))})
        T = _param(sc, "T")
        res = competition.tcpa_reserve_competitive(S, T)
        resid = 0.0 if res.excluded else onebidder.tcpa_marginal_bid(S.landscape, T, res.r_star) - res.n_star
        return CommandResult(
            {"n_star": res.n_star, "r_star": res.r_star, "objective": res.objective, "excluded": res.excluded, "upper": res.upper},
            {"bid_minus_n_star": resid},
        )
    raise ValidationError(f"unknown solve-bid op {op!r}")


# ----------------------------------------------------------------------
# equilibrium

_REGIMES = {
    "commitment": onebidder.commitment_outcome,
    "mcpa-nocommit": onebidder.mcpa_nocommit_outcome,
    "tcpa-nocommit": onebidder.tcpa_nocommit_outcome,
}


def cmd_equilibrium(sc: Scenario) -> CommandResult:
    sc.require("valuation", "landscape")
    D, L = make_valuation(sc.valuation), make_landscape(sc.landscape)
    regime = _param(sc, "regime", cast=str)
    grid = _grid(sc, onebidder.DEFAULT_GRID)
    if regime in _REGIMES:
        rep = _REGIMES[regime](D, L, grid=grid)
        out = rep.to_dict()
        rows = out.pop("per_type")
        return CommandResult(
            {**out, "per_type": rows},
            {"accounting_gap": rep.accounting_gap()},
            csv_rows=rows,
            csv_fields=onebidder.CSV_FIELDS,
        )
    if regime == "value-of-commitment":
        cv = onebidder.value_of_commitment(D, L, grid=grid)
        return CommandResult(
            {
                "psi": cv.psi,
                "ratio": cv.ratio,
                "pi_nc": cv.pi_nc,
                "pi_c": cv.pi_c,
                "pi_floor_spa": cv.pi_floor_spa,
                "pi_myerson": cv.pi_myerson,
                "reserve": cv.reserve,
                "bound_holds": cv.bound_holds,
            }
        )
    if regime == "showing-commitment":
        sh = onebidder.value_of_showing_commitment(D, L, grid=grid)
        rows = [r for r in sh.report.to_dict()["per_type"]]
        return CommandResult(
            {"pi_wb": sh.pi_wb, "pi_c": sh.pi_c, "ratio": sh.ratio, "per_type": rows},
            csv_rows=rows,
            csv_fields=onebidder.CSV_FIELDS,
        )
    raise ValidationError(f"unknown regime {regime!r}")


# ----------------------------------------------------------------------
# verify


def _verify_theorem1(sc: Scenario, tol: float) -> CommandResult:
    pairs = [(sc.valuation, sc.landscape)] if sc.landscape is not None else list(THEOREM1_PAIRS)
    grid = _grid(sc, 65)
    assertions, failed = [], []
    for val, land in pairs:
        D, L = make_valuation(val if val is not None else "uniform"), make_landscape(land)
        lo = max(D.lo, L.p_low)
        types = np.linspace(lo, D.hi, grid + 1)[1:] if lo > D.lo else None
        rows = onebidder.theorem1_check(D, L, type_grid=types, raise_on_violation=False)
        margin = min(r.margin for r in rows)
        entry = {"valuation": D.to_spec(), "landscape": L.to_spec(), "points": len(rows), "min_margin": margin, "pass": margin > tol}
        assertions.append(entry)
        if not entry["pass"]:
            failed.append(entry)
    return CommandResult({"check": "theorem1", "assertions": assertions}, failed=failed)


def _verify_revenue(sc: Scenario, tol: float) -> CommandResult:
    sc.require("landscape")
    L = make_landscape(sc.landscape)
    D = make_valuation(sc.valuation if sc.valuation is not None else "uniform")
    rc = onebidder.revenue_comparison(D, L)
    entry = {
        "assumption2": rc.assumption2,
        "assumption2_violation_at": rc.assumption2_violation,
        "min_margin": rc.min_margin,
        "mixed_signs": rc.mixed_signs,
        "verdict": rc.verdict,
        "pass": (rc.min_margin > tol) if rc.assumption2 else True,
    }
    rows = [{"v": r.v, "tcpa": r.tcpa, "mcpa": r.mcpa, "margin": r.margin} for r in rc.rows]
    return CommandResult({"check": "revenue-comparison", "assertions": [entry], "per_type": rows}, failed=[] if entry["pass"] else [entry])


def _world_check(sc: Scenario, which: str) -> CommandResult:
    gen_kw = {"n_queries": int(_param(sc, "queries", 20, int)), "n_extra": int(_param(sc, "extra", 2 if which == "theorem2" else 1, int))}
    if which == "theorem3":
        gen_kw["tcpa_share"] = 1.0
    gen = aucsim.InstanceGenerator(**gen_kw)
    kw = dict(
        v=_param(sc, "v", 1.0),
        trials=_param(sc, "trials", 100, int),
        seed=sc.seed,
        gen=gen,
        grid=_grid(sc, 16),
    )
    if which == "theorem2":
        rep = aucsim.theorem2_check(b_mcpa=_param(sc, "b", 0.25), **kw)
    else:
        rep = aucsim.theorem3_check(b_mcpa=_param(sc, "b", 0.5), **kw)
    out = rep.to_dict()
    failed = []
    if rep.violations:
        row = rep.first_violation()
        failed.append({"trial": row.trial, "violations": list(row.violations), "instance": row.detail})
    strict_needed = which == "theorem2"
    if strict_needed and rep.rows and rep.strict_cases == 0:
        failed.append({"assertion": "at least one strict case", "strict_cases": 0})
    return CommandResult(out, failed=failed)


def _verify_noswap(sc: Scenario) -> CommandResult:
    trials = _param(sc, "trials", 1000, int)
    n_q = _param(sc, "queries", 10, int)
    n_b = _param(sc, "bidders", 4, int)
    cyclic, nonstrict = [], 0
    for k, rng in enumerate(aucsim.trial_rngs(sc.seed, trials)):
        Q, o1, o2, b1, b2 = aucsim.random_swap_pair(rng, n_q, n_b)
        if not (aucsim.strict_ordering(Q, b1) and aucsim.strict_ordering(Q, b2)):
            nonstrict += 1
            continue
        verdict = aucsim.no_swap_check(o1, o2)
        if not verdict.acyclic:
            cyclic.append({"trial": k, "cycle": list(verdict.cycle)})
    counter = aucsim.no_swap_check(*aucsim.cyclic_counter_instance())
    out = {
        "check": "no-swap",
        "pairs": trials - nonstrict,
        "skipped_ties": nonstrict,
        "cyclic": cyclic,
        "counter_instance_cycle": list(counter.cycle),
    }
    failed = list(cyclic)
    if counter.acyclic:
        failed.append({"assertion": "counter-instance detected as cyclic"})
    return CommandResult(out, failed=failed)


def _verify_extension(sc: Scenario, tol: float) -> CommandResult:
    if sc.landscape is None:
        sc.landscape = "power:1"
    if sc.competition is None:
        sc.competition = {"beta": 0.5}
    S = _setting(sc)
    th = competition.vh_threshold(S)
    T_h = competition.t_threshold(S)
    upper_T = _param(sc, "T_max", 0.5)
    Ts = np.linspace(max(T_h, 1e-3), upper_T, _param(sc, "points", 10, int) + 1)[1:]
    rows, failed = [], []
    for T in Ts:
        T = float(T)
        try:
            res = competition.tcpa_reserve_competitive(S, T)
            ok = res.n_star > T
        except ClaimViolation:
            res, ok = None, False
        row = {"T": T, "n_star": res.n_star if res else T, "r_star": res.r_star if res else T, "pass": ok}
        rows.append(row)
        if not ok:
            failed.append(row)
    resid_ok = abs(th.residual) <= 1e-7 * max(1.0, abs(S.exclusion_revenue(th.r_h)))
    if not resid_ok:
        failed.append({"assertion": "v_H residual", "residual": th.residual})
    out = {"check": "extension", "v_h": th.v_h, "r_h": th.r_h, "T_h": T_h, "residual": th.residual, "rows": rows}
    return CommandResult(out, failed=failed)


def cmd_verify(sc: Scenario) -> CommandResult:
    check = _param(sc, "check", cast=str)
    tol = float(sc.tolerances.get("tol", 0.0))
    if check == "theorem1":
        return _verify_theorem1(sc, tol)
    if check == "revenue-comparison":
        return _verify_revenue(sc, tol)
    if check in ("theorem2", "theorem3"):
        return _world_check(sc, check)
    if check == "no-swap":
        return _verify_noswap(sc)
    if check == "extension":
        return _verify_extension(sc, tol)
    raise ValidationError(f"unknown check {check!r}")


# ----------------------------------------------------------------------
# sweep


def _values(sc: Scenario, default):
    vals = sc.params.get("values", default)
    if not isinstance(vals, list) or not vals:
        raise ValidationError("sweep needs a nonempty 'values' list")
    return vals


def cmd_sweep(sc: Scenario) -> CommandResult:
    kind = _param(sc, "kind", cast=str)
    rows = []
    if kind == "power-ratio":
        D = make_valuation(sc.valuation if sc.valuation is not None else "uniform")
        for n in _values(sc, [1, 2, 3, 4, 5, 6]):
            if not isinstance(n, int) or n < 1:
                raise ValidationError("power-ratio values must be integers >= 1")
            L = make_landscape(f"power:{n}")
            pt = onebidder.tcpa_nocommit_outcome(D, L, grid=3).expected["revenue"]
            pm = onebidder.mcpa_nocommit_outcome(D, L, grid=3).expected["revenue"]
            rows.append(
                {
                    "n": n,
                    "pi_tcpa": pt,
                    "pi_mcpa": pm,
                    "ratio": pt / pm,
                    # same ratio if the shaded bid were v/(n+1)
                    "ratio_alt_bound": n * (n + 1) ** (n - 1) / (n + 2),
                    "ratio_alt_closed_form": n * (n + 1) ** n,
                }
            )
        fields = ("n", "pi_tcpa", "pi_mcpa", "ratio", "ratio_alt_bound", "ratio_alt_closed_form")
    elif kind == "commitment-eps":
        D = make_valuation(sc.valuation if sc.valuation is not None else "uniform:0.25:1")
        for eps in _values(sc, [1e-1, 1e-2, 1e-3]):
            cv = onebidder.value_of_commitment(D, steep_step(D.lo, float(eps)))
            rows.append({"eps": float(eps), "psi": cv.psi, "pi_nc": cv.pi_nc, "pi_c": cv.pi_c, "ratio": cv.ratio, "gap": cv.ratio - cv.psi})
        fields = ("eps", "psi", "pi_nc", "pi_c", "ratio", "gap")
    elif kind == "showing-eps":
        D = make_valuation(sc.valuation if sc.valuation is not None else "uniform")
        for eps in _values(sc, [1e-1, 1e-2, 1e-3]):
            L = make_landscape({"family": "piecewise_eps", "eps": float(eps)})
            sh = onebidder.value_of_showing_commitment(D, L, grid=3)
            pnc = onebidder.tcpa_nocommit_outcome(D, L, grid=3).expected["revenue"]
            rows.append({"eps": float(eps), "pi_wb": sh.pi_wb, "pi_c": sh.pi_c, "pi_nc": pnc})
        fields = ("eps", "pi_wb", "pi_c", "pi_nc")
    else:
        raise ValidationError(f"unknown sweep kind {kind!r}")
    return CommandResult({"kind": kind, "rows": rows}, csv_rows=rows, csv_fields=fields)


# ----------------------------------------------------------------------
# simulate


def cmd_simulate(sc: Scenario) -> CommandResult:
    block = sc.aucsim or {}
    if "queries" in block:
        Q = aucsim.QuerySpace.from_dict(block)
        specs = [aucsim.BidderSpec.from_dict(b) for b in block.get("bidders", [])]
    else:
        rng = np.random.default_rng(sc.seed)
        gen = aucsim.InstanceGenerator(n_queries=int(block.get("n_queries", 20)), n_extra=int(block.get("n_extra", 2)))
        Q = gen.query_space(rng)
        b0 = block.get("bidder", {"format": aucsim.TCPA, "value": 1.0, "target": 0.5})
        specs = [aucsim.BidderSpec.from_dict({"id": 0, **b0}), *gen.extras(rng)]
        # solve the rounded instance that gets recorded, so it replays exactly
        Q = aucsim.QuerySpace.from_dict(normalize(Q.to_dict()))
        specs = [aucsim.BidderSpec.from_dict(normalize(s.to_dict())) for s in specs]
    if sorted(s.id for s in specs) != list(range(Q.n_participants)):
        raise ValidationError("bidder ids must be 0..n matching the conversion columns")
    specs.sort(key=lambda s: s.id)
    mode = block.get("auctioneer")
    if mode:
        res = aucsim.auctioneer_best_reserves(Q, specs, mode, grid=_grid(sc, 64))
        policy, bids, out = res.policy, res.bids, res.outcome
    else:
        policy = aucsim.ReservePolicy.from_dict(block.get("reserves", {}), Q.n_participants, Q.m)
        fp = aucsim.tcpa_fixed_point(Q, specs, policy)
        bids = fp.bids
        out = aucsim.run_auction(Q, bids, policy, values=[s.value for s in specs])
    status = {}
    for s in specs:
        if s.format == aucsim.TCPA:
            br = aucsim.tcpa_best_response(Q, bids, policy.table, s.id, s.submitted, s.value)
            status[str(s.id)] = {"binding": br.binding, "slack": br.slack, "avg_cost": br.avg_cost}
    rows = [
        {"query": int(x), "winner": int(out.winners[x]), "price": float(out.prices[x])}
        for x in range(Q.m)
    ]
    outputs = {
        "instance": {**Q.to_dict(), "bidders": [s.to_dict() for s in specs]},
        "reserves": policy.to_dict(),
        "final_bids": bids,
        "outcome": out.to_dict(),
        "tcpa_status": status,
    }
    return CommandResult(outputs, {"revenue_minus_spend": out.revenue - float(out.spend.sum())}, csv_rows=rows, csv_fields=("query", "winner", "price"))


COMMANDS = {
    "solve-bid": cmd_solve,
    "equilibrium": cmd_equilibrium,
    "verify": cmd_verify,
    "sweep": cmd_sweep,
    "simulate": cmd_simulate,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="autobidlab", description="Auto-bidding format and reserve-price laboratory.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--scenario", help="scenario JSON file")
        s.add_argument("--seed", type=int, help="RNG seed (unsigned 64-bit)")
        s.add_argument("--out", help="directory for result.json and rows.csv")
        s.add_argument("--grid", type=int, help="grid size (type grid, reserve grid, ...)")
        s.add_argument("--tol", type=float, help="assertion tolerance")
        s.add_argument("--timing", action="store_true", help="include runtime_ms in the result")
        s.add_argument("--landscape", help="landscape shorthand, e.g. power:2")
        s.add_argument("--valuation", help="valuation shorthand, e.g. uniform:0:1")
        s.add_argument("--beta", type=float, help="runner-up bid factor for the competition block")
        s.add_argument("--param", action="append", default=[], metavar="KEY=VALUE", help="extra parameter (JSON value)")
        if name == "solve-bid":
            s.add_argument("--op")
            for k in ("v", "T", "r", "lo", "hi"):
                s.add_argument(f"--{k}", type=float)
        elif name == "equilibrium":
            s.add_argument("--regime")
        elif name == "verify":
            s.add_argument("--check")
            s.add_argument("--queries", type=int)
            s.add_argument("--extra", type=int)
            s.add_argument("--trials", type=int)
        elif name == "sweep":
            s.add_argument("--kind")
            s.add_argument("--values", help="comma-separated sweep values")
    return p


def _scenario_from_args(args) -> Scenario:
    if args.scenario:
        sc = Scenario.load(args.scenario, args.command)
    else:
        sc = Scenario.from_dict({}, args.command)
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ValidationError("seed must be an unsigned 64-bit integer")
        sc.seed = args.seed
    if args.landscape:
        sc.landscape = args.landscape
    if args.valuation:
        sc.valuation = args.valuation
    if args.beta is not None:
        sc.competition = {"beta": args.beta}
    if args.grid is not None:
        sc.params["grid"] = args.grid
    if args.tol is not None:
        sc.tolerances["tol"] = args.tol
    for name in ("op", "v", "T", "r", "lo", "hi", "regime", "check", "queries", "extra", "trials", "kind"):
        val = getattr(args, name, None)
        if val is not None:
            sc.params[name] = val
    if getattr(args, "values", None):
        try:
            sc.params["values"] = [json.loads(x) for x in args.values.split(",")]
        except json.JSONDecodeError:
            raise ValidationError("--values must be comma-separated numbers") from None
    for kv in args.param:
        key, sep, raw = kv.partition("=")
        if not sep:
            raise ValidationError(f"--param expects KEY=VALUE, got {kv!r}")
        try:
            sc.params[key] = json.loads(raw)
        except json.JSONDecodeError:
            sc.params[key] = raw
    return sc


def _write(out_dir: Optional[str], name: str, text: str) -> None:
    if out_dir:
        d = Path(out_dir)
        d.mkdir(parents=True, exist_ok=True)
        (d / name).write_text(text)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_INVALID
    t0 = time.perf_counter()
    out_dir = args.out
    try:
        sc = _scenario_from_args(args)
        out_dir = out_dir or sc.output.get("dir")
        result = COMMANDS[args.command](sc)
    except AutobidError as exc:
        code = EXIT_CLAIM if isinstance(exc, ClaimViolation) else EXIT_NUMERIC if isinstance(exc, NumericError) else EXIT_INVALID
        err = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
        if isinstance(exc, ClaimViolation) and exc.instance is not None:
            err["instance"] = exc.instance
        sys.stderr.write(dumps(err))
        _write(out_dir, "error.json", dumps(err))
        return code
    doc = {
        "scenario": sc.to_dict(),
        "outputs": result.outputs,
        "residuals": result.residuals,
        "status": "fail" if result.failed else "pass",
    }
    if result.failed:
        doc["failures"] = result.failed
    if args.timing:
        doc["runtime_ms"] = round((time.perf_counter() - t0) * 1e3, 3)
    text = dumps(doc)
    sys.stdout.write(text)
    _write(out_dir, "result.json", text)
    if result.csv_rows is not None:
        _write(out_dir, "rows.csv", rows_to_csv(result.csv_fields, result.csv_rows))
    return EXIT_CLAIM if result.failed else EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
