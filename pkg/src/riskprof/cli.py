"""``riskprof`` command line.

Every successful command prints one JSON report on stdout::

    {"command": [...], "digest": "<sha256 of the input file>", "seed": 0,
     "results": {...}, "timing_ms": 12.3}

Validation problems exit with status 2 and an error object on stderr;
anything else that goes wrong exits with status 1.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from typing import Optional, Sequence

from . import instance as inst_io
from .contingency_sampler import WalkConfig, average_objective
from .errors import DimensionMismatch, RiskProfError
from .greedy_flow import worst_case_two_stock
from .k_stock import (
    cents_worst_case_exact,
    lp_worst_case_exact,
    optimal_portfolio_fixed_k,
    striping_worst_case,
)
from .oracle import exhaustive_two_stock_optimum, reference_objective
from .portfolio_sweep import sweep_optimal_portfolio
from .return_model import Case, Objective, Portfolio, ReturnGrid

log = logging.getLogger("riskprof")


class UsageError(RiskProfError):
    pass


def _read(path: str) -> bytes:
    try:
        with open(path, "rb") as fh:
            return fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}", path=path) from None


def _instance(args) -> tuple:
    data = _read(args.stocks)
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError:
        raise UsageError(f"{args.stocks} is not UTF-8 text") from None
    return inst_io.loads(text, floor=getattr(args, "floor", 0.0)), data


def _portfolio(text: str, k: int) -> Portfolio:
    try:
        weights = [float(t) for t in text.replace(" ", "").split(",") if t]
    except ValueError:
        raise UsageError(f"cannot parse portfolio {text!r}") from None
    if len(weights) != k:
        raise DimensionMismatch(f"portfolio has {len(weights)} weights for {k} stocks")
    return Portfolio(weights)


def _objective(text: str) -> Objective:
    try:
        return Objective.parse(text)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _need_two(inst) -> None:
    if inst.k != 2:
        raise DimensionMismatch(f"this command needs exactly two stocks, got {inst.k}")


def cmd_validate(args):
    inst, data = _instance(args)
    return data, {
        "valid": True,
        "k": inst.k,
        "m": inst.grid.m,
        "stocks": [s.name for s in inst.stocks],
    }


def cmd_eval(args):
    inst, data = _instance(args)
    obj = _objective(args.objective)
    pf = _portfolio(args.x, inst.k)
    if obj.case is Case.AVERAGE:
        raise UsageError("use the 'avg' command for average-case objectives")
    if inst.k == 2:
        value = worst_case_two_stock(inst.stocks[0], inst.stocks[1], pf, args.alpha, obj)
        method = "greedy_flow"
    else:
        value = lp_worst_case_exact(inst.stocks, pf, args.alpha, obj)
        method = "lp_exact"
    res = {"objective": obj.name, "portfolio": pf.tolist(), "value": value, "method": method}
    if args.oracle:
        if inst.k == 2:
            from .oracle import reference_max_mass
            ref = reference_objective(inst.stocks[0], inst.stocks[1], pf, args.alpha, obj,
                                      flow=lambda spec: reference_max_mass(*inst.stocks, spec))
        else:
            ref = lp_worst_case_exact(inst.stocks, pf, args.alpha, obj)
        res["oracle_value"] = ref
    return data, res


def _write_plot(path: str, profile, objective: Objective) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# x1_lo x1_hi {objective.name}\n")
        for lo, hi, v in profile:
            fh.write(f"{lo!r} {hi!r} {v!r}\n")


def cmd_optimize(args):
    inst, data = _instance(args)
    _need_two(inst)
    obj = _objective(args.objective)
    r = sweep_optimal_portfolio(inst.stocks[0], inst.stocks[1], args.alpha, obj)
    res = {
        "objective": obj.name,
        "portfolio": r.portfolio.tolist(),
        "value": r.value,
        "x1_interval": list(r.x1_interval),
        "slope_interval": [_finite(s) for s in r.slope_interval],
    }
    if args.plot:
        _write_plot(args.plot, r.profile, obj)
        res["plot"] = args.plot
    if args.oracle:
        e = exhaustive_two_stock_optimum(inst.stocks[0], inst.stocks[1], args.alpha, obj)
        res["oracle"] = {"portfolio": e.portfolio.tolist(), "value": e.value}
    return data, res


def _finite(v: float):
    # JSON has no infinities
    return v if v == v and abs(v) != float("inf") else ("-inf" if v < 0 else "inf")


def cmd_eval_k(args):
    inst, data = _instance(args)
    obj = _objective(args.objective)
    pf = _portfolio(args.x, inst.k)
    if args.striping is not None:
        value = striping_worst_case(inst.stocks, pf, args.alpha, args.striping, obj)
        method = {"striping": args.striping}
    elif args.cents is not None:
        value = cents_worst_case_exact(inst.stocks, pf, args.alpha, args.cents, obj)
        method = {"cents": args.cents}
    else:
        value = lp_worst_case_exact(inst.stocks, pf, args.alpha, obj)
        method = {"exact": True}
    res = {"objective": obj.name, "portfolio": pf.tolist(), "value": value, "method": method}
    if args.oracle:
        res["oracle_value"] = lp_worst_case_exact(inst.stocks, pf, args.alpha, obj)
    return data, res


def cmd_optimize_k(args):
    inst, data = _instance(args)
    obj = _objective(args.objective)
    mode = "cents" if args.mode == "cents" else "candidate_hyperplanes"
    r = optimal_portfolio_fixed_k(inst.stocks, args.alpha, obj, mode=mode, c=args.c)
    return data, {
        "objective": obj.name,
        "mode": mode,
        "portfolio": r.portfolio.tolist(),
        "value": r.value,
        "candidates": r.candidates,
        "regions": r.regions,
    }


def cmd_avg(args):
    inst, data = _instance(args)
    _need_two(inst)
    obj = _objective(args.objective)
    if obj.case is not Case.AVERAGE:
        raise UsageError(f"{obj.name} is not an average-case objective")
    pf = _portfolio(args.x, 2)
    cfg = WalkConfig(steps_per_sample=args.steps, rng_seed=args.seed)
    est = average_objective(inst.stocks[0], inst.stocks[1], args.alpha, pf, obj,
                            args.eps, args.delta, cfg)
    return data, {
        "objective": obj.name,
        "portfolio": pf.tolist(),
        "estimate": est.value,
        "N": est.n_samples,
        "chains": est.chains,
        "steps_per_sample": est.steps_per_sample,
    }


def cmd_ingest(args):
    data = _read(args.prices)
    series = inst_io.read_prices_csv(data.decode("utf-8"))
    inst = inst_io.ingest(series, ReturnGrid(args.mu, args.m1, args.m2), args.period)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(inst_io.dumps(inst))
    return data, {"instance": inst.to_dict(), "out": args.out}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="riskprof",
                                description="Risk profiles of stock portfolios with unknown joint distribution.")
    p.add_argument("--seed", type=int, default=0, help="RNG seed (RISKPROF_SEED overrides)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    # --seed is also accepted after the subcommand
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="RNG seed")

    def stocks(sp, alpha=True):
        sp.add_argument("--stocks", required=True, help="instance JSON file")
        if alpha:
            sp.add_argument("--alpha", type=float, required=True, help="target return in percent")
        sp.add_argument("--oracle", action="store_true", help=argparse.SUPPRESS)

    sp = sub.add_parser("validate", parents=[common], help="check an instance file")
    stocks(sp, alpha=False)
    sp.add_argument("--floor", type=float, default=0.0,
                    help="minimum allowed value of nonzero probabilities")
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("eval", parents=[common], help="objective value at a fixed portfolio")
    stocks(sp)
    sp.add_argument("--x", required=True, help="comma-separated weights")
    sp.add_argument("--objective", default="ra_w")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("optimize", parents=[common], help="optimal two-stock portfolio")
    stocks(sp)
    sp.add_argument("--objective", default="ra_w")
    sp.add_argument("--plot", help="write objective value vs. x1 as gnuplot data")
    sp.set_defaults(func=cmd_optimize)

    sp = sub.add_parser("eval-k", parents=[common], help="k-stock evaluation by LP")
    stocks(sp)
    sp.add_argument("--x", required=True)
    sp.add_argument("--objective", default="ra_w")
    g = sp.add_mutually_exclusive_group()
    g.add_argument("--exact", action="store_true", help="full-table LP (default)")
    g.add_argument("--striping", type=float, metavar="EPS")
    g.add_argument("--cents", type=int, metavar="C")
    sp.set_defaults(func=cmd_eval_k)

    sp = sub.add_parser("optimize-k", parents=[common], help="k-stock portfolio search")
    stocks(sp)
    sp.add_argument("--objective", default="ra_w")
    sp.add_argument("--mode", choices=["cents", "hyperplanes"], default="cents")
    sp.add_argument("--c", type=int, default=100, help="units per dollar in cents mode")
    sp.set_defaults(func=cmd_optimize_k)

    sp = sub.add_parser("avg", parents=[common], help="average-case estimate by polytope sampling")
    stocks(sp)
    sp.add_argument("--x", required=True)
    sp.add_argument("--objective", default="ra_a")
    sp.add_argument("--eps", type=float, default=0.05)
    sp.add_argument("--delta", type=float, default=0.1)
    sp.add_argument("--steps", type=int, default=None, help="walk steps per sample")
    sp.set_defaults(func=cmd_avg)

    sp = sub.add_parser("ingest", parents=[common], help="build an instance from a prices CSV")
    sp.add_argument("--prices", required=True, help="CSV with header date,ticker,price")
    sp.add_argument("--mu", type=float, default=1.0)
    sp.add_argument("--m1", type=int, default=0)
    sp.add_argument("--m2", type=int, default=200)
    sp.add_argument("--period", type=int, default=1, help="observations per return period")
    sp.add_argument("--out", help="also write the instance JSON here")
    sp.set_defaults(func=cmd_ingest)
    return p


def run_command(argv: Optional[Sequence[str]] = None) -> tuple[int, Optional[dict]]:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="riskprof: %(levelname)s: %(message)s")
    env_seed = os.environ.get("RISKPROF_SEED")
    if env_seed is not None:
        try:
            args.seed = int(env_seed)
        except ValueError:
            print(json.dumps({"error": "UsageError", "message": f"RISKPROF_SEED={env_seed!r}"}),
                  file=sys.stderr)
            return 2, None
    start = time.perf_counter()
    try:
        data, results = args.func(args)
    except RiskProfError as err:
        print(json.dumps(err.to_dict(), default=str), file=sys.stderr)
        return 2, None
    except Exception as exc:  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        print(json.dumps({"error": "InternalError", "message": f"{type(exc).__name__}: {exc}"}),
              file=sys.stderr)
        return 1, None
    report = {
        "command": argv,
        "digest": hashlib.sha256(data).hexdigest(),
        "seed": args.seed,
        "results": results,
        "timing_ms": round(1000 * (time.perf_counter() - start), 3),
    }
    print(json.dumps(report, indent=2))
    return 0, report


def main(argv: Optional[Sequence[str]] = None) -> int:
    return run_command(argv)[0]


if __name__ == "__main__":
    sys.exit(main())
