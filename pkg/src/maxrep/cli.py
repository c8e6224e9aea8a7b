"""Command-line front end: ``python -m maxrep <subcommand> ...``.

Exit codes: 0 success, 2 configuration or usage error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import first_passage as fp
from .clark_ocone import SIGNS, hedge_table, reconstruct
from .io import ConfigError, RunConfig, load_config, write_csv, write_json
from .malliavin import IntensityHitZero
from .model import HardInvalid
from .paths import simulate_batch
from .pricing import price_lookback

METHODS = {"gaver": "gaver_stehfest", "talbot": "talbot"}
MODES = {"closed": "closed_form", "nested": "nested_mc", "both": "both"}


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="TOML run configuration")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--seed", type=int, help="override rng.seed")
    common.add_argument("--paths", type=int, help="override run.paths")
    common.add_argument("--inner", type=int, help="override run.inner")
    common.add_argument("--workers", type=int, help="override run.workers")
    common.add_argument("--method", choices=sorted(METHODS), default="gaver")
    common.add_argument("--clamp", action="store_true", help="floor the intensity instead of failing")

    p = argparse.ArgumentParser(prog="maxrep", description=__doc__)
    sub = p.add_subparsers(dest="cmd", required=True)
    sub.add_parser("simulate", parents=[common], help="dump simulated paths and events")
    pr = sub.add_parser("price", parents=[common], help="Monte Carlo lookback price")
    pr.add_argument("--payoff", choices=["fixed", "floating"])
    pr.add_argument("--strike", type=float)
    pr.add_argument("--discount", type=float, help="discount rate (default mu)")
    v = sub.add_parser("verify-clark-ocone", parents=[common], help="rebuild M_T and report residuals")
    v.add_argument("--mode", choices=sorted(MODES), default="nested")
    v.add_argument("--sign", choices=sorted(SIGNS), default="theorem")
    sub.add_parser("first-passage", parents=[common], help="closed-form tails vs Monte Carlo")
    sub.add_parser("constants", parents=[common], help="print exit-time constants")
    h = sub.add_parser("hedge", parents=[common], help="integrands along one realised path")
    h.add_argument("--mode", choices=["closed", "nested"], default="nested")
    h.add_argument("--path-id", type=int, default=0)
    il = sub.add_parser("invert-laplace", help="numerical inverse Laplace of a built-in transform")
    il.add_argument("--fn", choices=sorted(fp.TRANSFORMS), required=True)
    il.add_argument("--t", type=float, required=True)
    il.add_argument("--method", choices=sorted(METHODS), default="gaver")
    il.add_argument("--order", type=int)
    il.add_argument("--out", default=None)
    return p


def _load(args) -> RunConfig:
    return load_config(args.config, {"rng.seed": args.seed, "run.paths": args.paths,
                                     "run.inner": args.inner, "run.workers": args.workers})


def cmd_simulate(args, cfg: RunConfig) -> None:
    b = simulate_batch(cfg.model, cfg.params, cfg.spec, cfg.grid, cfg.seed, range(cfg.paths),
                       "paths", keep_events=True)
    t = cfg.grid.times
    zeros = np.zeros((b.n_paths, 1))
    ws = np.hstack([zeros, np.cumsum(b.w_s_incr, axis=1)])
    w = np.hstack([zeros, np.cumsum(b.w_incr, axis=1)]) if b.w_incr is not None else np.zeros_like(ws)
    m = b.m
    rows = ((i, t[k], ws[i, k], w[i, k], b.lam[i, k], b.x[i, k], m[i, k])
            for i in range(b.n_paths) for k in range(t.size))
    out = Path(args.out)
    write_csv(out / "paths.csv", ["path_id", "t", "w_s", "w", "lambda", "x", "m"], rows, cfg.sha256)
    ev = ((i, e.time, e.z, e.accepted, e.jump_applied) for i in range(b.n_paths) for e in b.events[i])
    write_csv(out / "events.csv", ["path_id", "time", "z", "accepted", "jump_applied"], ev, cfg.sha256)
    print(f"simulated {b.n_paths} {cfg.model} paths, mean M_T = {b.M_T.mean():.6f}")


def cmd_price(args, cfg: RunConfig) -> None:
    opt = cfg.section("price")
    payoff = args.payoff or opt.get("payoff", "fixed")
    strike = args.strike if args.strike is not None else float(opt.get("strike", cfg.params.s0))
    disc = args.discount if args.discount is not None else opt.get("discount")
    res = price_lookback(cfg.model, cfg.params, cfg.spec, cfg.grid, cfg.paths, cfg.seed, payoff, strike,
                         disc, opt.get("monitoring", "continuous"))
    write_json(Path(args.out) / "price.json", res.__dict__, cfg)
    print(f"{payoff} lookback price = {res.price:.6f} +/- {res.se:.6f}")


def cmd_verify(args, cfg: RunConfig) -> None:
    modes = ["nested_mc", "closed_form"] if args.mode == "both" else [MODES[args.mode]]
    summary = {}
    for mode in modes:
        rep = reconstruct(cfg.model, cfg.params, cfg.spec, cfg.grid, cfg.paths, mode, args.sign,
                          cfg.inner, cfg.n_ef, cfg.seed, cfg.workers, args.clamp)
        name = "residuals.csv" if mode == modes[0] else f"residuals_{mode}.csv"
        rows = ((i, rep.F[i], rep.F_hat[i], rep.residual[i]) for i in range(rep.n_paths))
        write_csv(Path(args.out) / name, ["path_id", "F", "F_hat", "residual"], rows, cfg.sha256)
        summary[mode] = rep.summary()
        print(f"[{mode}] ef_hat={rep.ef_hat:.6f}+/-{rep.ef_se:.6f} resid_mean={rep.resid_mean:.3e} "
              f"(se {rep.resid_se:.3e}) resid_var={rep.resid_var:.3e} corr={rep.corr:.4f}")
    payload = summary[modes[0]] if len(modes) == 1 else {"modes": summary}
    write_json(Path(args.out) / "summary.json", payload, cfg)


def cmd_first_passage(args, cfg: RunConfig) -> None:
    opt = cfg.section("first_passage")
    p = cfg.params
    bs = [float(v) for v in opt.get("b", [0.1, 0.2, 0.3])]
    es = [float(v) for v in opt.get("e", [p.lambda0] if cfg.model == "cox" else [-math.inf])]
    method = METHODS[args.method]
    try:
        if cfg.model == "cox":
            consts = fp.alpha_constants_cox(p, cfg.spec, float(cfg.section("constants").get("alpha1", 2.0)))
        else:
            consts = fp.alpha_constants_hawkes(p, cfg.spec)
    except fp.ClosedFormUnavailable as exc:
        print(f"closed form unavailable: {exc}", file=sys.stderr)
        consts = None
    rows = []
    for b in bs:
        for e in es:
            cf, clamped = math.nan, False
            if consts is not None:
                q = fp.ExitTimeQuery(0.0, p.T, 0.0, p.lambda0, m_t=0.0, b=b, e=e)
                tail = fp.bar_F_cox(q, consts, method) if cfg.model == "cox" else fp.tail_supX_hawkes(q, consts, method)
                cf, clamped = tail.value, tail.clamped
            mc = fp.mc_first_passage(cfg.model, p, cfg.spec, b, e, cfg.grid, cfg.paths, cfg.seed)
            rows.append((b, e, cf, mc.value, mc.se, clamped))
            print(f"b={b:g} e={e:g} closed_form={cf:.6g} mc={mc.value:.6g}+/-{mc.se:.2g}")
    write_csv(Path(args.out) / "first_passage.csv",
              ["threshold_b", "threshold_e", "closed_form", "mc_estimate", "mc_se", "clamped"], rows, cfg.sha256)


def cmd_constants(args, cfg: RunConfig) -> None:
    if cfg.model == "hawkes":
        c = fp.alpha_constants_hawkes(cfg.params, cfg.spec)
    else:
        c = fp.alpha_constants_cox(cfg.params, cfg.spec, float(cfg.section("constants").get("alpha1", 2.0)))
    res = c.identity_residual(cfg.params)
    print(f"alpha1={c.alpha1:.6f} alpha2={c.alpha2:.6g} alpha={c.alpha:.6f} identity_residual={res:.1e}")
    write_json(Path(args.out) / "constants.json",
               {"alpha1": c.alpha1, "alpha2": c.alpha2, "alpha3": c.alpha3, "alpha": c.alpha,
                "model": c.model, "J": c.J, "identity_residual": res}, cfg)


def cmd_hedge(args, cfg: RunConfig) -> None:
    tab = hedge_table(cfg.model, cfg.params, cfg.spec, cfg.grid, args.path_id, cfg.seed, cfg.inner,
                      MODES[args.mode], args.clamp)
    write_csv(Path(args.out) / "hedge.csv", ["t", "phi", "psi_weighted"], tab.tolist(), cfg.sha256)
    print(f"hedge table for path {args.path_id}: {tab.shape[0]} rows")


def cmd_invert(args) -> None:
    v = fp.inverse_laplace(fp.TRANSFORMS[args.fn], args.t, METHODS[args.method], args.order)
    print(repr(v))
    if args.out:
        write_json(Path(args.out) / "invert_laplace.json",
                   {"fn": args.fn, "t": args.t, "method": METHODS[args.method], "value": v})


COMMANDS = {"simulate": cmd_simulate, "price": cmd_price, "verify-clark-ocone": cmd_verify,
            "first-passage": cmd_first_passage, "constants": cmd_constants, "hedge": cmd_hedge}


def run_cli(argv: list[str] | None = None) -> int:
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.cmd == "invert-laplace":
            cmd_invert(args)
        else:
            COMMANDS[args.cmd](args, _load(args))
    except (ConfigError, HardInvalid, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (fp.EvaluationFailed, fp.ClosedFormUnavailable, IntensityHitZero, FloatingPointError,
            OverflowError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    return 0


def main() -> None:
    sys.exit(run_cli())
