"""Command line: ``racadmm {solve,mip,analyze,gen,bench}``.

Exit codes: 0 success, 1 error, 2 stopped by an iteration or time limit.
Every JSON output carries the configuration echo, the seed and the package
version; wall-clock values sit under ``timing`` so reruns compare equal
everywhere else.  ``RACADMM_LOG`` sets the log level (default WARNING).
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import itertools
import json
import logging
import os
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .admm import Mode, SolverOptions, Status, solve, write_trace_csv
from .blocks import enumerate_partitions
from .generators import (GraphSpec, MarkowitzSpec, QapSpec, RandomQpSpec, gen_markowitz, gen_markowitz_like,
                         gen_maxbisection, gen_maxcut, gen_qap, gen_random_lcqp, load_csv_matrix, load_edge_list)
from .mip import MipOptions, solve_mip
from .problem import ProblemError, load_problem, save_problem
from . import linalg, spectral

log = logging.getLogger("racadmm")

EXIT_OK, EXIT_ERROR, EXIT_LIMIT = 0, 1, 2

SOLVER_KEYS = {"mode", "p", "beta", "eps", "eps_dual", "max_iter", "max_time", "seed", "grouping",
               "local_eq_rows", "local_ineq_rows", "local_bounds", "split_free", "scale_rows"}
MIP_KEYS = {"lam", "np_min", "np_max", "n_trial", "feas_eps", "mip_max_time", "mip_max_iter",
            "max_no_improve", "target", "kind", "init"}


class CliError(Exception):
    pass


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if hasattr(o, "value"):
        return o.value
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _write_json(payload: dict, out: Optional[str]) -> None:
    text = json.dumps(payload, indent=1, default=_json_default, allow_nan=True)
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
    else:
        sys.stdout.write(text + "\n")


def _envelope(command: str, config: dict, seed: Optional[int], body: dict, timing: dict) -> dict:
    return {"command": command, "version": __version__, "seed": seed, "config": config,
            "result": body, "timing": timing}


def _load_config(path: Optional[str], allowed: set) -> dict:
    if not path:
        return {}
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise CliError(f"config file {path} does not exist")
    except json.JSONDecodeError as exc:
        raise CliError(f"{path}: invalid JSON ({exc})")
    if not isinstance(data, dict):
        raise CliError("config file must hold a JSON object")
    unknown = set(data) - allowed
    if unknown:
        raise CliError(f"unknown config keys: {sorted(unknown)}")
    return data


def _merge(config: dict, args: argparse.Namespace, keys: set) -> dict:
    """Config-file values overridden by explicitly given flags."""
    merged = dict(config)
    for k in keys:
        v = getattr(args, k, None)
        if v is not None:
            merged[k] = v
    return merged


def _solver_options(cfg: dict) -> SolverOptions:
    kw = {k: v for k, v in cfg.items() if k in SOLVER_KEYS}
    if kw.get("grouping") in ("none", None):
        kw.pop("grouping", None)
    return SolverOptions(**kw)


def _add_solver_flags(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--config", help="JSON file with option defaults (flags win)")
    sp.add_argument("--mode", choices=[m.value for m in Mode])
    sp.add_argument("--p", type=int, help="number of blocks")
    sp.add_argument("--beta", type=float)
    sp.add_argument("--eps", type=float)
    sp.add_argument("--eps-dual", dest="eps_dual", type=float)
    sp.add_argument("--max-iter", dest="max_iter", type=int)
    sp.add_argument("--max-time", dest="max_time", type=float)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--grouping", choices=["none", "auto"])
    sp.add_argument("--scale-rows", dest="scale_rows", action="store_const", const=True)
    sp.add_argument("--out", help="result JSON path (stdout if omitted)")


# --------------------------------------------------------------------------
# subcommands


def cmd_solve(args: argparse.Namespace) -> int:
    cfg = _merge(_load_config(args.config, SOLVER_KEYS), args, SOLVER_KEYS)
    problem = load_problem(args.manifest)
    opts = _solver_options(cfg)
    started = _dt.datetime.now(_dt.timezone.utc).isoformat()
    t0 = time.perf_counter()
    res = solve(problem, opts)
    elapsed = time.perf_counter() - t0
    if args.trace:
        write_trace_csv(res.trace, args.trace)
    body = res.to_dict()
    body["problem"] = problem.name
    _write_json(_envelope("solve", opts.to_dict(), opts.seed, body,
                          {"started_at": started, "elapsed_s": elapsed}), args.out)
    log.info("status %s after %d iterations", res.status.value, res.iterations)
    if res.status is Status.OPTIMAL:
        return EXIT_OK
    if res.status in (Status.ITER_LIMIT, Status.TIME_LIMIT):
        return EXIT_LIMIT
    return EXIT_ERROR


def cmd_mip(args: argparse.Namespace) -> int:
    allowed = SOLVER_KEYS | MIP_KEYS
    cfg = _merge(_load_config(args.config, allowed), args, allowed)
    problem = load_problem(args.manifest)
    solver_cfg = {k: v for k, v in cfg.items() if k in SOLVER_KEYS}
    meta = problem.meta or {}
    solver_cfg.setdefault("beta", meta.get("suggested_beta", 1.0))
    if meta.get("suggested_p") is not None:
        solver_cfg.setdefault("p", meta["suggested_p"])
    opts = _solver_options(solver_cfg)
    mkw = {k: v for k, v in cfg.items() if k in MIP_KEYS}
    if "mip_max_time" in mkw:
        mkw["max_time"] = mkw.pop("mip_max_time")
    if "mip_max_iter" in mkw:
        mkw["max_iter"] = mkw.pop("mip_max_iter")
    mip = MipOptions(**mkw)
    started = _dt.datetime.now(_dt.timezone.utc).isoformat()
    t0 = time.perf_counter()
    res = solve_mip(problem, opts, mip)
    elapsed = time.perf_counter() - t0
    body = res.to_dict()
    times = [e.pop("time") for e in body["events"]]
    found_at = body.pop("found_at")
    if args.events:
        with open(args.events, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["time_s", "iteration", "objective"])
            for t, e in zip(times, body["events"]):
                w.writerow([f"{t:.6f}", e["iteration"], repr(e["objective"])])
    config = {"solver": opts.to_dict(), "mip": mip.to_dict()}
    _write_json(_envelope("mip", config, opts.seed, body,
                          {"started_at": started, "elapsed_s": elapsed, "found_at_s": found_at,
                           "event_times_s": times}), args.out)
    return EXIT_OK if res.best.feasible else EXIT_LIMIT


def cmd_analyze(args: argparse.Namespace) -> int:
    if args.fixture == "example2":
        A = spectral.example2_matrix(args.gamma)
        H = np.zeros((6, 6))
        p = args.p if args.p is not None else 3
    elif args.manifest:
        H, A, _, _ = spectral.equality_data(load_problem(args.manifest))
        p = args.p if args.p is not None else 2
    else:
        raise CliError("give a manifest or --fixture example2")
    n, m = H.shape[0], A.shape[0]
    beta = args.beta if args.beta is not None else 1.0
    if args.mode == "rac":
        report = spectral.analyze(H, A, beta, p, samples=args.samples, seed=args.seed or 0)
        body = report.to_dict()
        body["mode"] = "rac"
    else:
        parts = enumerate_partitions(n, p)
        if not 0 <= args.partition < len(parts):
            raise CliError(f"--partition must lie in 0..{len(parts) - 1}")
        u = parts[args.partition]
        em = spectral.expected_maps(H, A, beta, n, p, partition=u, kronecker=(n + m) ** 2 <= spectral.KRONECKER_CAP)
        rho_M = linalg.eigenvalues(em.M, symmetric=False).spectral_radius
        rho_T = linalg.eigenvalues(em.T, symmetric=False).spectral_radius if em.T is not None else None
        body = {"mode": "rp", "partition": u.to_lists(), "n": n, "m": m, "p": p, "beta": beta,
                "rho_M": rho_M, "rho_T": rho_T,
                "verdicts": {"expected_convergent": rho_M < 1.0,
                             "almost_sure_convergent": None if rho_T is None else rho_T < 1.0}}
    config = {"fixture": args.fixture, "gamma": args.gamma, "manifest": args.manifest, "p": p, "beta": beta,
              "mode": args.mode, "partition": args.partition, "samples": args.samples}
    _write_json(_envelope("analyze", config, args.seed, body, {}), args.out)
    return EXIT_OK


def _read_graph(args) -> GraphSpec:
    if not args.edges:
        raise CliError("graph generators need --edges FILE")
    return load_edge_list(args.edges, n_vertices=args.n)


def cmd_gen(args: argparse.Namespace) -> int:
    kind = args.kind
    seed = args.seed if args.seed is not None else 0
    if kind == "random":
        problem = gen_random_lcqp(RandomQpSpec(n=args.n or 50, m_eq=args.m_eq, m_ineq=args.m_ineq,
                                               density=args.density, condition=args.condition, seed=seed))
    elif kind == "markowitz-like":
        problem = gen_markowitz_like(args.n or 300, seed=seed, condition=args.condition)
    elif kind == "markowitz":
        if not args.returns:
            raise CliError("markowitz needs --returns CSV (periods x assets)")
        R = load_csv_matrix(args.returns, skip_header=args.skip_header)
        problem = gen_markowitz(MarkowitzSpec(R=R, tau=args.tau, cardinality=args.cardinality,
                                              low_rank=args.low_rank))
    elif kind == "maxcut":
        problem = gen_maxcut(_read_graph(args))
    elif kind == "maxbisection":
        problem = gen_maxbisection(_read_graph(args))
    elif kind == "qap":
        if args.flow and args.distance:
            F = load_csv_matrix(args.flow, skip_header=args.skip_header)
            D = load_csv_matrix(args.distance, skip_header=args.skip_header)
        else:
            r = args.r or 4
            rng = np.random.default_rng(seed)
            F = rng.integers(0, 10, (r, r)).astype(float)
            D = rng.integers(1, 10, (r, r)).astype(float)
            F, D = F + F.T, D + D.T
            np.fill_diagonal(F, 0.0)
            np.fill_diagonal(D, 0.0)
        problem = gen_qap(QapSpec(F, D, relaxed=not args.binary))
    else:  # pragma: no cover - argparse restricts choices
        raise CliError(f"unknown generator {kind}")
    path = save_problem(problem, args.out_dir, stem=args.stem)
    sys.stdout.write(f"{path}\n")
    return EXIT_OK


BENCH_COLUMNS = ("problem", "n", "mode", "p", "beta", "eps", "seed", "status", "iterations", "runtime_s",
                 "r_prim", "r_dual", "objective")


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def _ints(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()]


def cmd_bench(args: argparse.Namespace) -> int:
    if args.manifest:
        problem = load_problem(args.manifest)
    else:
        problem = gen_markowitz_like(args.n, seed=args.seed or 0)
    modes = [Mode(m) for m in args.modes.split(",")]
    rows = []
    for mode, p, beta, eps in itertools.product(modes, _ints(args.p_list), _floats(args.beta_list),
                                                _floats(args.eps_list)):
        opts = SolverOptions(mode=mode, p=p, beta=beta, eps=eps, max_iter=args.max_iter,
                             max_time=args.max_time, seed=args.seed or 0, record_trace=False)
        t0 = time.perf_counter()
        res = solve(problem, opts)
        rows.append({
            "problem": problem.name or "instance", "n": problem.n, "mode": mode.value, "p": p, "beta": beta,
            "eps": eps, "seed": opts.seed, "status": res.status.value, "iterations": res.iterations,
            "runtime_s": f"{time.perf_counter() - t0:.4f}", "r_prim": repr(res.residuals.r_prim),
            "r_dual": repr(res.residuals.r_dual), "objective": repr(res.objective),
        })
    fh = open(args.csv, "w", newline="", encoding="utf-8") if args.csv else sys.stdout
    try:
        w = csv.DictWriter(fh, fieldnames=BENCH_COLUMNS)
        w.writeheader()
        w.writerows(rows)
    finally:
        if args.csv:
            fh.close()
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="racadmm", description="Randomly assembled multi-block ADMM for QPs")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve a continuous problem manifest")
    s.add_argument("manifest")
    _add_solver_flags(s)
    s.add_argument("--trace", help="per-iteration CSV path")
    s.set_defaults(func=cmd_solve)

    m = sub.add_parser("mip", help="solve-perturb-solve search on a binary/mixed problem")
    m.add_argument("manifest")
    _add_solver_flags(m)
    m.add_argument("--kind", choices=["auto", "reassign", "bit_flip", "swap_balanced", "qap_super_swap"])
    m.add_argument("--lam", type=float)
    m.add_argument("--n-trial", dest="n_trial", type=float)
    m.add_argument("--target", type=float)
    m.add_argument("--mip-max-time", dest="mip_max_time", type=float)
    m.add_argument("--mip-max-iter", dest="mip_max_iter", type=int)
    m.add_argument("--events", help="improvement-event CSV path")
    m.set_defaults(func=cmd_mip)

    a = sub.add_parser("analyze", help="spectral convergence report for an equality-constrained QP")
    a.add_argument("manifest", nargs="?")
    a.add_argument("--fixture", choices=["example2"])
    a.add_argument("--gamma", type=float, default=1.0, help="parameter of the built-in 6x6 fixture")
    a.add_argument("--mode", choices=["rac", "rp"], default="rac")
    a.add_argument("--partition", type=int, default=0, help="index of the fixed composition for rp")
    a.add_argument("--p", type=int)
    a.add_argument("--beta", type=float)
    a.add_argument("--samples", type=int, help="Monte Carlo draws beyond the enumeration cap")
    a.add_argument("--seed", type=int)
    a.add_argument("--out")
    a.set_defaults(func=cmd_analyze)

    g = sub.add_parser("gen", help="write a problem manifest from a generator")
    g.add_argument("kind", choices=["random", "markowitz-like", "markowitz", "maxcut", "maxbisection", "qap"])
    g.add_argument("--out-dir", dest="out_dir", default=".")
    g.add_argument("--stem", default="problem")
    g.add_argument("--n", type=int)
    g.add_argument("--m-eq", dest="m_eq", type=int, default=0)
    g.add_argument("--m-ineq", dest="m_ineq", type=int, default=0)
    g.add_argument("--density", type=float, default=1.0)
    g.add_argument("--condition", type=float, default=10.0)
    g.add_argument("--seed", type=int)
    g.add_argument("--edges")
    g.add_argument("--returns")
    g.add_argument("--tau", type=float, default=1.0)
    g.add_argument("--cardinality", type=int)
    g.add_argument("--low-rank", dest="low_rank", action="store_true")
    g.add_argument("--flow")
    g.add_argument("--distance")
    g.add_argument("--r", type=int)
    g.add_argument("--binary", action="store_true")
    g.add_argument("--skip-header", dest="skip_header", action="store_true")
    g.set_defaults(func=cmd_gen)

    b = sub.add_parser("bench", help="sweep (mode, p, beta, eps) and emit a CSV table")
    b.add_argument("manifest", nargs="?")
    b.add_argument("--n", type=int, default=300)
    b.add_argument("--seed", type=int)
    b.add_argument("--modes", default="rac")
    b.add_argument("--p-list", dest="p_list", default="10")
    b.add_argument("--beta-list", dest="beta_list", default="1")
    b.add_argument("--eps-list", dest="eps_list", default="1e-5")
    b.add_argument("--max-iter", dest="max_iter", type=int, default=4000)
    b.add_argument("--max-time", dest="max_time", type=float)
    b.add_argument("--csv")
    b.set_defaults(func=cmd_bench)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(level=os.environ.get("RACADMM_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, ProblemError, ValueError, OSError, np.linalg.LinAlgError) as exc:
        sys.stderr.write(f"racadmm {args.command}: {exc}\n")
        return EXIT_ERROR


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
