"""Command-line front end.

Exit codes: 0 success, 1 a verification or episode failed, 2 usage or
configuration error. ``AEROSERVO_LOG`` (quiet, info, debug) sets how much
goes to standard error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
import time

import numpy as np

from .config import ConfigError, RunConfig, load_config, replace_section
from .geometry import pose_distance
from .kinematics import verify_jacobian
from .matching import synthetic_recovery
from .neural.gradcheck import check_loss_gradients
from .posesolve import RobustSolveParams, robust_solve, synthetic_problem
from .sim import read_episode_csv, run_guidance

log = logging.getLogger("aeroservo")

LOG_LEVELS = {"quiet": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
TRACE_COLUMNS = ("t", "vx", "vy", "vz", "wz", "eta1", "eta2", "eta3", "eta4", "theta_err", "ep_norm")

JACOBIAN_TOL = 1e-5
GRADIENT_TOL = 1e-4
MATCH_MIN_RECOVERY = 0.99
SOLVE_MIN_SUCCESS = 0.99
SOLVE_ROT_TOL = np.deg2rad(0.1)
SOLVE_TRANS_TOL = 1e-3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}\n{self.format_usage()}")


def _open_out(path):
    if path in (None, "", "-"):
        return sys.stdout, False
    return open(path, "w", encoding="utf-8", newline=""), True


def _report(lines: dict, path) -> None:
    fh, close = _open_out(path)
    try:
        for k, v in lines.items():
            fh.write(f"{k}: {v}\n")
    finally:
        if close:
            fh.close()


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg = replace_section(cfg, "sim", seed=args.seed)
    return cfg


def cmd_simulate(args, cfg: RunConfig) -> int:
    t0 = time.perf_counter()
    episode = run_guidance(cfg)
    fh, close = _open_out(args.out or cfg.output.path)
    try:
        episode.to_csv(fh)
    finally:
        if close:
            fh.close()
    if args.inliers:
        with open(args.inliers, "w", encoding="utf-8", newline="") as fh:
            episode.inliers_to_csv(fh)
    log.info("simulate: %s in %d steps (%.2f s)", episode.status, episode.steps, time.perf_counter() - t0)
    return 0 if episode.converged or not cfg.sim.stop_on_converge else 1


def cmd_match_bench(args, cfg: RunConfig) -> int:
    m = cfg.matching
    rates = [synthetic_recovery(m.n, cfg.sim.feature_dim, args.sigma, m.tau, m.theta_c, cfg.sim.seed + k)
             for k in range(args.trials)]
    ok = min(rates) >= MATCH_MIN_RECOVERY
    _report({"trials": args.trials, "n": m.n, "feature_dim": cfg.sim.feature_dim, "sigma": args.sigma,
             "tau": m.tau, "theta_c": m.theta_c, "mean_recovery": f"{np.mean(rates):.6f}",
             "min_recovery": f"{min(rates):.6f}", "result": "PASS" if ok else "FAIL"}, args.out)
    return 0 if ok else 1


def cmd_solve_bench(args, cfg: RunConfig) -> int:
    report, ok = {}, True
    for frac in args.fractions:
        successes = 0
        for k in range(args.trials):
            rng = np.random.default_rng([cfg.sim.seed, k])
            corr, truth, _ = synthetic_problem(args.points, frac, args.sigma, rng)
            res = robust_solve(corr, RobustSolveParams(**{**cfg.solver.__dict__, "rng_seed": k}))
            if res.success:
                ang, dist = pose_distance(res.pose, truth)
                successes += ang < SOLVE_ROT_TOL and dist < SOLVE_TRANS_TOL
        rate = successes / args.trials
        report[f"outliers={frac:.2f}"] = f"{rate:.3f}"
        if frac <= args.gate and rate < SOLVE_MIN_SUCCESS:
            ok = False
    report["result"] = "PASS" if ok else "FAIL"
    _report(report, args.out)
    return 0 if ok else 1


def cmd_jacobian_check(args, cfg: RunConfig) -> int:
    t0 = time.perf_counter()
    res = verify_jacobian(cfg.arm, args.states, cfg.sim.seed)
    elapsed = time.perf_counter() - t0
    ok = res["max_error"] < JACOBIAN_TOL
    _report({"states": res["states"], "max_relative_error": f"{res['max_error']:.3e}",
             "mean_relative_error": f"{res['mean_error']:.3e}", "tolerance": f"{JACOBIAN_TOL:.0e}",
             "seconds": f"{elapsed:.3f}", "result": "PASS" if ok else "FAIL"}, args.out)
    return 0 if ok else 1


def cmd_gradcheck(args, cfg: RunConfig) -> int:
    worst = {}
    for k in range(args.trials):
        for name, err in check_loss_gradients(cfg.sim.seed + k).items():
            worst[name] = max(worst.get(name, 0.0), err)
    ok = max(worst.values()) < GRADIENT_TOL
    report = {name: f"{err:.3e}" for name, err in sorted(worst.items())}
    report["tolerance"] = f"{GRADIENT_TOL:.0e}"
    report["result"] = "PASS" if ok else "FAIL"
    _report(report, args.out)
    return 0 if ok else 1


def cmd_traces(args, cfg: RunConfig) -> int:
    if args.inp:
        with open(args.inp, encoding="utf-8", newline="") as fh:
            cols = read_episode_csv(fh)
    else:
        import io

        buf = io.StringIO()
        run_guidance(cfg).to_csv(buf)
        buf.seek(0)
        cols = read_episode_csv(buf)
    fh, close = _open_out(args.out)
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for row in zip(*(cols[c] for c in TRACE_COLUMNS)):
            w.writerow([repr(float(x)) for x in row])
    finally:
        if close:
            fh.close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="run configuration file")
    common.add_argument("--seed", type=int, help="overrides sim.seed")
    common.add_argument("--out", metavar="PATH", help="output file (default: standard output)")

    p = _Parser(prog="aeroservo", description="Aerial manipulator guidance: simulation and verification.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    s = sub.add_parser("simulate", parents=[common], help="run one guidance episode, write its CSV log")
    s.add_argument("--inliers", metavar="PATH", help="also write per-frame solver inlier masks (tracker mode)")
    s = sub.add_parser("match-bench", parents=[common], help="matching recovery on planted permutations")
    s.add_argument("--trials", type=int, default=5)
    s.add_argument("--sigma", type=float, default=0.01)
    s = sub.add_parser("solve-bench", parents=[common], help="robust solver recovery under an outlier sweep")
    s.add_argument("--trials", type=int, default=20)
    s.add_argument("--points", type=int, default=512)
    s.add_argument("--sigma", type=float, default=1e-3)
    s.add_argument("--fractions", type=float, nargs="+", default=[0.0, 0.1, 0.2, 0.3, 0.4, 0.5])
    s.add_argument("--gate", type=float, default=0.3, help="fractions up to this must succeed")
    s = sub.add_parser("jacobian-check", parents=[common], help="analytic vs finite-difference Jacobian")
    s.add_argument("--states", type=int, default=100)
    s = sub.add_parser("gradcheck", parents=[common], help="loss gradients vs central differences")
    s.add_argument("--trials", type=int, default=5)
    s = sub.add_parser("traces", parents=[common], help="velocity and error channels for plotting")
    s.add_argument("--in", dest="inp", metavar="PATH", help="episode CSV (default: simulate now)")
    return p


COMMANDS = {
    "simulate": cmd_simulate, "match-bench": cmd_match_bench, "solve-bench": cmd_solve_bench,
    "jacobian-check": cmd_jacobian_check, "gradcheck": cmd_gradcheck, "traces": cmd_traces,
}


def _setup_logging() -> None:
    level = os.environ.get("AEROSERVO_LOG", "quiet").lower()
    if level not in LOG_LEVELS:
        raise UsageError(f"AEROSERVO_LOG must be one of {', '.join(LOG_LEVELS)}, got {level!r}")
    logging.basicConfig(level=LOG_LEVELS[level], stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s",
                        force=True)


def run_command(argv) -> int:
    parser = build_parser()
    try:
        _setup_logging()
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage())
        cfg = _config(args)
    except UsageError as exc:
        sys.stderr.write(str(exc).rstrip("\n") + "\n")
        return 2
    except (ConfigError, OSError) as exc:
        sys.stderr.write(f"aeroservo: {exc}\n")
        return 2
    try:
        return COMMANDS[args.command](args, cfg)
    except OSError as exc:
        sys.stderr.write(f"aeroservo: {exc}\n")
        return 2
    except ValueError as exc:
        sys.stderr.write(f"aeroservo: {exc}\n")
        return 2


def main() -> None:
    sys.exit(run_command(sys.argv[1:]))


if __name__ == "__main__":
    main()
