"""Command-line entry point: ``adlrom <command> [options]``.

Exit status is 0 on success, 1 on usage or configuration errors and 2 on
numerical failure (Newton divergence, eigensolver non-convergence, or a
failed invariant in ``verify``).
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, io
from .config import ConfigError, StudyConfig, load_config
from .integrate import NewtonDiverged, Scheme, run_trajectory, stability_monitor
from .io import FormatError
from .metrics import ad_deltas, error_rom, study_ad, study_delta, study_r
from .pipeline import Workspace
from .pod import EigenNotConverged, truncation_diag

log = logging.getLogger("adlrom")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="key = value configuration file")
    common.add_argument("--out", type=Path, default=Path("adlrom_out"), help="output directory")
    common.add_argument("--cache", type=Path, help="stage cache directory (default: OUT/cache)")
    common.add_argument("--no-cache", action="store_true", help="rebuild every stage")
    common.add_argument("--threads", type=int, default=1, help="worker threads (1 is reproducible reference)")
    common.add_argument("--n-side", type=int, help="cells per side of the mesh")
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = _Parser(prog="adlrom", description="Approximate-deconvolution Leray ROM for the arctan-layer benchmark")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("snapshots", parents=[common], help="build and save the snapshot set")
    sp = sub.add_parser("pod", parents=[common], help="build and save the POD basis, print spectrum and tails")
    sp.add_argument("--show", type=int, default=10, help="eigenvalues to print")

    sp = sub.add_parser("run", parents=[common], help="integrate one ROM trajectory")
    sp.add_argument("--scheme", choices=("grom", "lrom", "adlrom"))
    sp.add_argument("--r", type=int)
    sp.add_argument("--delta", type=float)
    sp.add_argument("--N", type=int)
    sp.add_argument("--dt", type=float)
    sp.add_argument("--T", type=float)

    sp = sub.add_parser("study-ad", parents=[common], help="deconvolution error against delta")
    sp.add_argument("--spacing", choices=("log", "linear"))
    sub.add_parser("study-delta", parents=[common], help="ADL-ROM error against delta")
    sub.add_parser("study-r", parents=[common], help="ADL-ROM error against r")
    sp = sub.add_parser("verify", parents=[common], help="run the invariant suite on a small mesh")
    sp.add_argument("--seed", type=int, default=0)
    return p


def _config(args) -> StudyConfig:
    cfg = load_config(args.config) if args.config else StudyConfig()
    changes = {}
    if args.n_side is not None:
        changes["n_side"] = args.n_side
    for flag, key in (("scheme", "scheme"), ("r", "r"), ("delta", "delta"), ("N", "N"),
                      ("dt", "dt_rom"), ("T", "T"), ("spacing", "ad_spacing")):
        val = getattr(args, flag, None)
        if val is not None:
            changes[key] = val
    return cfg.replace(**changes) if changes else cfg


def _workspace(args, cfg) -> Workspace:
    if args.threads < 1:
        raise ConfigError("--threads must be >= 1")
    cache = None if args.no_cache else (args.cache or args.out / "cache")
    return Workspace(cfg, cache_dir=cache, threads=args.threads)


def _print_fit(res):
    fit = res.fit
    if fit is not None:
        print(f"{res.name}: slope {fit.slope:.4f}  intercept {fit.intercept:.4f}  R^2 {fit.r2:.4f}")
    for p, msg in res.failures:
        print(f"{res.name}: point {p:g} failed: {msg}")


def cmd_snapshots(args, ws, out):
    return io.save_snapshots(ws.snapshots, out / "snapshots")


def cmd_pod(args, ws, out):
    b = ws.basis
    files = io.save_basis(b, out / "pod")
    print(f"R = {b.R}")
    for j, lam in enumerate(b.eigenvalues[:args.show], 1):
        print(f"lambda_{j:<3d} {lam:.6e}")
    print(f"{'r':>4} {'Lambda_L2':>12} {'Lambda_H1':>12} {'||S^r||_2':>12}")
    for r in sorted({*ws.config.r_list, ws.config.r}):
        if r <= b.R:
            d = truncation_diag(b, r)
            print(f"{r:>4} {d.lambda_tail_sum:12.4e} {d.grad_lambda_tail_sum:12.4e} {d.S_r_norm:12.4e}")
    return files


def cmd_run(args, ws, out):
    c = ws.config
    ws.check_r(c.r)
    ops = ws.operators(c.r)
    scheme = Scheme.make(c.scheme, ops.S, c.delta, c.N)
    traj = run_trajectory(ws.basis, ops, scheme, ws.params, c.dt_rom, c.T, ws.forcing, ws.mass, ws.newton)
    path = io.save_trajectory(traj, out / io.trajectory_filename(c.scheme, c.r, c.delta))
    mon = stability_monitor(traj, ops, ws.forcing, c.nu)
    print(f"{c.scheme} r={c.r} delta={c.delta:g} N={c.N}: {len(traj.times) - 1} steps, "
          f"max Newton iterations {traj.newton_iters.max(initial=0)}")
    if abs(traj.times[-1] - ws.snapshots.times[-1]) < 1e-12:
        print(f"final-time L2 error {error_rom(ws.basis, c.r, traj, ws.u_final, ws.mass):.6e}")
    print(f"energy bound: {mon.lhs:.6e} <= {mon.rhs_projected:.6e} "
          f"({'holds' if mon.holds else 'VIOLATED'}; with ||f||: {mon.rhs_true:.6e})")
    return [path]


def cmd_study_ad(args, ws, out):
    c = ws.config
    for r in c.ad_r_list:
        ws.check_r(r)
    deltas = ad_deltas(c.ad_delta_min, c.ad_delta_max, c.ad_count, c.ad_spacing)
    files = []
    for res in study_ad(ws.basis, ws.u_final, ws.mass, c.ad_r_list, c.N, deltas).values():
        files += io.save_study(res, out)
        _print_fit(res)
    return files


def cmd_study_delta(args, ws, out):
    c = ws.config
    ws.check_r(c.r)
    res = study_delta(ws.basis, ws.operators(c.r), ws.forcing, ws.params, ws.u_final, ws.mass,
                      c.delta_list, c.r, c.N, c.dt_rom, c.T, ws.newton)
    _print_fit(res)
    files = io.save_study(res, out)
    if res.failures:
        raise _PartialFailure(files)
    return files


def cmd_study_r(args, ws, out):
    c = ws.config
    for r in c.r_list:
        ws.check_r(r)
    res = study_r(ws.basis, ws.operators(max(c.r_list)), ws.forcing, ws.params, ws.u_final, ws.mass,
                  c.r_list, c.delta, c.N, c.dt_rom, c.T, ws.newton)
    _print_fit(res)
    files = io.save_study(res, out)
    if res.failures:
        raise _PartialFailure(files)
    return files


class _PartialFailure(Exception):
    def __init__(self, files):
        super().__init__("some study points failed")
        self.files = files


def cmd_verify(args, ws, out):
    from .verify import run_invariants

    n = args.n_side if args.n_side is not None else 8
    checks = run_invariants(n_side=n, seed=args.seed, threads=args.threads)
    for chk in checks:
        print(chk.line())
    failed = [c.name for c in checks if not c.ok]
    print(f"{len(checks) - len(failed)}/{len(checks)} invariants hold")
    if failed:
        raise _InvariantFailure(failed)
    return []


class _InvariantFailure(Exception):
    pass


COMMANDS = {
    "snapshots": cmd_snapshots,
    "pod": cmd_pod,
    "run": cmd_run,
    "study-ad": cmd_study_ad,
    "study-delta": cmd_study_delta,
    "study-r": cmd_study_r,
    "verify": cmd_verify,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    started = datetime.now(timezone.utc)
    t0 = time.perf_counter()
    try:
        cfg = _config(args)
        ws = _workspace(args, cfg)
        out = args.out
        if args.command != "verify":
            out.mkdir(parents=True, exist_ok=True)
        files = COMMANDS[args.command](args, ws, out)
        status = EXIT_OK
    except (ConfigError, FormatError) as exc:
        print(f"adlrom: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NewtonDiverged, EigenNotConverged, np.linalg.LinAlgError) as exc:
        print(f"adlrom: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except _PartialFailure as exc:
        print(f"adlrom: numerical failure: {exc}", file=sys.stderr)
        files, status = exc.files, EXIT_NUMERIC
    except _InvariantFailure as exc:
        print(f"adlrom: invariants failed: {', '.join(exc.args[0])}", file=sys.stderr)
        return EXIT_NUMERIC
    if args.command != "verify":
        manifest = {
            "command": args.command,
            "version": __version__,
            "config": cfg.to_dict(),
            "threads": args.threads,
            "started": started.isoformat(),
            "finished": datetime.now(timezone.utc).isoformat(),
            "wall_seconds": time.perf_counter() - t0,
            "stage_seconds": ws.timings,
            "outputs": [str(f) for f in files],
        }
        io.write_manifest(out / f"manifest_{args.command}.json", manifest)
    return status


if __name__ == "__main__":
    sys.exit(main())
