"""Command-line experiment runner writing plot-ready CSV files.

Exit codes: 0 success, 1 failed checks (selftest, verify-cfar), 2 config
error, 3 numeric failure, 4 IO error.
"""
from __future__ import annotations

import argparse
import logging
import math
import os
import sys
import warnings

import numpy as np

from . import __version__
from . import acceptance, analytics, config, scenario
from . import detectors as det
from . import montecarlo as mc
from .errors import ConfigError, FileFormatError, NumericError
from .fileio import write_csv

log = logging.getLogger("cfarfp")

EXIT_OK, EXIT_CHECKS, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3, 4


def _header(cfg: config.RunConfig, command: str) -> str:
    return f"cfarfp {__version__} {command} seed={cfg.seed} config_sha256={cfg.sha256}"


def _out(cfg: config.RunConfig, args, name: str) -> str:
    return os.path.join(config.resolve_output_dir(cfg.output_dir, args.output_dir), name)


def _calibrate(cfg: config.RunConfig, args, specs=None):
    specs = list(cfg.detectors if specs is None else specs)
    h0 = mc.h0_features(cfg.scenario, cfg.trials_calib, workers=args.workers)
    plain = [s for s in specs if s.kind is not det.Kind.MPI or s.eps > 0]
    results = mc.calibrate_on(plain, h0, cfg.pfa, seed=cfg.seed)
    rows = [(r.detector.name, r.detector.eps, r.detector.eta, r.pfa_target, r.trials, r.empirical_pfa, r.seed)
            for r in results]
    write_csv(_out(cfg, args, "calibration.csv"),
              ["detector", "eps", "eta", "pfa_target", "trials", "empirical_pfa", "seed"], rows,
              _header(cfg, "calibration"))
    return results, h0


def cmd_features(cfg: config.RunConfig, args) -> int:
    rows = []
    scen = cfg.scenario
    for cond in cfg.conditions:
        if cond == "H0":
            gdb, c = -math.inf, math.nan
        elif cond == "H1-matched":
            gdb, c = scen.snr_db, 1.0
        else:
            gdb = scen.snr_db
            c = scenario.realize(scen, cos2theta=cfg.cloud_cos2theta).cos2theta
        cloud = mc.feature_cloud(scen, cond, cfg.cloud_count, workers=args.workers, cos2theta=cfg.cloud_cos2theta)
        rows.extend((cond, gdb, c, i, cloud.beta[i], cloud.t_tilde[i], cloud.s1[i], cloud.s2[i])
                    for i in range(len(cloud)))
    path = _out(cfg, args, "features.csv")
    write_csv(path, ["condition", "gamma_db", "cos2theta", "trial", "beta", "t_tilde", "s1", "s2"], rows,
              _header(cfg, "features"))
    print(f"wrote {path} ({len(rows)} points)")
    return EXIT_OK


def cmd_boundaries(cfg: config.RunConfig, args) -> int:
    results, _ = _calibrate(cfg, args)
    betas = np.linspace(0.0, 1.0, cfg.beta_points + 2)[1:-1]
    rows = []
    for r in results:
        curve = det.boundary(r.detector, betas, t_max=cfg.t_max)
        rows.extend((r.detector.name, r.detector.eps, r.detector.eta, b, t) for b, t in curve.points)
    path = _out(cfg, args, "boundaries.csv")
    write_csv(path, ["detector", "eps", "eta", "beta", "t_tilde"], rows, _header(cfg, "boundaries"))
    print(f"wrote {path} ({len(results)} detectors)")
    return EXIT_OK


def cmd_clusters(cfg: config.RunConfig, args) -> int:
    scen = cfg.scenario
    n, k = scen.n, scen.k
    if k < n + 2:
        raise ConfigError("cluster moments need k >= n + 2")
    moments, ellipses = [], []
    cols = ["gamma_db", "cos2theta", "source", "count", "mu_beta", "mu_t", "sigma_beta", "sigma_t", "rho",
            "iso_m", "iso_q"]

    def add(gdb, c, gamma, cloud):
        cm = analytics.cluster_moments(n, k, gamma, c)
        line = analytics.iso_snr_line(n, k, gamma)
        moments.append((gdb, c, "analytic", 0, cm.mu_beta, cm.mu_t, cm.sigma_beta, cm.sigma_t, cm.rho,
                        line.m, line.q))
        if cloud is not None and len(cloud) > 1:
            em = mc.cloud_moments(cloud)
            moments.append((gdb, c, "empirical", em.count, em.mu_beta, em.mu_t, em.sigma_beta, em.sigma_t,
                            em.rho, line.m, line.q))
        pts = analytics.ellipse_points(cm, cfg.ellipse_points)
        ellipses.extend((gdb, c, i, b, t) for i, (b, t) in enumerate(pts))

    count = cfg.cloud_count
    h0 = mc.feature_cloud(scen, "H0", count, workers=args.workers) if count else None
    add(-math.inf, 1.0, 0.0, h0)
    block = mc.CLOUD_BLOCK + 8
    for gdb in cfg.gamma_grid_db:
        for c in cfg.cos2theta_list:
            cloud = None
            if count:
                cloud = mc.feature_cloud(scen, "H1-mismatched", count, workers=args.workers, cos2theta=c,
                                         snr_db=gdb, block=block)
            block += 1
            add(gdb, c, 10.0 ** (gdb / 10.0), cloud)
    p1, p2 = _out(cfg, args, "moments.csv"), _out(cfg, args, "ellipses.csv")
    write_csv(p1, cols, moments, _header(cfg, "clusters"))
    write_csv(p2, ["gamma_db", "cos2theta", "index", "beta", "t_tilde"], ellipses, _header(cfg, "clusters"))
    print(f"wrote {p1} and {p2}")
    return EXIT_OK


def cmd_pd(cfg: config.RunConfig, args) -> int:
    results, h0 = _calibrate(cfg, args)
    specs = [r.detector for r in results]
    specs += [s for s in cfg.detectors if s.kind is det.Kind.MPI and s.eps == 0]
    rows = []
    for c in cfg.cos2theta_list:
        curves = mc.estimate_pd(specs, cfg.scenario, cfg.gamma_grid_db, c, cfg.trials_pd, workers=args.workers,
                                h0=h0, pfa=cfg.pfa)
        for pc in curves:
            for g, pd, ci in pc.points:
                eps = 10.0 ** (g / 10.0) if pc.detector.kind is det.Kind.MPI and pc.detector.eps == 0 \
                    else pc.detector.eps
                rows.append((pc.detector.name, eps, c, g, pd, ci))
    path = _out(cfg, args, "pd_curves.csv")
    write_csv(path, ["detector", "eps", "cos2theta", "gamma_db", "pd", "ci_halfwidth"], rows, _header(cfg, "pd"))
    print(f"wrote {path} ({len(rows)} points)")
    return EXIT_OK


def cmd_verify_cfar(cfg: config.RunConfig, args) -> int:
    specs = [s for s in cfg.detectors if not (s.kind is det.Kind.MPI and s.eps == 0)]
    results, _ = _calibrate(cfg, args, specs)
    c = scenario.clutter_covariance(cfg.scenario)
    covs = {"config": c, "identity": np.eye(cfg.scenario.n, dtype=complex), "scaled100": 100.0 * c}
    report = mc.verify_cfar([r.detector for r in results], cfg.scenario, covs, cfg.pfa, cfg.trials_calib,
                            workers=args.workers)
    rows = [(r.detector.name, r.detector.eps, r.detector.eta, r.covariance, r.trials, r.empirical_pfa, r.low,
             r.high, r.passed) for r in report]
    path = _out(cfg, args, "cfar.csv")
    write_csv(path, ["detector", "eps", "eta", "covariance", "trials", "empirical_pfa", "low", "high", "passed"],
              rows, _header(cfg, "verify-cfar"))
    failed = [r for r in report if not r.passed]
    for r in failed:
        print(f"FAIL {r.detector.name} under {r.covariance}: pfa={r.empirical_pfa:.6g} "
              f"outside [{r.low:.6g}, {r.high:.6g}]")
    print(f"wrote {path}: {len(report) - len(failed)}/{len(report)} checks inside the 99.7% interval")
    return EXIT_CHECKS if failed else EXIT_OK


def cmd_selftest(args) -> int:
    scale = acceptance.QUICK if args.quick else acceptance.FULL
    only = {int(x) for x in args.only.split(",")} if args.only else None
    results, ctx = acceptance.run(seed=args.seed, workers=args.workers, scale=scale, only=only)
    out = config.resolve_output_dir("", args.output_dir)
    acceptance.write_outputs(out, results, ctx, acceptance.header_line(args.seed, "quick" if args.quick else "full"))
    failed = [r.number for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed" + (f"; failed: {failed}" if failed else ""))
    return EXIT_CHECKS if failed else EXIT_OK


COMMANDS = {"features": cmd_features, "boundaries": cmd_boundaries, "clusters": cmd_clusters, "pd": cmd_pd,
            "verify-cfar": cmd_verify_cfar}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cfarfp", description="CFAR feature-plane detection experiments")
    parser.add_argument("--version", action="version", version=f"cfarfp {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-o", "--output-dir", help=f"output directory (default: config, ${config.OUTPUT_ENV}, "
                                                   f"./{config.DEFAULT_OUTPUT})")
    common.add_argument("-w", "--workers", type=int, default=1, help="worker processes (results do not depend on it)")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common])
        p.add_argument("-c", "--config", help="TOML config file")
        p.add_argument("-s", "--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key, e.g. scenario.n=8 (repeatable)")
    p = sub.add_parser("selftest", parents=[common], help="run the acceptance checks")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--quick", action="store_true", help="tenfold smaller trial counts (smoke test only)")
    p.add_argument("--only", help="comma-separated criterion numbers")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if not args.verbose:
        warnings.simplefilter("ignore", UserWarning)
    if args.workers < 1:
        print("error: --workers must be positive", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "selftest":
            return cmd_selftest(args)
        cfg = config.load(args.config, args.set)
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FileFormatError, OSError) as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
