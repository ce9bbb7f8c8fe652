"""``bpsynth`` command-line interface.

Exit codes: 0 on success, 1 for configuration or validation errors, 2 for
failures while running.
"""

from __future__ import annotations

import argparse
import json
import logging
import subprocess
import sys
import time
from pathlib import Path

import numpy as np

from . import simlab, theorylab
from .config import PRESETS, ConfigError, RunConfig, load_config, preset
from .statdist import RandomStream

log = logging.getLogger("bpsynth")

EXPERIMENTS = ("theorem2", "lemma2", "corollary2")
THEORY_STREAM = 2**31


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _common(p):
    p.add_argument("--config", help="INI file, or a JSON run summary to re-run")
    p.add_argument("--preset", choices=PRESETS, default=None,
                   help="starting point before the config file and flags are applied")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--out", help="output directory")
    p.add_argument("--threads", type=int, help="maximum worker processes")
    lvl = p.add_mutually_exclusive_group()
    lvl.add_argument("--quiet", action="store_true")
    lvl.add_argument("--verbose", action="store_true")


def _sim_flags(p):
    p.add_argument("--reps", type=int, help="number of replications")
    p.add_argument("--protocol", choices=["full", "warm", "full_rerun", "warm_start"])
    p.add_argument("--burn-in", type=int, dest="burn_in")
    p.add_argument("--kept", type=int, dest="kept_draws")
    p.add_argument("--warm-burn", type=int, dest="warm_start_burn")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bpsynth", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sim = sub.add_parser("simulate", help="run the replication study and write MSFE tables")
    _common(sim)
    _sim_flags(sim)

    th = sub.add_parser("theory", help="run one theory experiment")
    th.add_argument("experiment", help=f"one of {', '.join(EXPERIMENTS)}")
    _common(th)
    th.add_argument("--n", type=int, dest="n_samples", help="samples per toy configuration")
    th.add_argument("--configs", type=int, dest="n_configs", help="random toy configurations")
    th.add_argument("--paths", type=int, dest="n_paths", help="Monte Carlo paths")
    th.add_argument("--length", type=int, dest="path_length", help="path length")
    th.add_argument("--sigmas", help="comma-separated prior scales")

    tr = sub.add_parser("trace", help="write coefficient traces for one replication")
    _common(tr)
    _sim_flags(tr)
    tr.add_argument("--rep", type=int, help="replication index")
    return parser


def resolve_config(args) -> RunConfig:
    cfg = preset(args.preset) if args.preset else RunConfig()
    if args.config:
        cfg = load_config(args.config, cfg)
    sections: dict = {"run": {}, "bps": {}, "theory": {}}
    for key, sec, name in [
        ("seed", "run", "master_seed"), ("out", "run", "output_dir"), ("threads", "run", "threads"),
        ("reps", "run", "replications"), ("protocol", "run", "protocol"), ("rep", "run", "rep"),
        ("burn_in", "bps", "burn_in"), ("kept_draws", "bps", "kept_draws"),
        ("warm_start_burn", "bps", "warm_start_burn"), ("n_samples", "theory", "n_samples"),
        ("n_configs", "theory", "n_configs"), ("n_paths", "theory", "n_paths"),
        ("path_length", "theory", "path_length"), ("sigmas", "theory", "sigmas"),
    ]:
        val = getattr(args, key, None)
        if val is not None:
            sections[sec][name] = val
    return RunConfig.from_sections(sections, cfg).validate()


def git_describe() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"],
                             cwd=Path(__file__).resolve().parent, capture_output=True,
                             text=True, timeout=10)
        return out.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def _write_summary(cfg: RunConfig, out: Path, name: str, t0: float, extra=None):
    summary = {
        "config": cfg.to_sections(),
        "seed": cfg.master_seed,
        "git_describe": git_describe(),
        "wall_time_s": time.time() - t0,
    }
    summary.update(extra or {})
    (out / name).write_text(json.dumps(summary, indent=2) + "\n")


def cmd_simulate(cfg: RunConfig) -> int:
    t0 = time.time()
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    reps = simlab.run_study(cfg.study(), cfg.replications, cfg.threads)
    report = simlab.aggregate(reps)
    simlab.write_msfe_report(report, out / "msfe_report.csv")
    simlab.write_ratios_by_rep(report, out / "ratios_by_rep.csv")
    _write_summary(cfg, out, "summary.json", t0)
    print(f"{'method':<6}" + "".join(f"  MSFE_1:{c:<4}   ratio%" for c in report.checkpoints))
    for m in report.msfe:
        print(f"{m:<6}" + "".join(f"  {v:.6f}  {r:7.2f}" for v, r in zip(report.msfe[m], report.ratio[m])))
    return 0


def cmd_trace(cfg: RunConfig) -> int:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    rep = simlab.run_replication(cfg.rep, cfg.study())
    for m in ("BMA", "Cp", "BPS"):
        simlab.write_coeff_trace(rep, out / f"coeff_trace_rep{cfg.rep}_{m}.csv", methods=[m])
    icpt, coef = simlab.intercept_prominence(rep)
    print(f"mean |intercept| = {icpt:.6g}, mean |agent coefficient| = {coef:.6g}, "
          f"intercept more prominent: {icpt > coef}")
    return 0


def _theorem2(cfg: RunConfig, out: Path) -> bool:
    th = cfg.theory
    n = th.n_samples
    cases = [("closed_form", 0.5, 0.0, 0.0), ("matched_drift", 0.3, 0.1, 0.2), ("martingale", 0.0, 0.0, 0.0)]
    g = RandomStream(cfg.master_seed, (THEORY_STREAM, 0)).generator
    cases += [(f"random_{i}", *g.uniform(-1, 1, 3)) for i in range(th.n_configs)]
    rows, ok = [], True
    for i, (label, mu, mu1, mu2) in enumerate(cases):
        res = theorylab.theorem2_gap(theorylab.ToyModelConfig(mu, mu1, mu2, 1.0, n),
                                     RandomStream(cfg.master_seed, (THEORY_STREAM, 1, i)))
        if label == "closed_form":
            passed = abs(res.gap - 0.25) <= 0.01
        elif label in ("matched_drift", "martingale"):
            passed = abs(res.gap) < 3 * res.gap_se and abs(res.mu_star) < 3 * res.mu_star_se
        else:
            passed = res.gap >= -3 * res.gap_se
        ok &= passed
        rows.append([label, float(mu), float(mu1), float(mu2), n, cfg.master_seed, res.mse_linear,
                     res.mse_with_intercept, res.gap, res.gap_se, res.mu_star, res.mu_star_se,
                     "pass" if passed else "fail"])
    theorylab.write_rows(out / "theorem2_gap.csv",
                         ["case", "mu", "mu1", "mu2", "n_samples", "master_seed", "mse_linear",
                          "mse_with_intercept", "gap", "gap_se", "mu_star", "mu_star_se", "check"], rows)
    return ok


LEMMA2_SHIFTS = [(0.0, (0.0, 0.0)), (1.0, (2.0, -1.0)), (-0.5, (1.0, 1.0))]


def _lemma2(cfg: RunConfig, out: Path) -> bool:
    th = cfg.theory
    stream = RandomStream(cfg.master_seed, (THEORY_STREAM, 2))
    rows, verdict = [], {}
    for name, pred in [("random_walk", theorylab.StatePredictor()),
                       ("stationary_ar", theorylab.StatePredictor(phi=0.5))]:
        res = theorylab.lemma2_constancy(LEMMA2_SHIFTS, pred, th.n_paths, stream, th.path_length)
        verdict[name] = res.constant
        for (a, theta), r in zip(LEMMA2_SHIFTS, res.risks):
            rows.append([name, a, theta[0], theta[1], th.n_paths, th.path_length, cfg.master_seed,
                         r.value, r.std_error, res.max_z, "constant" if res.constant else "not_constant"])
    theorylab.write_rows(out / "lemma2_risks.csv",
                         ["predictor", "a", "theta1", "theta2", "n_paths", "path_length", "master_seed",
                          "risk", "std_error", "max_pairwise_z", "verdict"], rows)
    return verdict["random_walk"] and not verdict["stationary_ar"]


def _corollary2(cfg: RunConfig, out: Path) -> bool:
    th = cfg.theory
    y, X, x_next = theorylab.fixed_path(th.corollary_path_length, RandomStream(cfg.master_seed, (THEORY_STREAM, 3)))
    m, v = theorylab.StatePredictor().predictive(y, X, x_next)
    grid = np.linspace(m - 10 * np.sqrt(v), m + 10 * np.sqrt(v), 2001)
    sig = np.asarray(th.sigmas, dtype=float)
    order_ok = bool(np.all(np.diff(sig) > 0))
    sup = theorylab.corollary2_convergence(sig, y, X, x_next, grid)
    rows = [[float(s), float(d), th.corollary_path_length, cfg.master_seed] for s, d in zip(sig, sup)]
    theorylab.write_rows(out / "corollary2_curve.csv",
                         ["sigma", "sup_abs_density_diff", "path_length", "master_seed"], rows)
    return order_ok and bool(np.all(np.diff(sup) < 0))


def cmd_theory(cfg: RunConfig, experiment: str) -> int:
    t0 = time.time()
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    run = {"theorem2": _theorem2, "lemma2": _lemma2, "corollary2": _corollary2}[experiment]
    ok = run(cfg, out)
    _write_summary(cfg, out, f"summary_{experiment}.json", t0, {"experiment": experiment, "passed": ok})
    print(f"RESULT: {'PASS' if ok else 'FAIL'}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # usage errors and --help
        return int(exc.code or 0)
    level = logging.WARNING if args.quiet else logging.DEBUG if args.verbose else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    if args.command == "theory" and args.experiment not in EXPERIMENTS:
        print(f"error: unknown experiment {args.experiment!r}; valid: {', '.join(EXPERIMENTS)}",
              file=sys.stderr)
        return 1
    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    try:
        if args.command == "simulate":
            return cmd_simulate(cfg)
        if args.command == "trace":
            return cmd_trace(cfg)
        return cmd_theory(cfg, args.experiment)
    except Exception as exc:  # noqa: BLE001 - any runtime failure maps to exit 2
        log.error("run failed: %s", exc, exc_info=args.verbose)
        return 2


if __name__ == "__main__":
    sys.exit(main())
