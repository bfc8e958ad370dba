"""Command-line entry point: ``psrolab run | eval | plot | selftest``.

Exit codes: 0 success, 1 usage or configuration error, 2 failed check,
3 game too large for exact evaluation.
"""

from __future__ import annotations

import argparse
import copy
import csv
import dataclasses
import os
import sys
from pathlib import Path

import numpy as np

from psrolab import checkpoint, config as configs, plotting
from psrolab.errors import CapacityError, CheckpointError, ConfigError, ContractError
from psrolab.evaluation import MixedProfile, approx_exploitability, exploitability
from psrolab.population import Population
from psrolab.psro import RunConfig, psro_run, single_iteration_uplift
from psrolab.selftest import FAULTS, run_selftest

EXIT_OK, EXIT_USAGE, EXIT_CHECK, EXIT_CAPACITY = 0, 1, 2, 3
OUT_ENV = "PSROLAB_OUT"
REPORT_COLUMNS = ("iteration", "method", "exploitability", "br_value_p0", "br_value_p1")
H2H_COLUMNS = ("iteration", "player", "method", "utility", "stderr")


def _default_out(name: str) -> Path:
    return Path(os.environ.get(OUT_ENV, "runs")) / name


def _load_config(args) -> tuple[RunConfig, str]:
    if args.config:
        cfg = configs.load(args.config)
        name = Path(args.config).stem
    else:
        cfg = configs.preset(args.preset)
        name = args.preset
    if args.variant:
        cfg.variant = args.variant
    if args.seed is not None:
        cfg.seed = args.seed
    cfg = configs.with_overrides(cfg, args.override)
    cfg.validate()
    return cfg, f"{name}-{cfg.variant}-s{cfg.seed}"


def cmd_run(args) -> int:
    cfg, name = _load_config(args)
    out = Path(args.out) if args.out else _default_out(name)
    out.mkdir(parents=True, exist_ok=True)
    configs.save(cfg, out / "config.ini")
    log = None if args.quiet else (lambda msg: print(msg, flush=True))
    psro_run(cfg, out, resume=not args.no_resume, log=log)
    metrics = out / "metrics.csv"
    try:
        plotting.plot_curves([metrics], out / "exploitability.svg",
                             title=f"{cfg.game} {cfg.variant}")
    except ConfigError:
        pass  # no exploitability values to plot (evaluation disabled)
    print(f"wrote {metrics}")
    return EXIT_OK


def _restore(out: Path):
    meta = checkpoint.read_meta(out)
    cfg = RunConfig.from_dict(checkpoint.read_config(out))
    game = cfg.make_game()
    ck = checkpoint.load(out, game)
    return cfg, game, ck, meta


def _append_rows(path: Path, columns, rows):
    new = not path.exists()
    with open(path, "a", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if new:
            w.writerow(columns)
        for r in rows:
            w.writerow([r[c] for c in columns])


def _prefix(pop: Population, t: int) -> Population:
    """Population as it stood after iteration ``t`` (the uniform seed plus t responses)."""
    return Population([list(pop[0][:t + 1]), list(pop[1][:t + 1])])


def cmd_eval(args) -> int:
    out = Path(args.checkpoint)
    cfg, game, ck, meta = _restore(out)
    pop, t = ck["population"], ck["iteration"]
    sigma = ck["sigmas"][-1]
    if args.mode in ("exact", "approx"):
        profile = MixedProfile([pop.policies(0), pop.policies(1)], list(sigma))
        if args.mode == "exact":
            report = exploitability(game, profile)
        else:
            episodes = args.episodes or cfg.approx_episodes or cfg.episodes
            report = approx_exploitability(game, profile, cfg.hyper, episodes,
                                           np.random.default_rng([args.seed, t]),
                                           cfg.eval_episodes)
        row = {"iteration": t, "method": report.method, "exploitability": repr(report.value),
               "br_value_p0": repr(report.br_values[0]), "br_value_p1": repr(report.br_values[1])}
        print(",".join(REPORT_COLUMNS))
        print(",".join(str(row[c]) for c in REPORT_COLUMNS))
        _append_rows(Path(args.report) if args.report else out / "report.csv", REPORT_COLUMNS,
                     [row])
        return EXIT_OK
    # h2h: one extra iteration on each requested population prefix, three ways
    iters = args.iterations or [t]
    rows = []
    for it in iters:
        if not 1 <= it <= t:
            raise ConfigError(f"iteration {it} not in checkpoint (1..{t})")
        sub = _prefix(pop, it)
        size = it + 1
        cc = cfg.conflux
        pool = min(cc.pool_size, size)
        local = copy.deepcopy(cfg)
        local.conflux = dataclasses.replace(cc, pool_size=pool, num_subs=min(cc.num_subs, pool))
        if args.episodes:
            local.episodes = args.episodes
        for p in (0, 1):
            for r in single_iteration_uplift(game, local, sub, ck["sigmas"][it], p,
                                             seed=args.seed, episodes=args.h2h_episodes):
                row = {"iteration": it, "player": p, "method": r.method,
                       "utility": repr(r.utility), "stderr": repr(r.stderr)}
                rows.append(row)
                print(",".join(str(row[c]) for c in H2H_COLUMNS), flush=True)
    report = Path(args.report) if args.report else out / "h2h.csv"
    with open(report, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(H2H_COLUMNS)
        for r in rows:
            w.writerow([r[c] for c in H2H_COLUMNS])
    plotting.plot_uplift(rows, report.with_suffix(".svg"), title=f"{cfg.game} BR utility")
    print(f"wrote {report}")
    return EXIT_OK


def cmd_plot(args) -> int:
    plotting.plot_curves(args.csv, args.out, y=args.column)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_selftest(args) -> int:
    results = run_selftest(seed=args.seed, faults=args.inject_fault or ())
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        line = f"{status} {r.name}"
        print(line + (f": {r.detail}" if r.detail else ""))
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"{len(failed)} check(s) failed: {', '.join(failed)}")
        return EXIT_CHECK
    print(f"all {len(results)} checks passed")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="psrolab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run PSRO / PSD-PSRO / Conflux-PSRO")
    src = run.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", choices=configs.PRESET_NAMES)
    src.add_argument("--config", help="INI config file")
    run.add_argument("--variant", choices=("psro", "psd", "conflux"))
    run.add_argument("--seed", type=int)
    run.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                     help="e.g. iterations=2, dqn.batch_size=64, conflux.num_subs=2")
    run.add_argument("--out", help=f"output directory (default ${OUT_ENV}/<name> or runs/<name>)")
    run.add_argument("--no-resume", action="store_true", help="ignore an existing checkpoint")
    run.add_argument("--quiet", action="store_true")
    run.set_defaults(func=cmd_run)

    ev = sub.add_parser("eval", help="evaluate a run checkpoint")
    ev.add_argument("checkpoint", help="run output directory")
    ev.add_argument("--mode", choices=("exact", "approx", "h2h"), default="exact")
    ev.add_argument("--episodes", type=int, help="training episodes for exploiters / responses")
    ev.add_argument("--h2h-episodes", type=int, default=1000)
    ev.add_argument("--iterations", type=int, nargs="+", help="h2h: population prefixes")
    ev.add_argument("--seed", type=int, default=0)
    ev.add_argument("--report", help="report CSV path")
    ev.set_defaults(func=cmd_eval)

    pl = sub.add_parser("plot", help="plot metrics CSVs to one SVG")
    pl.add_argument("csv", nargs="+")
    pl.add_argument("--out", required=True)
    pl.add_argument("--column", default="exploitability")
    pl.set_defaults(func=cmd_plot)

    st = sub.add_parser("selftest", help="run the fast invariant checks")
    st.add_argument("--seed", type=int, default=0)
    st.add_argument("--inject-fault", action="append", choices=FAULTS)
    st.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return args.func(args)
    except CapacityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except (ConfigError, CheckpointError, ContractError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
