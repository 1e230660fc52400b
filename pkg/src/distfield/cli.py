"""Command-line front end: ``simulate``, ``estimate`` and ``sweep``.

Exit codes: 0 success (EM non-convergence included), 2 configuration
error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import os
import platform
import sys
import tempfile
import time
from pathlib import Path

from . import __version__
from .config import config_to_dict, load_config
from .estimator import _FusionProblem, _run_em
from .exceptions import ConfigError
from .harness import PROFILES, SWEEP_COLUMNS, run_sweep, write_outlier_csv, write_sweep_csv, write_trials_csv
from .netsim import PLACEMENT, SENSING, derive_rng, place_sensors, read_realization_csv, simulate

log = logging.getLogger("distfield")

EXIT_OK, EXIT_CONFIG, EXIT_IO = 0, 2, 3


class _IOFailure(Exception):
    pass


def _atomic_write(path: Path, write):
    """Write via ``write(tmp_path)`` then rename into place."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    os.close(fd)
    try:
        write(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_text(path, text):
    def w(tmp):
        with open(tmp, "w") as fh:
            fh.write(text)
    _atomic_write(path, w)


def _write_manifest(out_dir: Path, command, config, outputs, started):
    manifest = {
        "tool": "distfield",
        "version": __version__,
        "command": command,
        "argv": sys.argv[1:],
        "master_seed": config.master_seed,
        "config": config_to_dict(config),
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "runtime_seconds": round(time.perf_counter() - started, 3),
        "machine": {"python": platform.python_version(), "platform": platform.platform(),
                    "cpu_count": os.cpu_count()},
        "outputs": sorted(str(p.name) for p in outputs),
    }
    _write_text(out_dir / "manifest.json", json.dumps(manifest, indent=2) + "\n")


def _prepare_out(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise _IOFailure(f"cannot create output directory {out}: {exc}") from None
    return out


def _load(args):
    cfg = load_config(args.config)
    changes = {}
    if getattr(args, "profile", None):
        changes.update(PROFILES[args.profile])
    if getattr(args, "trials", None) is not None:
        changes["trials"] = args.trials
    if getattr(args, "seed", None) is not None:
        changes["master_seed"] = args.seed
    return cfg.replace(**changes) if changes else cfg


def cmd_simulate(args):
    started = time.perf_counter()
    cfg = _load(args)
    out = _prepare_out(args.out)
    # the same streams the harness uses for trial 0 at this K
    grid = place_sensors(cfg.K, cfg.region, derive_rng(cfg.master_seed, cfg.K, 0, PLACEMENT))
    real = simulate(cfg.field(), grid, cfg.quantizer(), cfg.noise(),
                    derive_rng(cfg.master_seed, cfg.K, 0, SENSING))
    target = out / "realization.csv"
    _atomic_write(target, real.to_csv)
    _write_manifest(out, "simulate", cfg, [target], started)
    print(target)
    return EXIT_OK


def cmd_estimate(args):
    started = time.perf_counter()
    cfg = _load(args)
    grid, Z = read_realization_csv(args.input, cfg.region)
    out = _prepare_out(args.out)
    noise = cfg.noise()
    problem = _FusionProblem(grid.x, grid.y, Z, cfg.quantizer(), noise.sigma, noise.eta,
                             cfg.spread)
    res = _run_em(problem, cfg.init_theta(), cfg.em)
    trace_path = out / "trace.csv"
    _atomic_write(trace_path, res.trace.to_csv)
    mu, xc, yc = (float(v) for v in res.theta_hat)
    summary = {
        "theta_hat": {"mu": mu, "xc": xc, "yc": yc},
        "converged": bool(res.converged),
        "iterations": int(res.iterations),
        "final_loglik": res.loglik,
        "failure_reason": res.failure_reason,
        "sigma2": noise.sigma2,
        "eta2": noise.eta2,
        "K": grid.K,
    }
    summary_path = out / "summary.json"
    _write_text(summary_path, json.dumps(summary, indent=2) + "\n")
    _write_manifest(out, "estimate", cfg, [trace_path, summary_path], started)
    print(json.dumps(summary))
    return EXIT_OK


def _box_outliers_csv(result, metric):
    lines = ["K,value"]
    for row in result.rows:
        for v in getattr(row, metric).outliers:
            lines.append(f"{row.K},{v!r}")
    return "\n".join(lines) + "\n"


_BOX_SCRIPT = """\
# box plot of {label} against the number of sensors
set datafile separator ','
set key off
set xlabel 'number of sensors K'
set ylabel '{label}'
set boxwidth 3
set style fill empty
plot 'sweep.csv' using 1:{q25}:{lo}:{hi}:{q75} skip 1 with candlesticks whiskerbars lt 1, \\
     'sweep.csv' using 1:{med}:{med}:{med}:{med} skip 1 with candlesticks lt -1, \\
     '{outliers}' using 1:2 skip 1 with points pt 1 lc rgb 'red'
pause -1
"""

_OUTLIER_SCRIPT = """\
# percentage of trials with squared location error above tau, one curve per K
set datafile separator ','
set xlabel 'tau'
set ylabel 'P[SE > tau] (%)'
set key top right
Ks = "{ks}"
plot for [k in Ks] 'outliers.csv' using 2:($1 == k ? $3 : NaN) skip 1 with lines title 'K='.k
pause -1
"""


def _plot_scripts(result):
    col = {name: i + 1 for i, name in enumerate(SWEEP_COLUMNS)}
    scripts = {}
    for metric, label in (("se", "squared location error"), ("ise", "integrated square error")):
        scripts[f"boxplot_{metric}.gp"] = _BOX_SCRIPT.format(
            label=label, q25=col[f"{metric}_q25"], q75=col[f"{metric}_q75"],
            lo=col[f"{metric}_whisk_lo"], hi=col[f"{metric}_whisk_hi"],
            med=col[f"{metric}_median"], outliers=f"{metric}_outliers.csv")
    scripts["outliers.gp"] = _OUTLIER_SCRIPT.format(ks=" ".join(str(r.K) for r in result.rows))
    return scripts


def cmd_sweep(args):
    started = time.perf_counter()
    cfg = _load(args)
    out = _prepare_out(args.out)
    result = run_sweep(cfg, n_jobs=args.jobs)
    written = []
    for name, writer in (("sweep.csv", write_sweep_csv), ("trials.csv", write_trials_csv),
                         ("outliers.csv", write_outlier_csv)):
        path = out / name
        _atomic_write(path, lambda tmp, w=writer: w(result, tmp))
        written.append(path)
    for metric in ("se", "ise"):
        path = out / f"{metric}_outliers.csv"
        _write_text(path, _box_outliers_csv(result, metric))
        written.append(path)
    for name, text in _plot_scripts(result).items():
        path = out / name
        _write_text(path, text)
        written.append(path)
    _write_manifest(out, "sweep", cfg, written, started)
    print(out / "sweep.csv")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="distfield", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, help="experiment config (INI)")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="override master_seed")

    sp = sub.add_parser("simulate", help="write one network realization as CSV")
    common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("estimate", help="run EM on a realization CSV")
    common(sp)
    sp.add_argument("--input", required=True, help="realization CSV (columns x, y, Z)")
    sp.set_defaults(func=cmd_estimate)

    sp = sub.add_parser("sweep", help="Monte Carlo sweep over K")
    common(sp)
    sp.add_argument("--trials", type=int, default=None)
    sp.add_argument("--profile", choices=sorted(PROFILES), default=None)
    sp.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    sp.set_defaults(func=cmd_sweep)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (_IOFailure, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
