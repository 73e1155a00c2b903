"""Command-line entry point.

Exit codes: 0 success, 2 when ``bench`` sees an estimate outside its
acceptance bounds, 1 on any error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from mdre import distributions as dist
from mdre._util import canonical_json
from mdre.harness import diagnostics as diag
from mdre.harness import presets as pr
from mdre.harness import runner
from mdre.harness.config import load_config

log = logging.getLogger("mdre")

EXIT_OK, EXIT_ERROR, EXIT_BOUNDS = 0, 1, 2


class Appender:
    """Single writer for result rows; CSV streams, JSON is written on close."""

    def __init__(self, path, fmt, columns):
        self.fh = open(path, "w", newline="") if path else sys.stdout
        self.fmt = fmt
        self.columns = list(columns)
        self.items = []
        if fmt == "csv":
            self.writer = csv.writer(self.fh, lineterminator="\n")
            self.writer.writerow(self.columns)

    def add(self, values, extra=None):
        if self.fmt == "csv":
            self.writer.writerow(values)
            self.fh.flush()
        else:
            self.items.append({**dict(zip(self.columns, values)), **(extra or {})})

    def close(self):
        if self.fmt == "json":
            json.dump(self.items, self.fh, indent=2, default=_json_default)
            self.fh.write("\n")
        if self.fh is not sys.stdout:
            self.fh.close()


def _json_default(o):
    if isinstance(o, (np.generic,)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


def _record_extra(rec):
    return {
        "name": rec.name,
        "train_accuracy": rec.train_accuracy,
        "val_accuracy": rec.val_accuracy,
        "bounds": list(rec.bounds) if rec.bounds is not None else None,
        "within_bounds": rec.within_bounds(),
    }


def _resolve(args, default_preset=None):
    if getattr(args, "config", None):
        cfg = load_config(args.config)
    else:
        name = getattr(args, "preset", None) or default_preset
        if name is None:
            raise ValueError("need --config PATH or --preset NAME")
        cfg = pr.get_preset(name)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _run_one(job):
    cfg, seed = job
    return runner.run(cfg, seed)


def _map(jobs, n_jobs):
    if n_jobs <= 1 or len(jobs) <= 1:
        for j in jobs:
            yield _run_one(j)
        return
    with ProcessPoolExecutor(max_workers=n_jobs) as ex:
        yield from ex.map(_run_one, jobs)


# ----------------------------------------------------------------- commands


def cmd_sample(args):
    cfg = _resolve(args)
    spec = {"p": cfg.p, "q": cfg.q, "m": cfg.m or getattr(cfg.auxiliary, "spec", None)}[args.which]
    if spec is None:
        raise ValueError(f"config has no '{args.which}' distribution")
    X = dist.sample(spec, args.n, cfg.seed)
    cols = [f"x{i}" for i in range(X.shape[1])]
    out = Appender(args.out, args.format, cols)
    for row in X:
        out.add([f"{v:.6g}" for v in row] if args.format == "csv" else row.tolist())
    out.close()
    return EXIT_OK


def cmd_fit(args):
    cfg = _resolve(args)
    xp, xq, aux = runner.draw_training_data(cfg, cfg.seed)
    fit = runner.fit_method(cfg, xp, xq, aux, cfg.seed)
    text = canonical_json({"config": cfg.to_dict(), "fit": fit.to_dict()}) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _records_cmd(args, expected_tasks):
    cfg = _resolve(args)
    if cfg.task not in expected_tasks:
        log.warning("config task %r run through a %s command", cfg.task, args.command)
    seeds = [cfg.seed] if args.seed is not None else cfg.seeds()
    out = Appender(args.out, args.format, runner.CSV_COLUMNS)
    for rec in _map([(cfg, s) for s in seeds], args.jobs):
        out.add(rec.row() if args.format == "csv" else rec.row_values(), _record_extra(rec))
    out.close()
    return EXIT_OK


def cmd_kl(args):
    return _records_cmd(args, ("kl_1d", "robustness"))


def cmd_mi(args):
    return _records_cmd(args, ("mi_highdim",))


def cmd_bench(args):
    if args.target == "all":
        cfgs = [pr.get_preset(n) for n in pr.bench_names()]
    elif args.target.endswith(".json"):
        cfgs = [load_config(args.target)]
    else:
        cfgs = [pr.get_preset(args.target)]
    if args.seed is not None:
        cfgs = [replace(c, seed=args.seed) for c in cfgs]
    jobs = [(c, s) for c in cfgs for s in c.seeds()]
    out = Appender(args.out, args.format, runner.CSV_COLUMNS)
    by_name, violations = {}, []
    for rec in _map(jobs, args.jobs):
        out.add(rec.row() if args.format == "csv" else rec.row_values(), _record_extra(rec))
        by_name.setdefault(rec.name, []).append(rec)
        cfg = next(c for c in cfgs if c.name == rec.name)
        if len(by_name[rec.name]) == cfg.n_seeds:
            agg = runner.mean_record(by_name[rec.name]) if cfg.n_seeds > 1 else rec
            if cfg.n_seeds > 1:
                out.add(agg.row() if args.format == "csv" else agg.row_values(), _record_extra(agg))
            ok = agg.within_bounds()
            over = cfg.budget_s is not None and agg.runtime_s > cfg.budget_s
            status = "PASS" if ok else "FAIL"
            print(
                f"[{status}] {cfg.name}: estimate {agg.estimate:.6g} truth {agg.true_value:.6g} "
                f"bounds {agg.bounds} runtime {agg.runtime_s:.1f}s" + (" (over budget)" if over else ""),
                file=sys.stderr,
            )
            if not ok:
                violations.append(cfg.name)
    out.close()
    return EXIT_BOUNDS if violations else EXIT_OK


def cmd_diagnose(args):
    if args.kind == "shift":
        cfg = _resolve(args, "shift")
        rep = diag.shift_diagnostic(cfg)
        out = Appender(args.out, args.format, diag.SCATTER_COLUMNS)
        for r in rep.rows:
            out.add([r[0], r[1], *(f"{v:.6g}" for v in r[2:])] if args.format == "csv" else list(r))
        out.close()
        for (rd, sd), e in sorted(rep.errors.items()):
            print(f"mean|err| {rd:>14s} on {sd:>4s}: {e:.4g}", file=sys.stderr)
        return EXIT_OK
    cfg = _resolve(args, "rnd")
    rep = diag.rnd_diagnostic(cfg.p, cfg.q, cfg.m, n=cfg.n_eval, seed=cfg.seed)
    cols = ["n", "violations", "infinite", "max_finite", "threshold", "p_in_m", "m_in_q"]
    out = Appender(args.out, args.format, cols)
    vals = [getattr(rep, c) for c in cols]
    out.add([str(v) if isinstance(v, int) else f"{v:.6g}" for v in vals] if args.format == "csv" else vals)
    out.close()
    return EXIT_OK


def cmd_hmc(args):
    cfg = _resolve(args, "hmc")
    rep = diag.hmc_uncertainty(cfg)
    cols = ["x", "posterior_mean", "posterior_std", "point_estimate", "true_log_ratio"]
    out = Appender(args.out, args.format, cols)
    st = rep.stats
    for k in range(st.mean.size):
        vals = [st.points[k, 0], st.mean[k], st.std[k], rep.point_estimate[k], rep.true_log_ratio[k]]
        out.add([f"{float(v):.6g}" for v in vals] if args.format == "csv" else [float(v) for v in vals])
    out.close()
    print(f"acceptance rate {rep.result.acceptance_rate:.3f}", file=sys.stderr)
    return EXIT_OK


# ------------------------------------------------------------------- parser


def _common(p, config=True):
    if config:
        p.add_argument("--config", metavar="PATH", help="experiment config JSON")
        p.add_argument("--preset", metavar="NAME", help="named preset instead of --config")
    p.add_argument("--seed", type=int, default=None, metavar="N")
    p.add_argument("--jobs", type=int, default=1, metavar="N")
    p.add_argument("--out", metavar="PATH", default=None)
    p.add_argument("--format", choices=("csv", "json"), default="csv")


def build_parser():
    ap = argparse.ArgumentParser(prog="mdre", description="Multiclass density-ratio estimation toolkit")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="draw samples from a config's p, q or m")
    _common(p)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--which", choices=("p", "q", "m"), default="p")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("fit", help="fit the configured estimator and write the model JSON")
    _common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("kl", help="estimate KL(p||q) for a config")
    _common(p)
    p.set_defaults(func=cmd_kl)

    p = sub.add_parser("mi", help="estimate mutual information for a config")
    _common(p)
    p.set_defaults(func=cmd_mi)

    p = sub.add_parser("bench", help="run a preset (or all) and check acceptance bounds")
    p.add_argument("target", help="preset name, 'all', or a config .json")
    _common(p, config=False)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("diagnose", help="shift or rnd diagnostics")
    p.add_argument("kind", choices=("shift", "rnd"))
    _common(p)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("hmc", help="posterior log-ratio bands via HMC")
    _common(p)
    p.set_defaults(func=cmd_hmc)

    p = sub.add_parser("presets", help="list preset names")
    p.set_defaults(func=lambda a: print("\n".join(sorted(pr.presets()))) or EXIT_OK)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except KeyboardInterrupt:
        return EXIT_ERROR
    except Exception as exc:  # noqa: BLE001
        print(f"error: {exc}", file=sys.stderr)
        log.debug("traceback", exc_info=True)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
