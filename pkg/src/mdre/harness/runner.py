"""End-to-end experiment execution: sample, build auxiliaries, fit, estimate, compare."""
from __future__ import annotations

import logging
import math
import time
import warnings
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from mdre import distributions as dist
from mdre import estimators as est
from mdre import oracle
from mdre import training
from mdre.auxiliary import LinearMix, build_auxiliary_samples

log = logging.getLogger(__name__)

CSV_COLUMNS = (
    "config_hash",
    "seed",
    "method",
    "task",
    "true_value",
    "estimate",
    "stderr",
    "runtime_s",
    "notes",
)


class StageError(RuntimeError):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


@contextmanager
def stage(name):
    try:
        yield
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


@dataclass
class ResultRecord:
    config_hash: str
    seed: int
    method: str
    task: str
    true_value: float
    estimate: float
    stderr: float
    runtime_s: float
    notes: str = ""
    name: str = ""
    train_accuracy: list = field(default_factory=list)
    val_accuracy: list = field(default_factory=list)
    bounds: tuple | None = None

    def within_bounds(self):
        if self.bounds is None:
            return True
        lo, hi = self.bounds
        if not math.isfinite(self.estimate):
            return False
        return (lo is None or self.estimate >= lo) and (hi is None or self.estimate <= hi)

    def row(self):
        """The CSV row, numbers at 6 significant digits."""
        return [
            self.config_hash,
            str(self.seed),
            self.method,
            self.task,
            fmt(self.true_value),
            fmt(self.estimate),
            fmt(self.stderr),
            fmt(self.runtime_s),
            self.notes,
        ]

    def to_dict(self):
        return {
            "name": self.name,
            **dict(zip(CSV_COLUMNS, self.row_values())),
            "train_accuracy": self.train_accuracy,
            "val_accuracy": self.val_accuracy,
            "bounds": list(self.bounds) if self.bounds is not None else None,
            "within_bounds": self.within_bounds(),
        }

    def row_values(self):
        return [
            self.config_hash,
            self.seed,
            self.method,
            self.task,
            self.true_value,
            self.estimate,
            self.stderr,
            self.runtime_s,
            self.notes,
        ]


def fmt(v):
    if v is None:
        return "nan"
    return f"{float(v):.6g}"


def subseed(seed, k):
    """Independent integer stream ``k`` derived from a run seed."""
    return int(np.random.SeedSequence([int(seed), int(k)]).generate_state(1)[0])


# stream ids
S_P, S_Q, S_SHUFFLE, S_AUX, S_EVAL, S_HMC = range(6)


def true_value(cfg):
    """Ground truth KL(p || q) for a config: closed form, quadrature or Monte Carlo."""
    if cfg.true_value is not None:
        return float(cfg.true_value)
    p, q = cfg.p, cfg.q
    if isinstance(p, dist.Gaussian) and isinstance(q, dist.Gaussian):
        return dist.gaussian_kl(p, q)
    if p.dim == 1:
        return oracle.quadrature_kl_1d(p, q)
    val, _ = oracle.mc_kl(p, q, 200_000, subseed(cfg.seed, 99))
    return val


def draw_training_data(cfg, seed):
    """(xp, xq, aux list) for one run."""
    n = cfg.n_per_class
    with stage("sample"):
        xp = dist.sample(cfg.p, n, subseed(seed, S_P))
        if cfg.task == "mi_highdim" and cfg.marginal_blocks:
            joint = dist.sample(cfg.p, n, subseed(seed, S_Q))
            xq = est.product_of_marginals(
                joint, subseed(seed, S_SHUFFLE), mode="blocks", blocks=cfg.marginal_blocks
            )
        else:
            xq = dist.sample(cfg.q, n, subseed(seed, S_Q))
    aux = []
    if cfg.method == "mdre" and cfg.auxiliary is not None:
        with stage("auxiliary"):
            aux = build_auxiliary_samples(cfg.auxiliary, xp, xq, subseed(seed, S_AUX))
    return xp, xq, aux


def fit_method(cfg, xp, xq, aux, seed):
    opt = cfg.optimizer
    with stage("fit"):
        if cfg.method == "mdre":
            return training.fit_multiclass([xp, xq, *aux], opt=opt)
        if cfg.method == "bdre":
            return training.fit_bdre(xp, xq, opt)
        mo = cfg.method_options
        return training.fit_tre(
            xp, xq, mo["alphas"], mo.get("variant", "plain"), opt, seed=subseed(seed, S_AUX)
        )


def ratio_function(fit):
    return est.LogRatioFunction(fit, 0, 1)


def eval_samples(cfg, seed, xp):
    if cfg.eval_mode == "insample":
        return xp
    return dist.sample(cfg.p, cfg.n_eval, subseed(seed, S_EVAL))


def _notes(fit, extra=()):
    md = fit.metadata
    if fit.kind == "tre":
        parts = [f"links={len(fit.links)}"]
    else:
        parts = [f"iters={md.get('n_iter')}", f"converged={md.get('converged')}"]
    return ";".join([*parts, *extra])


def _bounds(cfg, truth):
    if cfg.bounds is not None:
        return cfg.bounds
    hw = cfg.method_options.get("bound_halfwidth")
    if hw is not None:
        return (truth - hw, truth + hw)
    return None


def run(cfg, seed=None):
    """Run one seed of ``cfg`` (default: its base seed) and return a ResultRecord."""
    seed = cfg.seed if seed is None else int(seed)
    if cfg.task == "hmc_uncertainty":
        from mdre.harness.diagnostics import hmc_run

        return hmc_run(cfg, seed)
    if cfg.task == "rnd_diagnostic":
        from mdre.harness.diagnostics import rnd_record

        return rnd_record(cfg, seed)

    t0 = time.perf_counter()
    with stage("oracle"), warnings.catch_warnings():
        warnings.simplefilter("ignore", oracle.SupportViolation)
        truth = true_value(cfg)
    xp, xq, aux = draw_training_data(cfg, seed)
    fit = fit_method(cfg, xp, xq, aux, seed)
    with stage("estimate"):
        xe = eval_samples(cfg, seed, xp)
        value, se = est.estimate_kl(ratio_function(fit), xe)
    elapsed = time.perf_counter() - t0

    md = fit.metadata
    train_acc = md.get("train_accuracy", [])
    if fit.kind == "tre":
        train_acc = [lk.metadata["train_accuracy"] for lk in fit.links]
    rec = ResultRecord(
        config_hash=cfg.config_hash(),
        seed=seed,
        method=cfg.method,
        task=cfg.task,
        true_value=truth,
        estimate=value,
        stderr=se,
        runtime_s=elapsed,
        notes=_notes(fit, [f"preset={cfg.name}"]),
        name=cfg.name,
        train_accuracy=train_acc,
        val_accuracy=md.get("val_accuracy", []),
        bounds=_bounds(cfg, truth),
    )
    log.info("%s seed=%d estimate=%.6g truth=%.6g (%.1fs)", cfg.name, seed, value, truth, elapsed)
    return rec


def run_all_seeds(cfg):
    return [run(cfg, s) for s in cfg.seeds()]


def mean_record(records):
    """Aggregate per-seed records of one preset into a mean row (stderr across seeds)."""
    r0 = records[0]
    vals = np.array([r.estimate for r in records])
    se = float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else records[0].stderr
    return ResultRecord(
        config_hash=r0.config_hash,
        seed=r0.seed,
        method=r0.method,
        task=r0.task,
        true_value=r0.true_value,
        estimate=float(vals.mean()),
        stderr=se,
        runtime_s=float(sum(r.runtime_s for r in records)),
        notes=f"mean_of={len(records)};preset={r0.name}",
        name=r0.name,
        bounds=r0.bounds,
    )


def linear_mix_of(cfg):
    """TRE waymark scheme of a config as a LinearMix."""
    mo = cfg.method_options
    return LinearMix(tuple(mo["alphas"]), mo.get("variant", "plain"))
