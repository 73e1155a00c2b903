"""Diagnostics: train/eval distribution shift, accuracy band, RND support check, HMC bands."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from mdre import distributions as dist
from mdre import estimators as est
from mdre import hmc as hmc_mod
from mdre import scoremodel as sm
from mdre import training
from mdre.auxiliary import LinearMix, build_auxiliary_samples
from mdre.harness.runner import (
    S_AUX,
    S_EVAL,
    S_HMC,
    S_P,
    S_Q,
    ResultRecord,
    draw_training_data,
    stage,
    subseed,
    true_value,
)

SCATTER_COLUMNS = ("readout", "sample_dist", "x", "estimated", "true")


def linear_mix_spec(p, q, alpha, variant="plain"):
    """Exact law of ``w_p x_p + alpha x_q`` for independent Gaussian p, q."""
    if not (isinstance(p, dist.Gaussian) and isinstance(q, dist.Gaussian)):
        raise TypeError("closed-form mixing law needs Gaussian p and q")
    a = float(alpha)
    wp = math.sqrt(1.0 - a * a) if variant == "tre_skewed" else 1.0 - a
    d = p.dim
    cov = wp * wp * p.cov.matrix(d) + a * a * q.cov.matrix(d)
    mean = wp * p.mean + a * q.mean
    if d == 1:
        return dist.normal(mean, math.sqrt(cov[0, 0]))
    return dist.Gaussian(mean, dist.CovSpec("full", cov))


@dataclass
class ShiftReport:
    """Mean absolute log-ratio error per (readout, sampling distribution).

    ``rows`` holds the tidy scatter data (see ``SCATTER_COLUMNS``).
    """

    errors: dict
    link_own_errors: list
    rows: list = field(repr=False, default_factory=list)

    def error(self, readout, sample_dist):
        return self.errors[(readout, sample_dist)]


def shift_diagnostic(cfg, seed=None):
    """TRE links and chain vs MDRE readouts on samples from every distribution.

    Readouts: ``tre_link{k}`` (each link's own ratio), ``tre_chain``,
    ``mdre_aux`` (MDRE with the config's auxiliary scheme, e.g. Cauchy) and
    ``mdre_waymarks`` (MDRE with the TRE waymarks as auxiliary classes).
    """
    seed = cfg.seed if seed is None else int(seed)
    if cfg.p.dim != 1:
        raise ValueError("the shift diagnostic is defined for 1-D tasks")
    p, q, n = cfg.p, cfg.q, cfg.n_per_class
    alphas = list(cfg.method_options.get("alphas", (0.25, 0.5, 0.75)))
    variant = cfg.method_options.get("variant", "plain")
    scheme = LinearMix(tuple(alphas), variant)

    with stage("sample"):
        xp = dist.sample(p, n, subseed(seed, S_P))
        xq = dist.sample(q, n, subseed(seed, S_Q))
    with stage("auxiliary"):
        waymarks = build_auxiliary_samples(scheme, xp, xq, subseed(seed, S_AUX))
        aux = (
            build_auxiliary_samples(cfg.auxiliary, xp, xq, subseed(seed, S_AUX + 100))
            if cfg.auxiliary is not None
            else []
        )
    opt = cfg.optimizer
    with stage("fit"):
        tre = training.fit_tre(xp, xq, alphas, variant, opt, waymarks=waymarks)
        mdre_aux = training.fit_multiclass([xp, xq, *aux], opt=opt) if aux else None
        mdre_wm = training.fit_multiclass([xp, xq, *waymarks], opt=opt)

    with stage("estimate"):
        chain = [p, *[linear_mix_spec(p, q, a, variant) for a in alphas], q]
        names = ["p", *[f"m{k + 1}" for k in range(len(alphas))], "q"]
        ne = cfg.n_eval
        ep = dist.sample(p, ne, subseed(seed, S_EVAL))
        eq = dist.sample(q, ne, subseed(seed, S_EVAL + 1))
        eval_sets = dict(zip(names, [ep, *build_auxiliary_samples(scheme, ep, eq, subseed(seed, S_EVAL + 2)), eq]))
        if cfg.auxiliary is not None:
            eval_sets["aux"] = build_auxiliary_samples(cfg.auxiliary, ep, eq, subseed(seed, S_EVAL + 3))[0]
        true_pq = est.exact_log_ratio(p, q)

        readouts = {}
        for k, link in enumerate(tre.links):
            readouts[f"tre_link{k}"] = (
                lambda X, link=link: est.mdre_log_ratio(link, X),
                est.exact_log_ratio(chain[k], chain[k + 1]),
            )
        readouts["tre_chain"] = (lambda X: est.tre_log_ratio(tre, X), true_pq)
        if mdre_aux is not None:
            readouts["mdre_aux"] = (lambda X: est.mdre_log_ratio(mdre_aux, X), true_pq)
        readouts["mdre_waymarks"] = (lambda X: est.mdre_log_ratio(mdre_wm, X), true_pq)

        errors, rows = {}, []
        for rname, (f_est, f_true) in readouts.items():
            for sname, X in eval_sets.items():
                e, t = f_est(X), f_true(X)
                errors[(rname, sname)] = float(np.mean(np.abs(e - t)))
                rows.extend((rname, sname, float(x), float(a), float(b)) for x, a, b in zip(X[:, 0], e, t))
        own = [errors[(f"tre_link{k}", names[k + 1])] for k in range(len(tre.links))]
    return ShiftReport(errors, own, rows)


# ------------------------------------------------------------- accuracy band


@dataclass
class AccuracyBand:
    accuracies: np.ndarray
    verdict: str  # too_easy | too_hard | in_band


def accuracy_band(fit, validation=None, low=0.5, high=0.95):
    """Per-class held-out accuracy and a verdict against the (low, high) band.

    ``validation`` is a list of per-class sample matrices or ClassedSamples;
    by default the split stored on the fit is used.
    """
    if validation is None:
        validation = fit.extras.get("validation") if hasattr(fit, "extras") else None
    if validation is None:
        raise ValueError("no validation split: set OptimizerConfig.validation_fraction")
    if not isinstance(validation, sm.ClassedSamples):
        validation = sm.ClassedSamples.from_classes([training._as_matrix(v) for v in validation])
    scores = fit.scores if hasattr(fit, "scores") else fit
    acc = sm.accuracy_per_class(scores, validation)
    if np.all(acc > high):
        verdict = "too_easy"
    elif np.all(acc < low):
        verdict = "too_hard"
    else:
        verdict = "in_band"
    return AccuracyBand(acc, verdict)


# --------------------------------------------------------------------- RND


@dataclass
class RndReport:
    n: int
    violations: int  # m-samples where log m - log q is +inf or above threshold
    infinite: int
    max_finite: float
    threshold: float
    p_in_m: float  # fraction of p-samples inside m's support
    m_in_q: float

    @property
    def p_subset_m(self):
        return self.p_in_m == 1.0


def rnd_diagnostic(p, q, m, samples=None, n=10_000, seed=0, threshold=100.0):
    """Check that dm/dq exists on m-samples and that p's support sits inside m's.

    A point violates when ``log m - log q`` is infinite or above ``threshold``.
    The default of 100 sits well above what smooth nested supports produce
    near their edges (about 54 for the ``rnd_nested`` preset).
    """
    xm = dist.sample(m, n, subseed(seed, 0)) if samples is None else np.asarray(samples, float).reshape(-1, 1)
    xp = dist.sample(p, n, subseed(seed, 1))
    with np.errstate(invalid="ignore"):
        r = dist.log_density(m, xm) - dist.log_density(q, xm)
    inf = ~np.isfinite(r)
    over = inf | (r > threshold)
    fin = r[~inf]
    return RndReport(
        n=int(xm.shape[0]),
        violations=int(over.sum()),
        infinite=int(inf.sum()),
        max_finite=float(fin.max()) if fin.size else -math.inf,
        threshold=threshold,
        p_in_m=float(np.mean(np.isfinite(dist.log_density(m, xp)))),
        m_in_q=float(np.mean(np.isfinite(dist.log_density(q, xm)))),
    )


def rnd_record(cfg, seed):
    t0 = time.perf_counter()
    with stage("rnd"):
        rep = rnd_diagnostic(cfg.p, cfg.q, cfg.m, n=cfg.n_eval, seed=seed)
    return ResultRecord(
        config_hash=cfg.config_hash(),
        seed=seed,
        method="rnd",
        task=cfg.task,
        true_value=0.0,
        estimate=float(rep.violations),
        stderr=0.0,
        runtime_s=time.perf_counter() - t0,
        notes=f"infinite={rep.infinite};p_in_m={rep.p_in_m:.6g};m_in_q={rep.m_in_q:.6g};preset={cfg.name}",
        name=cfg.name,
    )


# --------------------------------------------------------------------- HMC


@dataclass
class HmcReport:
    fit: object
    result: hmc_mod.HmcResult
    stats: hmc_mod.PosteriorRatioStats
    point_estimate: np.ndarray
    true_log_ratio: np.ndarray
    kl_draws: np.ndarray


def hmc_uncertainty(cfg, seed=None):
    """Fit MDRE, run HMC from the fit, summarise log-ratio uncertainty on the grid."""
    seed = cfg.seed if seed is None else int(seed)
    xp, xq, aux = draw_training_data(cfg, seed)
    fit = training_fit(cfg, xp, xq, aux)
    hcfg = cfg.hmc or hmc_mod.HmcConfig()
    hcfg = hmc_mod.HmcConfig(**{**hcfg.to_dict(), "seed": subseed(seed, S_HMC)})
    with stage("hmc"):
        data = sm.ClassedSamples.from_classes([xp, xq, *aux])
        res = hmc_mod.hmc_sample(data, fit, hcfg)
    grid = np.asarray(cfg.eval_grid if cfg.eval_grid is not None else np.linspace(-6, 6, 121), float)
    with stage("estimate"):
        stats = hmc_mod.ratio_uncertainty(res, grid)
        point = est.mdre_log_ratio(fit, grid[:, None])
        truth = est.exact_log_ratio(cfg.p, cfg.q)(grid[:, None])
        xe = dist.sample(cfg.p, cfg.n_eval, subseed(seed, S_EVAL))
        kl = np.array([est.mdre_log_ratio(training.FittedEstimator("mdre", s), xe).mean() for s in res.score_sets()])
    return HmcReport(fit, res, stats, point, truth, kl)


def training_fit(cfg, xp, xq, aux):
    with stage("fit"):
        return training.fit_multiclass([xp, xq, *aux], opt=cfg.optimizer)


def hmc_run(cfg, seed):
    t0 = time.perf_counter()
    rep = hmc_uncertainty(cfg, seed)
    return ResultRecord(
        config_hash=cfg.config_hash(),
        seed=seed,
        method="mdre_hmc",
        task=cfg.task,
        true_value=true_value(cfg),
        estimate=float(rep.kl_draws.mean()),
        stderr=float(rep.kl_draws.std(ddof=1)),
        runtime_s=time.perf_counter() - t0,
        notes=f"acceptance={rep.result.acceptance_rate:.6g};preset={cfg.name}",
        name=cfg.name,
    )
