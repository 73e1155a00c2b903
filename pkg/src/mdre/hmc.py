"""Posterior uncertainty of MDRE log-ratios via Hamiltonian Monte Carlo.

The target is the multinomial likelihood summed over all labelled samples
times an isotropic Gaussian prior on the flattened score parameters.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass

import numpy as np

from mdre import scoremodel as sm

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class HmcConfig:
    step_size: float = 1e-3
    leapfrog_steps: int = 20
    n_samples: int = 500
    burn_in: int = 200
    prior_std: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if self.leapfrog_steps < 1:
            raise ValueError("leapfrog_steps must be >= 1")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.burn_in < 0:
            raise ValueError("burn_in must be >= 0")
        if not self.prior_std > 0:
            raise ValueError("prior_std must be positive")

    def to_dict(self):
        return asdict(self)


@dataclass
class HmcResult:
    draws: np.ndarray  # (n_samples, n_params), flattened as scoremodel.pack
    template: sm.ScoreSet
    acceptance_rate: float
    energy_errors: np.ndarray  # |dH| per trajectory, nan where H was non-finite
    accepted: np.ndarray

    def score_sets(self):
        return [self.template.with_scores(sm.unpack(t, self.template)) for t in self.draws]


class _Target:
    def __init__(self, template, data, prior_std):
        self.template = template
        self.inv_var = 1.0 / prior_std**2
        if data is None or data.X.shape[0] == 0:
            self.data = None
        else:
            if data.n_classes != template.n_classes:
                raise ValueError("data and score set disagree on the number of classes")
            self.data = data
            self.wt = np.ones(data.X.shape[0])

    def __call__(self, theta, want_grad=True):
        """Log posterior and its gradient (up to an additive constant)."""
        lp = -0.5 * self.inv_var * float(theta @ theta)
        g = -self.inv_var * theta if want_grad else None
        if self.data is not None:
            nll, gnll = sm.flat_loss_grad(
                self.template,
                theta,
                self.data.X,
                self.data.labels,
                self.wt,
                self.template.log_priors,
                want_grad,
            )
            lp -= nll
            if want_grad:
                g = g - gnll
        return lp, g


def _flatten(params):
    if isinstance(params, sm.ScoreSet):
        return params, sm.pack(params)
    if hasattr(params, "scores") and params.scores is not None:
        return params.scores, sm.pack(params.scores)
    raise TypeError("expected a ScoreSet or a fitted multiclass estimator")


def log_posterior(params, data, prior_std=1.0):
    """Summed class log-likelihood of ``data`` minus ``|theta|^2 / (2 prior_std^2)``.

    ``params`` is a ScoreSet (or a fitted estimator holding one); ``data`` may
    be ``None`` for the prior alone.
    """
    template, theta = _flatten(params)
    val, _ = _Target(template, data, prior_std)(theta, want_grad=False)
    return val


def log_posterior_grad(params, data, prior_std=1.0):
    """Gradient of :func:`log_posterior` as a flat vector in ``scoremodel.pack`` order."""
    template, theta = _flatten(params)
    _, g = _Target(template, data, prior_std)(theta)
    return g


def hmc_sample(data, init, cfg=None):
    """Leapfrog HMC with an identity mass matrix, started at ``init``.

    Trajectories whose Hamiltonian is not finite are rejected, never fatal.
    """
    cfg = cfg or HmcConfig()
    template, theta = _flatten(init)
    if not np.all(np.isfinite(theta)):
        raise ValueError("initial parameters must be finite")
    target = _Target(template, data, cfg.prior_std)
    rng = np.random.default_rng(cfg.seed)
    eps, L = cfg.step_size, cfg.leapfrog_steps

    lp, g = target(theta)
    total = cfg.burn_in + cfg.n_samples
    draws = np.empty((cfg.n_samples, theta.size))
    dH = np.full(total, np.nan)
    acc = np.zeros(total, dtype=bool)

    for it in range(total):
        r0 = rng.standard_normal(theta.size)
        th, r, gg = theta.copy(), r0.copy(), g
        new_lp, finite = lp, True
        with np.errstate(over="ignore", invalid="ignore"):
            r = r + 0.5 * eps * gg
            for step in range(L):
                th = th + eps * r
                new_lp, gg = target(th)
                if not math.isfinite(new_lp) or not np.all(np.isfinite(gg)):
                    finite = False
                    break
                if step < L - 1:
                    r = r + eps * gg
            r = r + 0.5 * eps * gg
            h0 = -lp + 0.5 * float(r0 @ r0)
            h1 = -new_lp + 0.5 * float(r @ r) if finite else math.inf
        if math.isfinite(h1):
            dH[it] = abs(h1 - h0)
            if math.log(rng.uniform()) < h0 - h1:
                theta, lp, g = th, new_lp, gg
                acc[it] = True
        if it >= cfg.burn_in:
            draws[it - cfg.burn_in] = theta

    rate = float(acc[cfg.burn_in :].mean())
    if log.isEnabledFor(logging.DEBUG) and np.isfinite(dH).any():
        log.debug("hmc: acceptance %.3f, median |dH| %.3g", rate, np.nanmedian(dH))
    return HmcResult(draws, template, rate, dH, acc)


@dataclass
class PosteriorRatioStats:
    points: np.ndarray
    mean: np.ndarray
    std: np.ndarray


def ratio_uncertainty(draws, eval_points, i=0, j=1):
    """Posterior mean and std of ``h_i - h_j`` at each evaluation point.

    ``draws`` is an :class:`HmcResult` or a sequence of ScoreSets.
    """
    sets = draws.score_sets() if isinstance(draws, HmcResult) else list(draws)
    if len(sets) < 2:
        raise ValueError("need at least two posterior draws")
    X = np.asarray(eval_points, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    R = np.stack([_pair(sm.logits(s, X), i, j) for s in sets])
    # centre on the first draw so identical draws give exactly zero spread
    dev = R - R[0]
    return PosteriorRatioStats(X, R[0] + dev.mean(axis=0), dev.std(axis=0, ddof=1))


def _pair(H, i, j):
    return H[:, i] - H[:, j]
