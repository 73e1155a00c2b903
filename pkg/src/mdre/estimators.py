"""Log-ratio readouts and the KL / MI estimates built on them."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from mdre import scoremodel as sm
from mdre.distributions import log_density
from mdre.training import FittedEstimator


@dataclass(frozen=True)
class LogRatioFunction:
    """``log p_i/p_j`` read from a fitted estimator (classes are zero-based).

    For a TRE chain only the pair (0, 1) is defined.
    """

    fit: FittedEstimator
    i: int = 0
    j: int = 1

    def __post_init__(self):
        if self.i == self.j:
            raise ValueError("class pair must be distinct")
        if self.fit.kind == "tre":
            if (self.i, self.j) != (0, 1):
                raise ValueError("a TRE chain only reads log p/q")
        else:
            C = self.fit.scores.n_classes
            if not (0 <= self.i < C and 0 <= self.j < C):
                raise IndexError(f"class index out of range for {C} classes")

    def __call__(self, X):
        if self.fit.kind == "tre":
            return tre_log_ratio(self.fit, X)
        return pair_log_ratio(self.fit, self.i, self.j, X)


def pair_log_ratio(fit, i, j, X):
    """``h_i(x) - h_j(x)``; a 1-D ``X`` of length D is treated as one point."""
    if fit.kind == "tre":
        raise TypeError("pairwise readout needs a single multiclass model")
    C = fit.scores.n_classes
    if i == j:
        raise ValueError("class pair must be distinct")
    if not (0 <= i < C and 0 <= j < C):
        raise IndexError(f"class index out of range for {C} classes")
    H = sm.logits(fit.scores, X)
    return H[..., i] - H[..., j]


def mdre_log_ratio(fit, X):
    """Estimated ``log p/q`` from an MDRE or BDRE fit (``h_0 - h_1``)."""
    return pair_log_ratio(fit, 0, 1, X)


def tre_log_ratio(fit, X):
    """Telescoped ``log p/q``: the sum of every link's logit difference."""
    if fit.kind != "tre":
        raise TypeError("expected a TRE chain")
    if not fit.links:
        raise ValueError("empty chain")
    return sum(mdre_log_ratio(link, X) for link in fit.links)


def estimate_kl(ratio, samples_p):
    """Monte Carlo mean of ``ratio`` over draws from p, with its standard error.

    ``ratio`` is any callable mapping an (n, D) matrix to n log-ratios.
    """
    X = np.asarray(samples_p, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] < 2:
        raise ValueError("need at least two samples")
    v = np.asarray(ratio(X), dtype=np.float64).reshape(-1)
    return float(v.mean()), float(v.std(ddof=1) / np.sqrt(v.size))


def product_of_marginals(samples_joint, seed, mode="halves", blocks=None):
    """Break the dependence between coordinate groups by permuting rows per group.

    ``mode``:
      * ``halves``: the trailing D/2 columns are permuted jointly.
      * ``coordinates``: every column gets its own permutation.
      * ``blocks``: ``blocks`` lists column-index groups; every group except
        the first is permuted independently.
    """
    X = np.array(samples_joint, dtype=np.float64, copy=True)
    if X.ndim == 1:
        X = X[:, None]
    n, d = X.shape
    if n == 0:
        raise ValueError("empty input")
    rng = np.random.default_rng(seed)
    if mode == "halves":
        if d % 2:
            raise ValueError("halves mode needs an even dimension")
        groups = [np.arange(d // 2, d)]
    elif mode == "coordinates":
        groups = [np.array([c]) for c in range(1, d)]
    elif mode == "blocks":
        if not blocks:
            raise ValueError("blocks mode needs column groups")
        groups = [np.asarray(g, dtype=int) for g in blocks[1:]]
    else:
        raise ValueError(f"unknown mode {mode!r}")
    for g in groups:
        X[:, g] = X[rng.permutation(n)[:, None], g]
    return X


def estimate_mi(fit, samples_joint):
    """MI as KL(joint || product of marginals) read on joint samples.

    The fit must have been trained with joint samples as class 0 and
    product-of-marginals samples as class 1.
    """
    ratio = LogRatioFunction(fit, 0, 1)
    return estimate_kl(ratio, samples_joint)


def exact_log_ratio(p, q):
    """Ground-truth ``log p/q`` from two distribution specs."""

    def f(X):
        return log_density(p, X) - log_density(q, X)

    return f
