"""Ground-truth KL values independent of any fitted model."""
from __future__ import annotations

import math
import warnings

import numpy as np

from mdre import distributions as dist


class SupportViolation(RuntimeWarning):
    """p puts mass where q has none; the KL is infinite."""


START_POINTS = 2**14
MAX_POINTS = 2**24


def _span(spec):
    if isinstance(spec, dist.Gaussian):
        s = math.sqrt(float(spec.cov.matrix(1)[0, 0]))
        m = float(spec.mean[0])
        return m - 10 * s, m + 10 * s
    if isinstance(spec, dist.Cauchy):
        m, s = float(spec.loc[0]), float(spec.scale[0])
        return m - 10 * s, m + 10 * s
    if isinstance(spec, dist.StudentT):
        s = math.sqrt(float(spec.scale.matrix(1)[0, 0]))
        m = float(spec.loc[0])
        return m - 10 * s, m + 10 * s
    if isinstance(spec, dist.TruncatedNormal):
        return (
            max(spec.low, spec.loc - 10 * spec.scale),
            min(spec.high, spec.loc + 10 * spec.scale),
        )
    if isinstance(spec, dist.Mixture):
        spans = [_span(c) for c in spec.components]
        return min(a for a, _ in spans), max(b for _, b in spans)
    raise dist.SpecError(f"unsupported spec {type(spec).__name__}")


def default_grid(p):
    """p's location +- 10 scales, clipped to p's support for truncated specs."""
    lo, hi = _span(p)
    return {"lo": lo, "hi": hi, "n_points": START_POINTS}


def _trapezoid_kl(p, q, lo, hi, n):
    x = np.linspace(lo, hi, n + 1)
    lp = dist.log_density(p, x[:, None])
    lq = dist.log_density(q, x[:, None])
    dens = np.exp(lp)
    live = dens > 1e-300
    bad = live & ~np.isfinite(lq)
    if bad.any():
        return math.inf, x[bad]
    f = np.zeros_like(x)
    f[live] = dens[live] * (lp[live] - lq[live])
    return float(np.trapezoid(f, x)), None


def quadrature_kl_1d(p, q, grid=None, tol=1e-4):
    """Trapezoidal KL(p || q) for 1-D specs, doubling resolution until stable.

    ``grid`` is ``{"lo", "hi", "n_points"}``; the default comes from
    :func:`default_grid`. Refinement stops once one doubling moves the value by
    less than ``tol``. If q vanishes where p has density the result is ``inf``
    and a :class:`SupportViolation` warning lists the offending range.
    """
    if p.dim != 1 or q.dim != 1:
        raise dist.SpecError("quadrature oracle is 1-D only")
    g = dict(default_grid(p), **(grid or {}))
    lo, hi, n = float(g["lo"]), float(g["hi"]), int(g["n_points"])
    if not lo < hi:
        raise ValueError("grid needs lo < hi")
    prev, bad = _trapezoid_kl(p, q, lo, hi, n)
    while bad is None:
        n *= 2
        cur, bad = _trapezoid_kl(p, q, lo, hi, n)
        if bad is None and abs(cur - prev) < tol:
            return cur
        if n >= MAX_POINTS:
            warnings.warn(f"quadrature did not stabilise by {n} points", RuntimeWarning)
            return cur
        prev = cur
    warnings.warn(
        SupportViolation(
            f"q has zero density at {bad.size} grid points where p > 0 "
            f"(x in [{bad.min():.6g}, {bad.max():.6g}])"
        )
    )
    return math.inf


def mc_kl(p, q, n, seed):
    """Monte Carlo KL(p || q) from exact log-densities: (estimate, standard error)."""
    x = dist.sample(p, n, seed)
    lq = dist.log_density(q, x)
    bad = ~np.isfinite(lq)
    if bad.any():
        warnings.warn(SupportViolation(f"{int(bad.sum())} of {n} draws from p fall outside q's support"))
        return math.inf, math.nan
    v = dist.log_density(p, x) - lq
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(n))


def exact_tabular_ratios(tables):
    """``R[i, j, s] = log p_i(s) - log p_j(s)`` for probability tables on a shared outcome set."""
    P = np.asarray(tables, dtype=np.float64)
    if P.ndim != 2 or P.shape[0] < 1:
        raise ValueError("expected a (n_dists, n_outcomes) table")
    if np.any(P <= 0):
        raise ValueError("every outcome needs positive probability")
    if np.any(np.abs(P.sum(axis=1) - 1.0) > 1e-9):
        raise ValueError("each table must sum to 1")
    L = np.log(P)
    return L[:, None, :] - L[None, :, :]
