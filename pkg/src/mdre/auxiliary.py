"""Auxiliary sample sets bridging or overlapping p and q."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from mdre import distributions as dist


@dataclass(frozen=True)
class Overlapping:
    """Sample a fixed distribution directly (e.g. a heavy-tailed Cauchy)."""

    spec: object

    @property
    def n_aux(self):
        return 1


@dataclass(frozen=True)
class LinearMix:
    """Row-wise mixtures of randomly paired p and q samples.

    ``plain`` gives ``(1 - a) x_p + a x_q`` for any real ``a``; ``tre_skewed``
    gives ``sqrt(1 - a^2) x_p + a x_q`` and requires ``0 <= a <= 1``.
    """

    alphas: tuple
    variant: str = "plain"

    def __post_init__(self):
        a = tuple(float(v) for v in self.alphas)
        object.__setattr__(self, "alphas", a)
        if len(set(a)) != len(a):
            raise ValueError("mixing weights must be distinct")
        if self.variant not in ("plain", "tre_skewed"):
            raise ValueError(f"unknown linear-mix variant {self.variant!r}")
        if self.variant == "tre_skewed" and any(v < 0 or v > 1 for v in a):
            raise ValueError("tre_skewed weights must lie in [0, 1]")

    @property
    def n_aux(self):
        return len(self.alphas)


@dataclass(frozen=True)
class DimensionWiseMix:
    """Splice leading coordinate chunks of q-rows onto trailing chunks of p-rows."""

    chunks: int

    def __post_init__(self):
        if int(self.chunks) < 2:
            raise ValueError("dimension-wise mixing needs at least 2 chunks")

    @property
    def n_aux(self):
        return int(self.chunks) - 1


def default_alphas(k):
    """Evenly spaced waymark weights k/(K+1), k = 1..K."""
    return tuple((i + 1) / (k + 1) for i in range(k))


def _pairing(n, seed):
    return np.random.default_rng(seed).permutation(n)


def build_auxiliary_samples(scheme, samples_p, samples_q, seed):
    """Return the list of K auxiliary sample matrices, each shaped like ``samples_p``.

    p-rows are paired with q-rows through one seed-derived permutation of the
    p-rows, shared by every auxiliary class.
    """
    xp = np.atleast_2d(np.asarray(samples_p, dtype=np.float64))
    xq = np.atleast_2d(np.asarray(samples_q, dtype=np.float64))
    if xp.shape[1] != xq.shape[1]:
        raise ValueError("p and q samples have different dimensions")
    n, d = xp.shape

    if isinstance(scheme, Overlapping):
        if scheme.spec.dim != d:
            raise ValueError("overlapping spec dimension does not match the data")
        return [dist.sample(scheme.spec, n, seed)]

    if xq.shape[0] != n:
        raise ValueError("p and q need the same number of rows for mixing")
    xp_paired = xp[_pairing(n, seed)]

    if isinstance(scheme, LinearMix):
        out = []
        for a in scheme.alphas:
            wp = np.sqrt(1.0 - a * a) if scheme.variant == "tre_skewed" else 1.0 - a
            out.append(wp * xp_paired + a * xq)
        return out

    if isinstance(scheme, DimensionWiseMix):
        l = int(scheme.chunks)
        if d % l:
            raise ValueError(f"dimension {d} is not divisible by {l} chunks")
        step = d // l
        out = []
        for k in range(1, l):
            m = xp_paired.copy()
            m[:, : k * step] = xq[:, : k * step]
            out.append(m)
        return out

    raise TypeError(f"unknown auxiliary scheme {type(scheme).__name__}")


@dataclass
class OverlapReport:
    """Per-coordinate hull coverage between auxiliary samples and p, q samples.

    ``aux_in_pq`` is the fraction of auxiliary rows inside the joint min/max
    range of p and q; ``p_in_aux`` and ``q_in_aux`` the fractions of p and q
    rows inside the auxiliary range. The ``*_rows`` fields count a row only
    when every coordinate is inside.
    """

    aux_in_pq: np.ndarray
    p_in_aux: np.ndarray
    q_in_aux: np.ndarray
    aux_in_pq_rows: float
    p_in_aux_rows: float
    q_in_aux_rows: float


def _inside(x, lo, hi):
    return (x >= lo) & (x <= hi)


def overlap_diagnostic(aux_samples, samples_p, samples_q):
    m = np.atleast_2d(np.asarray(aux_samples, dtype=np.float64))
    xp = np.atleast_2d(np.asarray(samples_p, dtype=np.float64))
    xq = np.atleast_2d(np.asarray(samples_q, dtype=np.float64))
    if min(m.shape[0], xp.shape[0], xq.shape[0]) == 0:
        raise ValueError("overlap diagnostic needs non-empty inputs")
    if not m.shape[1] == xp.shape[1] == xq.shape[1]:
        raise ValueError("dimension mismatch")
    pq = np.concatenate([xp, xq])
    pq_lo, pq_hi = pq.min(axis=0), pq.max(axis=0)
    m_lo, m_hi = m.min(axis=0), m.max(axis=0)
    a_in = _inside(m, pq_lo, pq_hi)
    p_in = _inside(xp, m_lo, m_hi)
    q_in = _inside(xq, m_lo, m_hi)
    return OverlapReport(
        aux_in_pq=a_in.mean(axis=0),
        p_in_aux=p_in.mean(axis=0),
        q_in_aux=q_in.mean(axis=0),
        aux_in_pq_rows=float(a_in.all(axis=1).mean()),
        p_in_aux_rows=float(p_in.all(axis=1).mean()),
        q_in_aux_rows=float(q_in.all(axis=1).mean()),
    )
