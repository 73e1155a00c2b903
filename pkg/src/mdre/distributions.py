"""Parametric distributions with exact sampling, log densities and Gaussian KL.

All specs are immutable dataclasses. ``sample`` owns a private generator
seeded from its argument, so calls never share RNG state.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy import special

LOG_2PI = math.log(2.0 * math.pi)


class SpecError(ValueError):
    """Invalid distribution parameters or incompatible inputs."""


def _vec(x, name):
    a = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if a.ndim != 1:
        raise SpecError(f"{name} must be a vector")
    return a


# ---------------------------------------------------------------- covariance


@dataclass(frozen=True, eq=False)
class CovSpec:
    """Covariance (or scale matrix) descriptor.

    ``kind`` is one of ``isotropic`` (value is the variance), ``diagonal``
    (vector of variances), ``block2x2`` (value is the within-block
    correlation; unit diagonal) or ``full`` (a D x D matrix).
    """

    kind: str
    value: object

    def __post_init__(self):
        kind = self.kind
        if kind == "isotropic":
            v = float(self.value)
            if not v > 0:
                raise SpecError("isotropic variance must be positive")
            object.__setattr__(self, "value", v)
        elif kind == "diagonal":
            v = _vec(self.value, "diagonal")
            if not np.all(v > 0):
                raise SpecError("diagonal variances must be positive")
            object.__setattr__(self, "value", v)
        elif kind == "block2x2":
            r = float(self.value)
            if not -1.0 < r < 1.0:
                raise SpecError("block2x2 correlation must lie in (-1, 1)")
            object.__setattr__(self, "value", r)
        elif kind == "full":
            m = np.asarray(self.value, dtype=np.float64)
            if m.ndim != 2 or m.shape[0] != m.shape[1]:
                raise SpecError("full covariance must be square")
            if not np.allclose(m, m.T, rtol=0, atol=1e-12 * max(1.0, np.abs(m).max())):
                raise SpecError("full covariance must be symmetric")
            try:
                np.linalg.cholesky(m)
            except np.linalg.LinAlgError:
                raise SpecError("full covariance is not positive definite") from None
            object.__setattr__(self, "value", 0.5 * (m + m.T))
        else:
            raise SpecError(f"unknown covariance kind {kind!r}")

    def check_dim(self, d):
        if self.kind == "diagonal" and self.value.shape[0] != d:
            raise SpecError("diagonal length does not match dimension")
        if self.kind == "block2x2" and d % 2:
            raise SpecError("block2x2 covariance needs an even dimension")
        if self.kind == "full" and self.value.shape[0] != d:
            raise SpecError("full covariance shape does not match dimension")

    def matrix(self, d):
        if self.kind == "isotropic":
            return self.value * np.eye(d)
        if self.kind == "diagonal":
            return np.diag(self.value)
        if self.kind == "block2x2":
            m = np.eye(d)
            idx = np.arange(0, d, 2)
            m[idx, idx + 1] = self.value
            m[idx + 1, idx] = self.value
            return m
        return self.value.copy()

    def logdet(self, d):
        if self.kind == "isotropic":
            return d * math.log(self.value)
        if self.kind == "diagonal":
            return float(np.sum(np.log(self.value)))
        if self.kind == "block2x2":
            return (d // 2) * math.log1p(-self.value**2)
        return float(np.linalg.slogdet(self.value)[1])

    def whiten(self, z):
        """Map centred rows ``z`` to ``L^{-1} z`` where ``L L^T`` is the matrix."""
        d = z.shape[-1]
        if self.kind == "isotropic":
            return z / math.sqrt(self.value)
        if self.kind == "diagonal":
            return z / np.sqrt(self.value)
        if self.kind == "block2x2":
            r = self.value
            out = np.empty_like(z)
            out[..., 0::2] = z[..., 0::2]
            out[..., 1::2] = (z[..., 1::2] - r * z[..., 0::2]) / math.sqrt(1.0 - r * r)
            return out
        L = np.linalg.cholesky(self.value)
        from scipy.linalg import solve_triangular

        return solve_triangular(L, z.reshape(-1, d).T, lower=True).T.reshape(z.shape)

    def colour(self, e):
        """Map standard normal rows ``e`` to ``L e`` (inverse of :meth:`whiten`)."""
        if self.kind == "isotropic":
            return e * math.sqrt(self.value)
        if self.kind == "diagonal":
            return e * np.sqrt(self.value)
        if self.kind == "block2x2":
            r = self.value
            out = np.empty_like(e)
            out[:, 0::2] = e[:, 0::2]
            out[:, 1::2] = r * e[:, 0::2] + math.sqrt(1.0 - r * r) * e[:, 1::2]
            return out
        return e @ np.linalg.cholesky(self.value).T

    def to_dict(self):
        v = self.value
        return {"kind": self.kind, "value": v.tolist() if isinstance(v, np.ndarray) else v}


# --------------------------------------------------------------------- specs


@dataclass(frozen=True, eq=False)
class Gaussian:
    mean: np.ndarray
    cov: CovSpec

    def __post_init__(self):
        object.__setattr__(self, "mean", _vec(self.mean, "mean"))
        self.cov.check_dim(self.dim)

    @property
    def dim(self):
        return self.mean.shape[0]


@dataclass(frozen=True, eq=False)
class Cauchy:
    loc: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        loc = _vec(self.loc, "loc")
        scale = _vec(self.scale, "scale")
        if scale.shape[0] == 1 and loc.shape[0] > 1:
            scale = np.full(loc.shape[0], scale[0])
        if scale.shape != loc.shape:
            raise SpecError("Cauchy loc/scale lengths differ")
        if not np.all(scale > 0):
            raise SpecError("Cauchy scale must be positive")
        object.__setattr__(self, "loc", loc)
        object.__setattr__(self, "scale", scale)

    @property
    def dim(self):
        return self.loc.shape[0]


@dataclass(frozen=True, eq=False)
class StudentT:
    loc: np.ndarray
    scale: CovSpec
    df: float

    def __post_init__(self):
        object.__setattr__(self, "loc", _vec(self.loc, "loc"))
        if self.scale.kind not in ("isotropic", "diagonal", "block2x2"):
            raise SpecError("StudentT scale must be isotropic, diagonal or block2x2")
        self.scale.check_dim(self.dim)
        if not float(self.df) > 0:
            raise SpecError("degrees of freedom must be positive")
        object.__setattr__(self, "df", float(self.df))

    @property
    def dim(self):
        return self.loc.shape[0]


@dataclass(frozen=True, eq=False)
class TruncatedNormal:
    loc: float
    scale: float
    low: float
    high: float

    def __post_init__(self):
        for name in ("loc", "scale", "low", "high"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not self.scale > 0:
            raise SpecError("truncated normal scale must be positive")
        if not self.low < self.high:
            raise SpecError("truncated normal needs low < high")

    @property
    def dim(self):
        return 1

    def _std_bounds(self):
        return (self.low - self.loc) / self.scale, (self.high - self.loc) / self.scale

    def log_mass(self):
        """log(Phi(b) - Phi(a)) for the standardised bounds, tail-stable."""
        a, b = self._std_bounds()
        if a > 0:  # reflect into the lower tail where log_ndtr is accurate
            a, b = -b, -a
        la, lb = special.log_ndtr(a), special.log_ndtr(b)
        return float(lb + np.log1p(-np.exp(la - lb)))


@dataclass(frozen=True, eq=False)
class Mixture:
    weights: np.ndarray
    components: tuple = field(default_factory=tuple)

    def __post_init__(self):
        w = _vec(self.weights, "weights")
        comps = tuple(self.components)
        if len(comps) != w.shape[0] or not comps:
            raise SpecError("mixture needs one weight per component")
        if not np.all(w > 0) or abs(w.sum() - 1.0) > 1e-12:
            raise SpecError("mixture weights must be positive and sum to 1")
        if len({c.dim for c in comps}) != 1:
            raise SpecError("mixture components must share a dimension")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "components", comps)

    @property
    def dim(self):
        return self.components[0].dim


DistributionSpec = Union[Gaussian, Cauchy, StudentT, TruncatedNormal, Mixture]


def normal(mean, std):
    """Isotropic Gaussian from a mean (scalar or vector) and a standard deviation."""
    return Gaussian(mean, CovSpec("isotropic", float(std) ** 2))


# ------------------------------------------------------------------ sampling


def _sample(spec, n, rng):
    if isinstance(spec, Gaussian):
        e = rng.standard_normal((n, spec.dim))
        return spec.mean + spec.cov.colour(e)
    if isinstance(spec, Cauchy):
        return spec.loc + spec.scale * rng.standard_cauchy((n, spec.dim))
    if isinstance(spec, StudentT):
        e = spec.scale.colour(rng.standard_normal((n, spec.dim)))
        w = np.sqrt(spec.df / rng.chisquare(spec.df, size=n))
        return spec.loc + e * w[:, None]
    if isinstance(spec, TruncatedNormal):
        a, b = spec._std_bounds()
        flip = a > 0
        if flip:
            a, b = -b, -a
        lo, hi = special.ndtr(a), special.ndtr(b)
        u = lo + rng.random(n) * (hi - lo)
        z = special.ndtri(u)
        if flip:
            z = -z
        x = np.clip(spec.loc + spec.scale * z, spec.low, spec.high)
        return x[:, None]
    if isinstance(spec, Mixture):
        which = rng.choice(len(spec.components), size=n, p=spec.weights)
        out = np.empty((n, spec.dim))
        for k, comp in enumerate(spec.components):
            idx = np.flatnonzero(which == k)
            if idx.size:
                out[idx] = _sample(comp, idx.size, rng)
        return out
    raise SpecError(f"unsupported spec {type(spec).__name__}")


def sample(spec, n, seed):
    """Draw ``n`` i.i.d. rows from ``spec`` as an ``(n, D)`` matrix."""
    n = int(n)
    if n < 1:
        raise SpecError("n must be >= 1")
    return _sample(spec, n, np.random.default_rng(seed))


# -------------------------------------------------------------- log density


def _log_density_rows(spec, X):
    if isinstance(spec, Gaussian):
        z = spec.cov.whiten(X - spec.mean)
        d = spec.dim
        return -0.5 * (np.sum(z * z, axis=1) + d * LOG_2PI + spec.cov.logdet(d))
    if isinstance(spec, Cauchy):
        z = (X - spec.loc) / spec.scale
        return -np.sum(np.log(math.pi * spec.scale) + np.log1p(z * z), axis=1)
    if isinstance(spec, StudentT):
        d, nu = spec.dim, spec.df
        z = spec.scale.whiten(X - spec.loc)
        maha = np.sum(z * z, axis=1)
        const = (
            special.gammaln(0.5 * (nu + d))
            - special.gammaln(0.5 * nu)
            - 0.5 * d * math.log(nu * math.pi)
            - 0.5 * spec.scale.logdet(d)
        )
        return const - 0.5 * (nu + d) * np.log1p(maha / nu)
    if isinstance(spec, TruncatedNormal):
        x = X[:, 0]
        z = (x - spec.loc) / spec.scale
        out = -0.5 * (z * z + LOG_2PI) - math.log(spec.scale) - spec.log_mass()
        return np.where((x >= spec.low) & (x <= spec.high), out, -np.inf)
    if isinstance(spec, Mixture):
        parts = np.stack([_log_density_rows(c, X) for c in spec.components], axis=1)
        parts = parts + np.log(spec.weights)
        m = parts.max(axis=1)
        finite = np.isfinite(m)
        out = np.full(X.shape[0], -np.inf)
        if finite.any():
            mf = m[finite]
            out[finite] = mf + np.log(np.exp(parts[finite] - mf[:, None]).sum(axis=1))
        return out
    raise SpecError(f"unsupported spec {type(spec).__name__}")


def log_density(spec, x):
    """Exact log pdf; a length-D vector gives a float, an (n, D) matrix a vector.

    Points outside a truncated normal's support evaluate to ``-inf``.
    """
    a = np.asarray(x, dtype=np.float64)
    single = a.ndim <= 1
    a = a.reshape(1, -1) if single else a
    if a.ndim != 2 or a.shape[1] != spec.dim:
        raise SpecError(f"expected points of dimension {spec.dim}, got shape {np.shape(x)}")
    out = _log_density_rows(spec, a)
    return float(out[0]) if single else out


# -------------------------------------------------------------- Gaussian KL


def _same_gaussian(p, q):
    return (
        p.cov.kind == q.cov.kind
        and np.array_equal(p.mean, q.mean)
        and np.array_equal(np.asarray(p.cov.value), np.asarray(q.cov.value))
    )


def gaussian_kl(p, q):
    """KL(p || q) between two Gaussians of equal dimension, in nats."""
    if not (isinstance(p, Gaussian) and isinstance(q, Gaussian)):
        raise SpecError("gaussian_kl needs two Gaussian specs")
    if p.dim != q.dim:
        raise SpecError("dimension mismatch")
    if _same_gaussian(p, q):
        return 0.0
    d = p.dim
    Sp = p.cov.matrix(d)
    Lp = np.linalg.cholesky(Sp)
    # tr(Sq^-1 Sp) = ||Lq^-1 Lp||_F^2
    A = q.cov.whiten(Lp.T)
    trace = float(np.sum(A * A))
    dm = q.cov.whiten((q.mean - p.mean)[None, :])[0]
    kl = 0.5 * (trace + float(dm @ dm) - d + q.cov.logdet(d) - p.cov.logdet(d))
    return max(kl, 0.0)


def rho_for_target_mi(d_blocks, target_mi):
    """Within-block correlation giving MI ``target_mi`` over ``d_blocks`` 2x2 blocks."""
    if not target_mi > 0:
        raise SpecError("target MI must be positive")
    if d_blocks < 1:
        raise SpecError("need at least one block")
    return math.sqrt(-math.expm1(-2.0 * target_mi / d_blocks))


def block_gaussian(dim, rho, mean=0.0):
    """Gaussian with unit-diagonal 2x2 block covariance (``rho`` off-diagonal)."""
    m = np.full(dim, float(mean)) if np.isscalar(mean) else mean
    return Gaussian(m, CovSpec("block2x2", rho))


# ------------------------------------------------------------ serialization


def spec_to_dict(spec):
    if isinstance(spec, Gaussian):
        return {"kind": "Gaussian", "mean": spec.mean.tolist(), "cov": spec.cov.to_dict()}
    if isinstance(spec, Cauchy):
        return {"kind": "Cauchy", "loc": spec.loc.tolist(), "scale": spec.scale.tolist()}
    if isinstance(spec, StudentT):
        return {
            "kind": "StudentT",
            "loc": spec.loc.tolist(),
            "scale": spec.scale.to_dict(),
            "df": spec.df,
        }
    if isinstance(spec, TruncatedNormal):
        return {
            "kind": "TruncatedNormal",
            "loc": spec.loc,
            "scale": spec.scale,
            "low": spec.low,
            "high": spec.high,
        }
    if isinstance(spec, Mixture):
        return {
            "kind": "Mixture",
            "weights": spec.weights.tolist(),
            "components": [spec_to_dict(c) for c in spec.components],
        }
    raise SpecError(f"unsupported spec {type(spec).__name__}")


def spec_from_dict(d):
    kind = d.get("kind")
    if kind == "Gaussian":
        return Gaussian(d["mean"], CovSpec(**d["cov"]))
    if kind == "Cauchy":
        return Cauchy(d["loc"], d["scale"])
    if kind == "StudentT":
        return StudentT(d["loc"], CovSpec(**d["scale"]), d["df"])
    if kind == "TruncatedNormal":
        return TruncatedNormal(d["loc"], d["scale"], d["low"], d["high"])
    if kind == "Mixture":
        return Mixture(d["weights"], tuple(spec_from_dict(c) for c in d["components"]))
    raise SpecError(f"unknown distribution kind {kind!r}")
