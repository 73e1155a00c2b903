import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from mdre import distributions as dist
from mdre.distributions import (
    Cauchy,
    CovSpec,
    Gaussian,
    Mixture,
    SpecError,
    StudentT,
    TruncatedNormal,
    normal,
)


def test_gaussian_kl_table1_values():
    assert dist.gaussian_kl(normal(-1, 0.08), normal(2, 0.15)) == pytest.approx(200.270831, abs=1e-4)
    assert dist.gaussian_kl(normal(-2, 0.08), normal(2, 0.15)) == pytest.approx(355.826387, abs=1e-4)


def test_gaussian_kl_mean_shift_dim40():
    p = Gaussian(np.full(40, -1.0), CovSpec("isotropic", 1.0))
    q = Gaussian(np.full(40, 1.0), CovSpec("isotropic", 1.0))
    assert dist.gaussian_kl(p, q) == pytest.approx(80.0, abs=1e-10)


def test_gaussian_kl_block_shift_is_mi_plus_mean_term():
    rho = dist.rho_for_target_mi(20, 20)
    p = dist.block_gaussian(40, rho, -1.0)
    q = Gaussian(np.full(40, 1.0), CovSpec("isotropic", 1.0))
    assert dist.gaussian_kl(p, q) == pytest.approx(100.0, abs=1e-8)


def test_gaussian_kl_identity_is_zero():
    p = Gaussian([0.3, -1.0], CovSpec("full", [[2.0, 0.3], [0.3, 1.0]]))
    assert dist.gaussian_kl(p, p) == 0.0


def test_gaussian_kl_matches_dense_formula():
    rng = np.random.default_rng(3)
    A = rng.standard_normal((4, 4))
    B = rng.standard_normal((4, 4))
    Sp, Sq = A @ A.T + np.eye(4), B @ B.T + np.eye(4)
    mp, mq = rng.standard_normal(4), rng.standard_normal(4)
    Sqi = np.linalg.inv(Sq)
    ref = 0.5 * (
        np.trace(Sqi @ Sp) + (mq - mp) @ Sqi @ (mq - mp) - 4
        + np.linalg.slogdet(Sq)[1] - np.linalg.slogdet(Sp)[1]
    )
    got = dist.gaussian_kl(Gaussian(mp, CovSpec("full", Sp)), Gaussian(mq, CovSpec("full", Sq)))
    assert got == pytest.approx(ref, rel=1e-10)


def test_rho_for_target_mi_inverts_block_mi():
    rho = dist.rho_for_target_mi(20, 20)
    assert -20 * 0.5 * math.log(1 - rho**2) == pytest.approx(20.0, rel=1e-12)
    with pytest.raises(SpecError):
        dist.rho_for_target_mi(20, 0)


@pytest.mark.parametrize(
    "spec",
    [
        normal(0.5, 2.0),
        Gaussian([1.0, -1.0], CovSpec("block2x2", 0.7)),
        Gaussian([0.0, 0.0, 1.0], CovSpec("diagonal", [1.0, 2.0, 0.5])),
        Cauchy([0.0], [2.0]),
        StudentT([0.0, 1.0], CovSpec("isotropic", 2.0), 5),
        TruncatedNormal(-1, 2, -1.1, 1.2),
    ],
    ids=["normal", "block", "diag", "cauchy", "t", "tn"],
)
def test_log_density_matches_scipy(spec):
    x = dist.sample(spec, 50, 0)
    got = dist.log_density(spec, x)
    if isinstance(spec, Gaussian):
        ref = stats.multivariate_normal(spec.mean, spec.cov.matrix(spec.dim)).logpdf(x)
    elif isinstance(spec, Cauchy):
        ref = stats.cauchy(spec.loc[0], spec.scale[0]).logpdf(x[:, 0])
    elif isinstance(spec, StudentT):
        ref = stats.multivariate_t(spec.loc, spec.scale.matrix(spec.dim), df=spec.df).logpdf(x)
    else:
        a, b = (spec.low - spec.loc) / spec.scale, (spec.high - spec.loc) / spec.scale
        ref = stats.truncnorm(a, b, spec.loc, spec.scale).logpdf(x[:, 0])
    np.testing.assert_allclose(got, np.reshape(ref, -1), rtol=1e-10, atol=1e-10)


def test_log_density_single_point_returns_float():
    v = dist.log_density(normal(0, 1), [0.0])
    assert isinstance(v, float)
    assert v == pytest.approx(-0.5 * math.log(2 * math.pi))


def test_truncated_outside_support_is_minus_inf():
    tn = TruncatedNormal(0, 1, -1, 1)
    assert dist.log_density(tn, [1.5]) == -math.inf


def test_mixture_density_is_weighted_sum():
    m = Mixture([0.3, 0.7], (normal(-1, 1), normal(2, 0.5)))
    x = np.linspace(-3, 3, 7)[:, None]
    ref = np.log(0.3 * stats.norm(-1, 1).pdf(x[:, 0]) + 0.7 * stats.norm(2, 0.5).pdf(x[:, 0]))
    np.testing.assert_allclose(dist.log_density(m, x), ref, rtol=1e-12)


def test_sampling_moments_and_support():
    x = dist.sample(Gaussian([1.0, -1.0], CovSpec("block2x2", 0.6)), 200_000, 1)
    np.testing.assert_allclose(x.mean(axis=0), [1.0, -1.0], atol=0.01)
    assert np.corrcoef(x.T)[0, 1] == pytest.approx(0.6, abs=0.01)
    tn = TruncatedNormal(-1, 0.1, -1.1, -0.9)
    t = dist.sample(tn, 10_000, 2)
    assert t.min() >= -1.1 and t.max() <= -0.9


def test_truncated_sampling_far_tail_stays_finite():
    # the region lies ~20 scales above the location
    tn = TruncatedNormal(-1, 0.1, 1.0, 1.2)
    x = dist.sample(tn, 1000, 0)
    assert np.all(np.isfinite(x)) and x.min() >= 1.0


def test_truncated_samples_follow_cdf():
    tn = TruncatedNormal(1, 0.2, -1.1, 1.2)
    x = dist.sample(tn, 5000, 4)[:, 0]
    a, b = (tn.low - tn.loc) / tn.scale, (tn.high - tn.loc) / tn.scale
    assert stats.kstest(x, stats.truncnorm(a, b, tn.loc, tn.scale).cdf).pvalue > 0.01


def test_sample_is_deterministic_per_seed():
    s = normal(0, 1)
    np.testing.assert_array_equal(dist.sample(s, 10, 7), dist.sample(s, 10, 7))
    assert not np.array_equal(dist.sample(s, 10, 7), dist.sample(s, 10, 8))


@pytest.mark.parametrize(
    "bad",
    [
        lambda: CovSpec("isotropic", -1.0),
        lambda: CovSpec("block2x2", 1.0),
        lambda: CovSpec("full", [[1.0, 2.0], [2.0, 1.0]]),
        lambda: Gaussian([0.0, 0.0, 0.0], CovSpec("block2x2", 0.5)),
        lambda: TruncatedNormal(0, 1, 1, -1),
        lambda: dist.sample(normal(0, 1), 0, 0),
        lambda: dist.log_density(normal([0, 0], 1), np.zeros((3, 3))),
    ],
)
def test_invalid_specs_raise(bad):
    with pytest.raises(SpecError):
        bad()


@pytest.mark.parametrize(
    "spec",
    [
        normal(0.5, 2.0),
        Cauchy([0.0], [2.0]),
        StudentT([0.0, 1.0], CovSpec("block2x2", 0.3), 10),
        TruncatedNormal(-1, 2, -1.1, 1.2),
        Mixture([0.5, 0.5], (TruncatedNormal(-1, 0.1, -1.1, -0.9), TruncatedNormal(1, 0.1, 0.9, 1.1))),
    ],
)
def test_spec_dict_round_trip(spec):
    back = dist.spec_from_dict(dist.spec_to_dict(spec))
    assert dist.spec_to_dict(back) == dist.spec_to_dict(spec)
    x = dist.sample(spec, 20, 0)
    np.testing.assert_array_equal(dist.log_density(back, x), dist.log_density(spec, x))


@given(
    m1=st.floats(-5, 5), s1=st.floats(0.05, 5), m2=st.floats(-5, 5), s2=st.floats(0.05, 5)
)
def test_gaussian_kl_nonnegative_and_closed_form_1d(m1, s1, m2, s2):
    kl = dist.gaussian_kl(normal(m1, s1), normal(m2, s2))
    ref = math.log(s2 / s1) + (s1**2 + (m1 - m2) ** 2) / (2 * s2**2) - 0.5
    assert kl >= 0
    assert kl == pytest.approx(max(ref, 0.0), rel=1e-9, abs=1e-9)


@given(rho=st.floats(-0.95, 0.95), seed=st.integers(0, 2**31))
def test_block_whiten_inverts_colour(rho, seed):
    cov = CovSpec("block2x2", rho)
    e = np.random.default_rng(seed).standard_normal((5, 6))
    np.testing.assert_allclose(cov.whiten(cov.colour(e)), e, atol=1e-9)
