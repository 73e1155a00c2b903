import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mdre import scoremodel as sm
from mdre.scoremodel import ClassedSamples, QuadraticScore, ScoreSet, TabularScore


def random_set(C, D, rng, scale=0.5):
    scores = []
    for _ in range(C):
        A = rng.normal(0, scale, (D, D))
        scores.append(QuadraticScore(A + A.T, rng.normal(0, scale, D), rng.normal(0, scale)))
    pri = rng.dirichlet(np.ones(C) * 3)
    return ScoreSet(scores, pri / pri.sum())


def dyadic(set_, k=8):
    return set_.with_scores(sm.unpack(np.round(sm.pack(set_) * k) / k, set_))


def random_data(C, D, rng, n=30):
    return ClassedSamples.from_classes([rng.normal(c * 0.3, 1.0, (n + c, D)) for c in range(C)])


def test_quadratic_score_value():
    s = QuadraticScore([[1.0, 2.0], [0.0, 3.0]], [1.0, -1.0], 0.5)
    np.testing.assert_array_equal(s.W1, [[1.0, 1.0], [1.0, 3.0]])
    x = np.array([2.0, -1.0])
    set_ = ScoreSet([s, QuadraticScore.zeros(2)])
    h = sm.logits(set_, x)
    assert h.shape == (2,)
    assert h[0] == pytest.approx(x @ s.W1 @ x + s.w2 @ x + 0.5)
    assert h[1] == 0.0


def test_logits_shapes():
    set_ = ScoreSet.zeros(3, 2)
    assert sm.logits(set_, np.zeros((5, 2))).shape == (5, 3)
    with pytest.raises(ValueError):
        sm.logits(set_, np.zeros((5, 3)))


def test_zero_init_loss_is_log_c():
    rng = np.random.default_rng(0)
    for C in (2, 3, 5, 8):
        data = random_data(C, 2, rng)
        assert abs(sm.loss(ScoreSet.zeros(C, 2), data) - math.log(C)) < 1e-12


def test_class_log_probs_normalized_and_extreme_stable():
    s = ScoreSet([QuadraticScore([[1e3]], [0.0], 0.0), QuadraticScore.zeros(1), QuadraticScore([[0.0]], [-5e2], 0.0)])
    lp = sm.class_log_probs(s, np.array([[30.0], [-30.0], [0.0]]))
    assert np.all(np.isfinite(lp))
    np.testing.assert_allclose(np.log(np.exp(lp).sum(axis=1)), 0.0, atol=1e-12)


def test_logit_shift_identifiability():
    rng = np.random.default_rng(1)
    # dyadic parameters, points and shift keep every floating-point sum exact
    s = dyadic(random_set(3, 2, rng))
    c = 0.25
    shifted = s.with_scores([QuadraticScore(q.W1, q.w2, q.b + c) for q in s.scores])
    X = np.round(rng.normal(size=(20, 2)) * 8) / 8
    H, Hs = sm.logits(s, X), sm.logits(shifted, X)
    for i in range(3):
        for j in range(3):
            np.testing.assert_array_equal(H[:, i] - H[:, j], Hs[:, i] - Hs[:, j])


def _fd_check(set_, data):
    g = sm.pack(set_.with_scores(sm.loss_gradient(set_, data)))
    theta = sm.pack(set_)
    # pack stores off-diagonal W1 once, and moving it moves both (i, j) and (j, i)
    D = set_.dim
    iu = np.triu_indices(D)
    off = np.concatenate([(iu[0] != iu[1]) * 1.0, np.zeros(D + 1)])
    mult = np.tile(1.0 + off, set_.n_classes)
    g = g * mult
    num = np.empty_like(theta)
    for k in range(theta.size):
        h = 1e-6 * max(1.0, abs(theta[k]))
        tp, tm = theta.copy(), theta.copy()
        tp[k] += h
        tm[k] -= h
        fp = sm.loss(set_.with_scores(sm.unpack(tp, set_)), data)
        fm = sm.loss(set_.with_scores(sm.unpack(tm, set_)), data)
        num[k] = (fp - fm) / (2 * h)
    return np.linalg.norm(g - num) / max(np.linalg.norm(num), 1e-12)


@pytest.mark.parametrize("D", [1, 2, 5])
@pytest.mark.parametrize("C", [2, 3, 5])
def test_gradient_matches_finite_differences(C, D):
    rng = np.random.default_rng(10 * C + D)
    for _ in range(3):
        assert _fd_check(random_set(C, D, rng), random_data(C, D, rng)) < 1e-5


def test_flat_gradient_matches_finite_differences():
    rng = np.random.default_rng(7)
    s, data = random_set(3, 3, rng), random_data(3, 3, rng)
    wt = data.mean_weights(s.priors)
    theta = sm.pack(s)
    f0, g = sm.flat_loss_grad(s, theta, data.X, data.labels, wt, s.log_priors)
    num = np.empty_like(theta)
    for k in range(theta.size):
        e = np.zeros_like(theta)
        e[k] = 1e-6
        fp, _ = sm.flat_loss_grad(s, theta + e, data.X, data.labels, wt, s.log_priors, False)
        fm, _ = sm.flat_loss_grad(s, theta - e, data.X, data.labels, wt, s.log_priors, False)
        num[k] = (fp - fm) / 2e-6
    assert np.linalg.norm(g - num) / np.linalg.norm(num) < 1e-5


def test_pack_unpack_round_trip():
    rng = np.random.default_rng(2)
    s = random_set(4, 3, rng)
    theta = sm.pack(s)
    assert theta.size == 4 * sm.n_params_per_class(s.scores)
    back = s.with_scores(sm.unpack(theta, s))
    np.testing.assert_array_equal(sm.pack(back), theta)
    for a, b in zip(s.scores, back.scores):
        np.testing.assert_array_equal(a.W1, b.W1)


def test_tabular_scores():
    out = np.array([0.0, 1.0, 2.0])
    s = ScoreSet([TabularScore(out, [0.0, 1.0, 2.0]), TabularScore(out, np.zeros(3))])
    np.testing.assert_array_equal(sm.logits(s, np.array([[2.0], [0.0]]))[:, 0], [2.0, 0.0])
    with pytest.raises(ValueError):
        sm.logits(s, np.array([[0.5]]))
    with pytest.raises(ValueError):
        ScoreSet([TabularScore(out, np.zeros(3)), TabularScore(out + 1, np.zeros(3))])


def test_tabular_gradient_finite_differences():
    rng = np.random.default_rng(4)
    out = np.arange(5.0)
    s = ScoreSet([TabularScore(out, rng.normal(size=5)) for _ in range(3)])
    data = ClassedSamples.from_classes([rng.integers(0, 5, 40).astype(float) for _ in range(3)])
    g = sm.pack(s.with_scores(sm.loss_gradient(s, data)))
    theta = sm.pack(s)
    num = np.array([
        (sm.loss(s.with_scores(sm.unpack(theta + e, s)), data) - sm.loss(s.with_scores(sm.unpack(theta - e, s)), data)) / 2e-6
        for e in np.eye(theta.size) * 1e-6
    ])
    assert np.linalg.norm(g - num) / np.linalg.norm(num) < 1e-5


def test_scoreset_validation():
    with pytest.raises(ValueError):
        ScoreSet([QuadraticScore.zeros(1)])
    with pytest.raises(ValueError):
        ScoreSet([QuadraticScore.zeros(1), QuadraticScore.zeros(2)])
    with pytest.raises(ValueError):
        ScoreSet.zeros(2, 1, priors=[0.7, 0.7])
    with pytest.raises(ValueError):
        ClassedSamples(np.zeros((3, 1)), [0, 1, 2], 2)


def test_accuracy_per_class():
    s = ScoreSet([QuadraticScore([[0.0]], [1.0], 0.0), QuadraticScore([[0.0]], [-1.0], 0.0)])
    data = ClassedSamples.from_classes([np.array([1.0, 2.0, -1.0]), np.array([-1.0, -3.0])])
    np.testing.assert_allclose(sm.accuracy_per_class(s, data), [2 / 3, 1.0])


def test_model_save_load(tmp_path):
    s = random_set(3, 2, np.random.default_rng(5))
    path = tmp_path / "m.json"
    sm.save_model(s, path)
    back = sm.load_model(path)
    np.testing.assert_array_equal(sm.pack(back), sm.pack(s))
    np.testing.assert_array_equal(back.priors, s.priors)


@given(seed=st.integers(0, 2**32 - 1), C=st.integers(2, 6), D=st.integers(1, 4))
def test_probabilities_normalized(seed, C, D):
    rng = np.random.default_rng(seed)
    s = random_set(C, D, rng, scale=3.0)
    lp = sm.class_log_probs(s, rng.normal(0, 3, (10, D)))
    np.testing.assert_allclose(np.exp(lp).sum(axis=1), 1.0, atol=1e-12)


@given(seed=st.integers(0, 2**32 - 1), C=st.integers(2, 5))
def test_pairwise_ratios_antisymmetric_and_telescoping(seed, C):
    rng = np.random.default_rng(seed)
    s = dyadic(random_set(C, 2, rng))
    H = sm.logits(s, np.round(rng.normal(size=(8, 2)) * 4) / 4)
    R = H[:, :, None] - H[:, None, :]
    np.testing.assert_array_equal(R, -R.transpose(0, 2, 1))
    for i in range(C):
        for j in range(C):
            for k in range(C):
                np.testing.assert_array_equal(R[:, i, k], R[:, i, j] + R[:, j, k])
