"""Per-class log-scores and the multinomial logistic machinery built on them.

A :class:`ScoreSet` holds one score per class plus class priors. The
probability of class ``c`` at ``x`` is ``pi_c exp(h_c(x)) / sum_k pi_k
exp(h_k(x))``; only differences ``h_i - h_j`` are identified.

Class indices are zero-based. By convention an MDRE fit puts p at index 0,
q at index 1 and the auxiliaries after them.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from mdre import kernels


# --------------------------------------------------------------------- types


@dataclass
class QuadraticScore:
    """``h(x) = x^T W1 x + w2 . x + b`` with ``W1`` kept symmetric."""

    W1: np.ndarray
    w2: np.ndarray
    b: float = 0.0

    def __post_init__(self):
        W = np.atleast_2d(np.asarray(self.W1, dtype=np.float64))
        self.W1 = 0.5 * (W + W.T)
        self.w2 = np.atleast_1d(np.asarray(self.w2, dtype=np.float64))
        self.b = float(self.b)
        if self.W1.shape != (self.w2.shape[0],) * 2:
            raise ValueError("W1 must be D x D with D = len(w2)")

    @property
    def dim(self):
        return self.w2.shape[0]

    @classmethod
    def zeros(cls, dim):
        return cls(np.zeros((dim, dim)), np.zeros(dim), 0.0)


@dataclass
class TabularScore:
    """A score defined on a finite outcome set: ``h(outcomes[s]) = table[s]``."""

    outcomes: np.ndarray
    table: np.ndarray

    def __post_init__(self):
        self.outcomes = np.asarray(self.outcomes, dtype=np.float64).ravel()
        self.table = np.asarray(self.table, dtype=np.float64).ravel()
        if self.outcomes.shape != self.table.shape:
            raise ValueError("one table entry per outcome")
        if np.unique(self.outcomes).size != self.outcomes.size:
            raise ValueError("outcomes must be distinct")

    @property
    def dim(self):
        return 1

    def index(self, X):
        x = np.asarray(X, dtype=np.float64).reshape(-1)
        order = np.argsort(self.outcomes)
        pos = np.searchsorted(self.outcomes[order], x)
        pos = np.clip(pos, 0, self.outcomes.size - 1)
        idx = order[pos]
        if not np.array_equal(self.outcomes[idx], x):
            raise ValueError("evaluation point outside the tabular outcome set")
        return idx


@dataclass
class ScoreSet:
    scores: list
    priors: np.ndarray = None
    class_labels: list = None

    def __post_init__(self):
        self.scores = list(self.scores)
        C = len(self.scores)
        if C < 2:
            raise ValueError("need at least two classes")
        kinds = {type(s) for s in self.scores}
        if len(kinds) != 1:
            raise ValueError("scores must come from one family")
        if len({s.dim for s in self.scores}) != 1:
            raise ValueError("scores must share a dimension")
        if isinstance(self.scores[0], TabularScore):
            ref = self.scores[0].outcomes
            if any(not np.array_equal(s.outcomes, ref) for s in self.scores):
                raise ValueError("tabular scores must share an outcome set")
        if self.priors is None:
            self.priors = np.full(C, 1.0 / C)
        self.priors = np.asarray(self.priors, dtype=np.float64)
        if self.priors.shape != (C,) or np.any(self.priors <= 0):
            raise ValueError("priors must be C positive numbers")
        if abs(self.priors.sum() - 1.0) > 1e-12:
            raise ValueError("priors must sum to 1")
        if self.class_labels is None:
            self.class_labels = [f"class{c}" for c in range(C)]
        self.class_labels = list(self.class_labels)
        if len(self.class_labels) != C:
            raise ValueError("one label per class")

    @property
    def n_classes(self):
        return len(self.scores)

    @property
    def dim(self):
        return self.scores[0].dim

    @property
    def family(self):
        return "tabular" if isinstance(self.scores[0], TabularScore) else "quadratic"

    @property
    def log_priors(self):
        return np.log(self.priors)

    def with_scores(self, scores):
        return ScoreSet(scores, self.priors.copy(), list(self.class_labels))

    @classmethod
    def zeros(cls, n_classes, dim, priors=None, class_labels=None):
        return cls([QuadraticScore.zeros(dim) for _ in range(n_classes)], priors, class_labels)


@dataclass
class ClassedSamples:
    """Rows of ``X`` tagged with zero-based class labels."""

    X: np.ndarray
    labels: np.ndarray
    n_classes: int = field(default=None)

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        self.X = X[:, None] if X.ndim == 1 else X
        self.labels = np.asarray(self.labels, dtype=np.int64).ravel()
        if self.labels.shape[0] != self.X.shape[0]:
            raise ValueError("one label per row")
        if self.n_classes is None:
            self.n_classes = int(self.labels.max()) + 1 if self.labels.size else 0
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise ValueError("label outside [0, n_classes)")

    @classmethod
    def from_classes(cls, class_samples):
        mats = [np.asarray(m, dtype=np.float64) for m in class_samples]
        mats = [m[:, None] if m.ndim == 1 else m for m in mats]
        labels = np.concatenate([np.full(m.shape[0], c) for c, m in enumerate(mats)])
        return cls(np.concatenate(mats), labels, len(mats))

    def counts(self):
        return np.bincount(self.labels, minlength=self.n_classes)

    def of_class(self, c):
        return self.X[self.labels == c]

    def mean_weights(self, priors):
        """Per-row weights ``pi_c / n_c`` turning sums into the prior-weighted mean loss."""
        counts = self.counts()
        if np.any(counts == 0):
            raise ValueError("every class needs at least one sample")
        return (np.asarray(priors) / counts)[self.labels]


# ---------------------------------------------------------- flat parameters


def n_params_per_class(scores):
    s = scores[0]
    if isinstance(s, TabularScore):
        return s.table.size
    d = s.dim
    return d * (d + 1) // 2 + d + 1


def _stack(scores):
    W1 = np.stack([s.W1 for s in scores])
    w2 = np.stack([s.w2 for s in scores])
    b = np.array([s.b for s in scores])
    return W1, w2, b


def pack(scores):
    """Flatten a list of class scores into one parameter vector.

    Quadratic scores contribute the upper triangle of ``W1`` (row-major,
    diagonal included), then ``w2``, then ``b``.
    """
    if isinstance(scores, ScoreSet):
        scores = scores.scores
    if isinstance(scores[0], TabularScore):
        return np.concatenate([s.table for s in scores])
    d = scores[0].dim
    iu = np.triu_indices(d)
    return np.concatenate([np.concatenate([s.W1[iu], s.w2, [s.b]]) for s in scores])


def unpack(theta, like):
    """Inverse of :func:`pack`, using ``like`` (list of scores) for shapes."""
    if isinstance(like, ScoreSet):
        like = like.scores
    theta = np.asarray(theta, dtype=np.float64)
    P = n_params_per_class(like)
    C = len(like)
    if theta.shape != (C * P,):
        raise ValueError("parameter vector has the wrong length")
    rows = theta.reshape(C, P)
    if isinstance(like[0], TabularScore):
        return [TabularScore(s.outcomes, r) for s, r in zip(like, rows)]
    d = like[0].dim
    iu = np.triu_indices(d)
    nt = iu[0].size
    out = []
    for r in rows:
        W = np.zeros((d, d))
        W[iu] = r[:nt]
        W = W + np.triu(W, 1).T
        out.append(QuadraticScore(W, r[nt : nt + d], r[-1]))
    return out


def _vech_grad(gW1):
    d = gW1.shape[-1]
    iu = np.triu_indices(d)
    scale = np.where(iu[0] == iu[1], 1.0, 2.0)
    return gW1[:, iu[0], iu[1]] * scale


def flat_loss_grad(scores, theta, X, y, wt, logpi, want_grad=True):
    """``-sum_n wt[n] log P(y[n]|X[n])`` and its gradient in packed coordinates."""
    like = scores.scores if isinstance(scores, ScoreSet) else scores
    C = len(like)
    if isinstance(like[0], TabularScore):
        table = np.asarray(theta).reshape(C, -1)
        idx = like[0].index(X)
        H = table[:, idx].T + logpi
        m = H.max(axis=1, keepdims=True)
        lse = m[:, 0] + np.log(np.exp(H - m).sum(axis=1))
        n = np.arange(H.shape[0])
        loss = -float(np.sum(wt * (H[n, y] - lse)))
        if not want_grad:
            return loss, None
        G = np.exp(H - lse[:, None]) * wt[:, None]
        G[n, y] -= wt
        S = table.shape[1]
        grad = np.stack([np.bincount(idx, weights=G[:, c], minlength=S) for c in range(C)])
        return loss, grad.ravel()
    d = like[0].dim
    rows = unpack(theta, like)
    W1, w2, b = _stack(rows)
    loss, gW1, gw2, gb = kernels.quad_loss_grad(X, y, wt, W1, w2, b, logpi, want_grad)
    if not want_grad:
        return loss, None
    grad = np.concatenate([_vech_grad(gW1), gw2, gb[:, None]], axis=1)
    return loss, grad.ravel()


# ----------------------------------------------------------------- evaluate


def _as_points(set_, x):
    a = np.asarray(x, dtype=np.float64)
    single = a.ndim <= 1
    a = a.reshape(1, -1) if single else a
    if a.ndim != 2 or a.shape[1] != set_.dim:
        raise ValueError(f"expected points of dimension {set_.dim}, got shape {np.shape(x)}")
    return a, single


def _logits_rows(set_, X):
    if set_.family == "tabular":
        idx = set_.scores[0].index(X)
        return np.stack([s.table[idx] for s in set_.scores], axis=1)
    return kernels.quad_logits(X, *_stack(set_.scores))


def logits(set_, x):
    """Class scores ``h_c(x)``: shape (C,) for one point, (N, C) for a matrix."""
    X, single = _as_points(set_, x)
    H = _logits_rows(set_, X)
    return H[0] if single else H


def _log_softmax(H):
    m = H.max(axis=-1, keepdims=True)
    Z = H - m
    return Z - np.log(np.exp(Z).sum(axis=-1, keepdims=True))


def class_log_probs(set_, x):
    """``log P(Y=c | x)`` with the priors folded in, via a max-shifted log-sum-exp."""
    X, single = _as_points(set_, x)
    out = _log_softmax(_logits_rows(set_, X) + set_.log_priors)
    return out[0] if single else out


def loss(set_, data):
    """Prior-weighted mean negative log-likelihood over ``data``."""
    if data.n_classes != set_.n_classes:
        raise ValueError("data and score set disagree on the number of classes")
    wt = data.mean_weights(set_.priors)
    val, _ = flat_loss_grad(set_, pack(set_), data.X, data.labels, wt, set_.log_priors, False)
    return val


def loss_gradient(set_, data):
    """Gradient of :func:`loss`, returned as one score object per class.

    For quadratic scores the ``W1`` entry is the derivative with respect to
    that matrix entry, ``sum_n g_n x_i x_j``, which is symmetric.
    """
    if data.n_classes != set_.n_classes:
        raise ValueError("data and score set disagree on the number of classes")
    wt = data.mean_weights(set_.priors)
    if set_.family == "tabular":
        _, g = flat_loss_grad(set_, pack(set_), data.X, data.labels, wt, set_.log_priors)
        return unpack(g, set_.scores)
    W1, w2, b = _stack(set_.scores)
    _, gW1, gw2, gb = kernels.quad_loss_grad(
        data.X, data.labels, wt, W1, w2, b, set_.log_priors
    )
    return [QuadraticScore(gW1[c], gw2[c], gb[c]) for c in range(set_.n_classes)]


def accuracy_per_class(set_, data):
    pred = np.argmax(_logits_rows(set_, data.X) + set_.log_priors, axis=1)
    return np.array(
        [float(np.mean(pred[data.labels == c] == c)) for c in range(set_.n_classes)]
    )


# ------------------------------------------------------------ serialization


def scoreset_to_dict(set_):
    d = {
        "family": set_.family,
        "dim": set_.dim,
        "n_classes": set_.n_classes,
        "class_labels": list(set_.class_labels),
        "priors": set_.priors.tolist(),
        "params": pack(set_).tolist(),
    }
    if set_.family == "tabular":
        d["outcomes"] = set_.scores[0].outcomes.tolist()
    return d


def scoreset_from_dict(d):
    C, D = int(d["n_classes"]), int(d["dim"])
    if d["family"] == "tabular":
        out = np.asarray(d["outcomes"])
        like = [TabularScore(out, np.zeros(out.size)) for _ in range(C)]
    elif d["family"] == "quadratic":
        like = [QuadraticScore.zeros(D) for _ in range(C)]
    else:
        raise ValueError(f"unknown score family {d['family']!r}")
    return ScoreSet(unpack(np.asarray(d["params"]), like), d["priors"], d["class_labels"])


def save_model(set_, path):
    with open(path, "w") as fh:
        json.dump(scoreset_to_dict(set_), fh, indent=1)


def load_model(path):
    with open(path) as fh:
        return scoreset_from_dict(json.load(fh))
