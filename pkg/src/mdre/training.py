"""Fitting MDRE, BDRE and TRE by minimizing softmax cross-entropy.

Two optimizers are available. ``lbfgs`` (default) runs full-batch L-BFGS on
the convex loss and is what the benchmark presets use. ``adam`` is plain
adaptive-moment descent, full batch or minibatch.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import minimize

from mdre import scoremodel as sm
from mdre._util import stable_hash
from mdre.auxiliary import LinearMix, build_auxiliary_samples

log = logging.getLogger(__name__)


class DivergenceError(RuntimeError):
    """The loss became non-finite; ``last_state`` holds the last finite parameters."""

    def __init__(self, msg, last_state=None, last_loss=None):
        super().__init__(msg)
        self.last_state = last_state
        self.last_loss = last_loss


@dataclass
class OptimizerConfig:
    algorithm: str = "lbfgs"
    learning_rate: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    epochs: int = 500
    batch: int | None = None
    seed: int = 0
    init: str = "zeros"
    init_std: float = 0.01
    gtol: float = 1e-8
    max_iter: int = 20000
    validation_fraction: float = 0.0

    def __post_init__(self):
        if self.algorithm not in ("adam", "lbfgs"):
            raise ValueError(f"unknown optimizer {self.algorithm!r}")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.init not in ("zeros", "gaussian"):
            raise ValueError("init must be 'zeros' or 'gaussian'")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must be in [0, 1)")
        if self.batch is not None and self.batch < 1:
            raise ValueError("batch must be positive")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class FittedEstimator:
    """A trained ratio model.

    ``kind`` is ``mdre`` or ``bdre`` (``scores`` set, p = class 0, q = class
    1) or ``tre`` (``links`` holds the ordered chain of BDRE fits).
    """

    kind: str
    scores: sm.ScoreSet | None = None
    links: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    # in-memory only: validation split, waymark samples
    extras: dict = field(default_factory=dict, repr=False)

    @property
    def dim(self):
        return self.scores.dim if self.scores is not None else self.links[0].dim

    def log_ratio(self, X):
        """Estimated ``log p/q`` at each row of ``X``."""
        if self.kind == "tre":
            return sum(link.log_ratio(X) for link in self.links)
        H = sm.logits(self.scores, X)
        return H[..., 0] - H[..., 1]

    def to_dict(self):
        return {
            "kind": self.kind,
            "model": sm.scoreset_to_dict(self.scores) if self.scores is not None else None,
            "links": [link.to_dict() for link in self.links],
            "metadata": _jsonable(self.metadata),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            kind=d["kind"],
            scores=sm.scoreset_from_dict(d["model"]) if d.get("model") else None,
            links=[cls.from_dict(x) for x in d.get("links", [])],
            metadata=dict(d.get("metadata", {})),
        )


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, np.generic):
        return v.item()
    return v


# ----------------------------------------------------------------- helpers


def _as_matrix(m):
    m = np.asarray(m, dtype=np.float64)
    return m[:, None] if m.ndim == 1 else m


def _split(class_samples, fraction, seed):
    if fraction <= 0:
        return class_samples, None
    rng = np.random.default_rng([seed, 0x5EED])
    train, val = [], []
    for m in class_samples:
        idx = rng.permutation(m.shape[0])
        n_val = max(1, int(round(fraction * m.shape[0])))
        val.append(m[idx[:n_val]])
        train.append(m[idx[n_val:]])
    return train, val


def _template(family, n_classes, dim, priors, labels, outcomes):
    if family == "quadratic":
        return sm.ScoreSet([sm.QuadraticScore.zeros(dim) for _ in range(n_classes)], priors, labels)
    if family == "tabular":
        return sm.ScoreSet(
            [sm.TabularScore(outcomes, np.zeros(len(outcomes))) for _ in range(n_classes)],
            priors,
            labels,
        )
    raise ValueError(f"unknown score family {family!r}")


class _Tracker:
    """Keeps the lowest-loss parameters seen and the last finite ones."""

    def __init__(self):
        self.best_loss = math.inf
        self.best = None
        self.last = None
        self.last_loss = None
        self.history = []

    def see(self, loss, theta):
        if not math.isfinite(loss):
            raise DivergenceError(
                "non-finite training loss", last_state=self.last, last_loss=self.last_loss
            )
        self.last, self.last_loss = theta.copy(), loss
        if loss < self.best_loss:
            self.best_loss, self.best = loss, theta.copy()


def _run_lbfgs(objective, theta0, opt, tracker):
    def f(theta):
        val, g = objective(theta, None)
        tracker.see(val, theta)
        return val, g

    res = minimize(
        f,
        theta0,
        jac=True,
        method="L-BFGS-B",
        callback=lambda th: tracker.history.append(tracker.last_loss),
        options={
            "maxiter": opt.max_iter,
            "maxfun": 2 * opt.max_iter,
            "gtol": opt.gtol,
            "ftol": 1e-16,
            "maxcor": 20,
        },
    )
    return {"n_iter": int(res.nit), "converged": bool(res.success), "message": str(res.message)}


def _run_adam(objective, theta0, opt, n_rows, tracker):
    theta = theta0.copy()
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    rng = np.random.default_rng(opt.seed)
    b1, b2, lr, eps = opt.beta1, opt.beta2, opt.learning_rate, opt.epsilon
    t = 0

    def step(g):
        nonlocal t
        t += 1
        m[:] = b1 * m + (1 - b1) * g
        v[:] = b2 * v + (1 - b2) * g * g
        mhat = m / (1 - b1**t)
        vhat = v / (1 - b2**t)
        theta[:] -= lr * mhat / (np.sqrt(vhat) + eps)

    for _ in range(opt.epochs):
        if opt.batch is None or opt.batch >= n_rows:
            val, g = objective(theta, None)
            tracker.see(val, theta)
            tracker.history.append(val)
            step(g)
        else:
            order = rng.permutation(n_rows)
            for lo in range(0, n_rows, opt.batch):
                _, g = objective(theta, order[lo : lo + opt.batch])
                if not np.all(np.isfinite(g)):
                    raise DivergenceError("non-finite gradient", tracker.last, tracker.last_loss)
                step(g)
            val, _ = objective(theta, None, want_grad=False)
            tracker.see(val, theta)
            tracker.history.append(val)
    val, _ = objective(theta, None, want_grad=False)
    tracker.see(val, theta)
    return {"n_iter": t, "converged": True, "message": "epoch budget exhausted"}


# --------------------------------------------------------------------- fits


def fit_multiclass(
    class_samples,
    family="quadratic",
    priors=None,
    opt=None,
    class_labels=None,
    outcomes=None,
    kind="mdre",
):
    """Fit one multinomial logistic model over the given classes.

    ``class_samples[0]`` is p and ``class_samples[1]`` is q; any further
    entries are auxiliary classes. Returns the lowest-loss parameters seen.
    """
    opt = opt or OptimizerConfig()
    mats = [_as_matrix(m) for m in class_samples]
    if len(mats) < 2:
        raise ValueError("need at least two classes")
    if len({m.shape[1] for m in mats}) != 1:
        raise ValueError("all classes must share a dimension")
    if any(m.shape[0] < 2 for m in mats):
        raise ValueError("every class needs at least two samples")
    C, D = len(mats), mats[0].shape[1]
    if family == "tabular" and outcomes is None:
        outcomes = np.unique(np.concatenate([m.ravel() for m in mats]))

    train, val = _split(mats, opt.validation_fraction, opt.seed)
    data = sm.ClassedSamples.from_classes(train)
    template = _template(family, C, D, priors, class_labels, outcomes)
    wt = data.mean_weights(template.priors)
    logpi = template.log_priors
    X, y = data.X, data.labels

    def objective(theta, rows, want_grad=True):
        if rows is None:
            return sm.flat_loss_grad(template, theta, X, y, wt, logpi, want_grad)
        scale = X.shape[0] / rows.shape[0]
        return sm.flat_loss_grad(template, theta, X[rows], y[rows], wt[rows] * scale, logpi, want_grad)

    n_par = sm.pack(template).size
    if opt.init == "zeros":
        theta0 = np.zeros(n_par)
    else:
        theta0 = np.random.default_rng([opt.seed, 1]).normal(0.0, opt.init_std, n_par)
    initial_loss, _ = objective(theta0, None, want_grad=False)

    tracker = _Tracker()
    t0 = time.perf_counter()
    if opt.algorithm == "lbfgs":
        info = _run_lbfgs(objective, theta0, opt, tracker)
    else:
        info = _run_adam(objective, theta0, opt, X.shape[0], tracker)
    elapsed = time.perf_counter() - t0

    fitted = template.with_scores(sm.unpack(tracker.best, template))
    meta = {
        "family": family,
        "n_classes": C,
        "dim": D,
        "n_train": data.counts().tolist(),
        "initial_loss": initial_loss,
        "final_loss": tracker.best_loss,
        "train_accuracy": sm.accuracy_per_class(fitted, data).tolist(),
        "seed": opt.seed,
        "optimizer": opt.to_dict(),
        "config_hash": stable_hash({"family": family, "C": C, "D": D, "opt": opt.to_dict()}),
        "fit_seconds": elapsed,
        "loss_history": tracker.history[-50:],
        **info,
    }
    if val is not None:
        vdata = sm.ClassedSamples.from_classes(val)
        meta["val_accuracy"] = sm.accuracy_per_class(fitted, vdata).tolist()
        meta["val_loss"] = sm.loss(fitted, vdata)
    log.debug("fit %s: C=%d D=%d loss=%.6g iters=%s", kind, C, D, tracker.best_loss, info["n_iter"])
    return FittedEstimator(kind, fitted, [], meta, {"validation": val})


def fit_bdre(samples_p, samples_q, opt=None, family="quadratic"):
    """Binary logistic ratio estimator; the log-ratio readout is ``h_0 - h_1``."""
    return fit_multiclass(
        [samples_p, samples_q], family=family, opt=opt, class_labels=["p", "q"], kind="bdre"
    )


def fit_tre(samples_p, samples_q, waymark_alphas, variant="plain", opt=None, seed=0, waymarks=None):
    """Telescoping chain of K+1 BDREs over linear-mix waymarks.

    ``waymarks`` may supply pre-built waymark samples; otherwise they are
    built from ``waymark_alphas`` with ``seed`` fixing the p/q pairing.
    """
    alphas = [float(a) for a in waymark_alphas]
    if any(not 0.0 < a < 1.0 for a in alphas) or any(b <= a for a, b in zip(alphas, alphas[1:])):
        raise ValueError("waymark alphas must be strictly increasing inside (0, 1)")
    xp, xq = _as_matrix(samples_p), _as_matrix(samples_q)
    if waymarks is None:
        waymarks = build_auxiliary_samples(LinearMix(tuple(alphas), variant), xp, xq, seed) if alphas else []
    chain = [xp, *waymarks, xq]
    links = [fit_bdre(a, b, opt) for a, b in zip(chain, chain[1:])]
    meta = {
        "alphas": alphas,
        "variant": variant,
        "seed": seed,
        "final_loss": [lk.metadata["final_loss"] for lk in links],
        "config_hash": stable_hash({"tre": alphas, "variant": variant, "opt": (opt or OptimizerConfig()).to_dict()}),
    }
    return FittedEstimator("tre", None, links, meta, {"waymarks": waymarks})
