"""Experiment configuration documents and their canonical JSON form."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

from mdre import auxiliary as aux
from mdre import distributions as dist
from mdre._util import canonical_json, stable_hash
from mdre.hmc import HmcConfig
from mdre.training import OptimizerConfig

TASKS = ("kl_1d", "mi_highdim", "robustness", "shift_diagnostic", "hmc_uncertainty", "rnd_diagnostic")
METHODS = ("mdre", "bdre", "tre")


class ConfigError(ValueError):
    pass


def scheme_to_dict(scheme):
    if scheme is None:
        return None
    if isinstance(scheme, aux.Overlapping):
        return {"kind": "Overlapping", "spec": dist.spec_to_dict(scheme.spec)}
    if isinstance(scheme, aux.LinearMix):
        return {"kind": "LinearMix", "alphas": list(scheme.alphas), "variant": scheme.variant}
    if isinstance(scheme, aux.DimensionWiseMix):
        return {"kind": "DimensionWiseMix", "chunks": int(scheme.chunks)}
    raise ConfigError(f"unknown auxiliary scheme {scheme!r}")


def scheme_from_dict(d):
    if d is None:
        return None
    kind = d.get("kind")
    if kind == "Overlapping":
        return aux.Overlapping(dist.spec_from_dict(d["spec"]))
    if kind == "LinearMix":
        return aux.LinearMix(tuple(d["alphas"]), d.get("variant", "plain"))
    if kind == "DimensionWiseMix":
        return aux.DimensionWiseMix(int(d["chunks"]))
    raise ConfigError(f"unknown auxiliary scheme kind {kind!r}")


@dataclass
class ExperimentConfig:
    """One experiment: distributions, estimator, sizes, optimizer, evaluation and seed.

    ``q`` is always the denominator spec used for ground truth. For
    ``mi_highdim`` the q training samples are instead made by shuffling fresh
    joint draws (``marginal_blocks`` gives the column groups).
    ``bounds`` is the [lo, hi] interval a bench run must land in; either end
    may be ``None``.
    """

    name: str
    task: str
    p: object
    q: object
    method: str = "mdre"
    auxiliary: object = None
    method_options: dict = field(default_factory=dict)
    n_per_class: int = 100_000
    n_eval: int = 100_000
    eval_mode: str = "heldout"
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    seed: int = 0
    n_seeds: int = 1
    true_value: float | None = None
    bounds: tuple | None = None
    marginal_blocks: list | None = None
    m: object = None
    hmc: HmcConfig | None = None
    eval_grid: list | None = None
    extended: bool = False
    budget_s: float | None = None

    def __post_init__(self):
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}")
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}")
        if self.n_per_class < 100 or self.n_eval < 100:
            raise ConfigError("sample sizes must be >= 100")
        if self.eval_mode not in ("heldout", "insample"):
            raise ConfigError("eval_mode must be 'heldout' or 'insample'")
        if self.n_seeds < 1:
            raise ConfigError("n_seeds must be >= 1")
        if self.p.dim != self.q.dim:
            raise ConfigError("p and q dimensions differ")
        if self.method == "tre" and "alphas" not in self.method_options:
            raise ConfigError("tre needs method_options['alphas']")
        if self.bounds is not None:
            self.bounds = tuple(self.bounds)

    def with_seed(self, seed):
        return replace(self, seed=int(seed), n_seeds=1)

    def seeds(self):
        """Seeds for a multi-run preset: base seed + run index."""
        return [self.seed + i for i in range(self.n_seeds)]

    def to_dict(self):
        return {
            "name": self.name,
            "task": self.task,
            "p": dist.spec_to_dict(self.p),
            "q": dist.spec_to_dict(self.q),
            "method": self.method,
            "auxiliary": scheme_to_dict(self.auxiliary),
            "method_options": dict(self.method_options),
            "n_per_class": self.n_per_class,
            "n_eval": self.n_eval,
            "eval_mode": self.eval_mode,
            "optimizer": self.optimizer.to_dict(),
            "seed": self.seed,
            "n_seeds": self.n_seeds,
            "true_value": self.true_value,
            "bounds": list(self.bounds) if self.bounds is not None else None,
            "marginal_blocks": self.marginal_blocks,
            "m": dist.spec_to_dict(self.m) if self.m is not None else None,
            "hmc": self.hmc.to_dict() if self.hmc is not None else None,
            "eval_grid": self.eval_grid,
            "extended": self.extended,
            "budget_s": self.budget_s,
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        try:
            d["p"] = dist.spec_from_dict(d["p"])
            d["q"] = dist.spec_from_dict(d["q"])
            d["auxiliary"] = scheme_from_dict(d.get("auxiliary"))
            if d.get("optimizer") is not None:
                d["optimizer"] = OptimizerConfig.from_dict(d["optimizer"])
            else:
                d.pop("optimizer", None)
            if d.get("m") is not None:
                d["m"] = dist.spec_from_dict(d["m"])
            if d.get("hmc") is not None:
                d["hmc"] = HmcConfig(**d["hmc"])
        except KeyError as exc:
            raise ConfigError(f"missing config field {exc}") from None
        return cls(**d)

    def config_hash(self):
        """Stable hash of everything but the seed fields."""
        body = self.to_dict()
        body.pop("seed")
        body.pop("n_seeds")
        return stable_hash(body)


def dump_config(cfg, path):
    with open(path, "w") as fh:
        fh.write(canonical_json(cfg.to_dict()))
        fh.write("\n")


def load_config(path):
    with open(path) as fh:
        return ExperimentConfig.from_dict(json.load(fh))
