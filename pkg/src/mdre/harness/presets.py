"""Named benchmark configurations.

Non-extended presets make up ``bench all``. Presets flagged ``extended`` are
heavy (dim 160/320) and only run when named explicitly.
"""
from __future__ import annotations

from dataclasses import replace

import numpy as np

from mdre import distributions as dist
from mdre.auxiliary import LinearMix, Overlapping
from mdre.distributions import Cauchy, Gaussian, Mixture, StudentT, TruncatedNormal, normal
from mdre.harness.config import ExperimentConfig
from mdre.hmc import HmcConfig
from mdre.training import OptimizerConfig

ROW1_GRID = (0.053, 0.11, 0.16, 0.21, 0.26, 0.31, 0.37, 0.42, 0.47,
             0.53, 0.58, 0.63, 0.68, 0.74, 0.79, 0.84, 0.89, 0.95)
ROW2_GRID = (0.03, 0.07, 0.1, 0.14, 0.17, 0.21, 0.24, 0.28, 0.31, 0.34,
             0.38, 0.41, 0.45, 0.48, 0.52, 0.55, 0.59, 0.62, 0.66, 0.69,
             0.72, 0.76, 0.79, 0.83, 0.86, 0.9, 0.93, 0.97)
ROW3_GRID = (0.11, 0.22, 0.33, 0.44, 0.55, 0.66, 0.77, 0.88)

# seed for the randomized mean vectors of the robustness rows
RANDOM_MEAN_SEED = 20220


def _cauchy(scale=1.0):
    return Overlapping(Cauchy([0.0], [scale]))


def _kl1d(name, p, q, m_scale, grid, method, bounds, budget=None):
    extra = {}
    if method == "mdre":
        extra["auxiliary"] = _cauchy(m_scale)
    elif method == "tre":
        extra["method_options"] = {"alphas": list(grid), "variant": "plain"}
    return ExperimentConfig(
        name=name,
        task="kl_1d",
        p=p,
        q=q,
        method=method,
        n_per_class=100_000,
        n_eval=100_000,
        n_seeds=3,
        bounds=bounds,
        budget_s=budget,
        **extra,
    )


def _block_pairs(dim):
    return [list(range(0, dim, 2)), list(range(1, dim, 2))]


def _mi(name, dim, block_mi, mu1, mu2, alphas, method, bounds, extended=False, budget=None):
    rho = dist.rho_for_target_mi(dim // 2, block_mi)
    p = dist.block_gaussian(dim, rho, mu1)
    q = Gaussian(np.full(dim, float(mu2)), dist.CovSpec("isotropic", 1.0))
    # symmetric rows shuffle joint draws into the product of marginals;
    # mean-shifted rows sample q directly
    blocks = _block_pairs(dim) if mu1 == mu2 == 0 else None
    total = 100_000
    n_classes = 2 + (len(alphas) if method == "mdre" else 0)
    return ExperimentConfig(
        name=name,
        task="mi_highdim",
        p=p,
        q=q,
        method=method,
        auxiliary=LinearMix(tuple(alphas)) if method == "mdre" else None,
        n_per_class=total // n_classes,
        n_eval=20_000,
        n_seeds=3,
        bounds=bounds,
        marginal_blocks=blocks,
        extended=extended,
        budget_s=budget,
        # unregularized L-BFGS runs away on the shifted rows; a fixed Adam budget
        optimizer=OptimizerConfig(algorithm="adam", learning_rate=1e-2, epochs=500),
    )


def _random_means(dim, lo, hi, tag):
    rng = np.random.default_rng([RANDOM_MEAN_SEED, tag])
    return rng.uniform(lo, hi, dim)


def _robust(name, p, q, alphas=(0.25, 0.5, 0.75), extended=True, n=100_000):
    return ExperimentConfig(
        name=name,
        task="robustness",
        p=p,
        q=q,
        auxiliary=LinearMix(tuple(alphas)),
        n_per_class=n // (2 + len(alphas)),
        n_eval=20_000,
        n_seeds=1,
        extended=extended,
    )


def _robustness_rows():
    bd160 = dist.CovSpec("block2x2", dist.rho_for_target_mi(80, 40))
    bd320 = dist.CovSpec("block2x2", dist.rho_for_target_mi(160, 80))
    eye = dist.CovSpec("isotropic", 1.0)
    m160 = _random_means(160, -0.5, 0.5, 1)
    m160t = _random_means(160, -0.5, 0.5, 2)
    m320t = _random_means(320, -0.5, 0.5, 3)
    m320 = _random_means(320, -1.0, 1.0, 4)
    m320tw = _random_means(320, -1.0, 1.0, 5)
    rows = [
        _robust("robust_gauss160_randmean", Gaussian(m160, bd160), Gaussian(m160, eye)),
        _robust(
            "robust_gauss160_mog",
            Gaussian(np.full(160, -1.0), bd160),
            Mixture([0.5, 0.5], (Gaussian(np.full(160, 0.9), eye), Gaussian(np.full(160, 1.1), eye))),
        ),
        _robust("robust_t160_df5", StudentT(m160t, bd160, 5), StudentT(m160t, eye, 5)),
        _robust("robust_t320_df10", StudentT(m320t, bd320, 10), StudentT(m320t, eye, 10)),
        _robust("robust_gauss320_randmean", Gaussian(m320, bd320), Gaussian(m320, eye)),
        _robust("robust_t320_df10_wide", StudentT(m320tw, bd320, 10), StudentT(m320tw, eye, 10)),
        _robust("robust_gauss_vs_t320", Gaussian(np.zeros(320), bd320), StudentT(np.zeros(320), eye, 20)),
    ]
    return rows


def _truncated():
    p = TruncatedNormal(-1.0, 0.1, -1.1, -0.9)
    q = TruncatedNormal(1.0, 0.2, -1.1, 1.2)
    m = TruncatedNormal(-1.0, 2.0, -1.1, 1.2)
    return p, q, m


def _diagnostics():
    p, q = normal(-1.0, 0.1), normal(1.0, 0.2)
    shift = ExperimentConfig(
        name="shift",
        task="shift_diagnostic",
        p=p,
        q=q,
        method="tre",
        auxiliary=_cauchy(1.0),
        method_options={"alphas": [0.25, 0.5, 0.75], "variant": "plain"},
        n_per_class=100_000,
        n_eval=10_000,
    )
    hmc_grid = np.round(np.linspace(-6.0, 6.0, 121), 10).tolist()
    hmc = ExperimentConfig(
        name="hmc",
        task="hmc_uncertainty",
        p=p,
        q=q,
        auxiliary=_cauchy(1.0),
        n_per_class=1000,
        n_eval=10_000,
        hmc=HmcConfig(step_size=0.02, leapfrog_steps=20, n_samples=500, burn_in=200),
        eval_grid=hmc_grid,
    )
    hmc_swapped = replace(hmc, name="hmc_swapped", p=normal(-1.0, 0.2), q=normal(1.0, 0.1))

    tn = lambda loc, sc, lo, hi: TruncatedNormal(loc, sc, lo, hi)  # noqa: E731
    rnd = ExperimentConfig(
        name="rnd",
        task="rnd_diagnostic",
        p=Mixture([0.5, 0.5], (tn(-1, 0.1, -1.1, -0.9), tn(1, 0.1, 0.9, 1.1))),
        q=Mixture([0.5, 0.5], (tn(-1, 0.2, -1.2, 0.8), tn(1, 0.2, 0.8, 1.0))),
        m=tn(0, 1, -1.2, 1.2),
        n_per_class=10_000,
        n_eval=10_000,
    )
    tp, tq, tm = _truncated()
    rnd_nested = replace(rnd, name="rnd_nested", p=tp, q=tq, m=tm)
    return [shift, hmc, hmc_swapped, rnd, rnd_nested]


def _build():
    p1, q1 = normal(-1.0, 0.08), normal(2.0, 0.15)
    p2 = normal(-2.0, 0.08)
    p3, q3 = normal(-10.0, 1.0), normal(10.0, 1.0)
    t1 = dist.gaussian_kl(p1, q1)
    t2 = dist.gaussian_kl(p2, q1)
    tp, tq, tm = _truncated()

    presets = [
        _kl1d("table1_row1", p1, q1, 1.0, ROW1_GRID, "mdre", (t1 - 10, t1 + 10), budget=120),
        _kl1d("table1_row1_bdre", p1, q1, 1.0, ROW1_GRID, "bdre", (None, 60.0)),
        _kl1d("table1_row1_tre", p1, q1, 1.0, ROW1_GRID, "tre", (100.0, 170.0)),
        _kl1d("table1_row2", p2, q1, 1.0, ROW2_GRID, "mdre", (t2 - 15, t2 + 15), budget=120),
        _kl1d("table1_row2_bdre", p2, q1, 1.0, ROW2_GRID, "bdre", None),
        _kl1d("table1_row2_tre", p2, q1, 1.0, ROW2_GRID, "tre", None),
        _kl1d("table1_row3", p3, q3, 2.0, ROW3_GRID, "mdre", None),
        _kl1d("table1_row3_tre", p3, q3, 2.0, ROW3_GRID, "tre", None),
        _mi("mi_dim40_sym", 40, 20, 0.0, 0.0, (0.25, 0.5, 0.75), "mdre", (17.5, 21.0), budget=600),
        _mi("mi_dim40_shift", 40, 20, -1.0, 1.0, (0.35, 0.5, 0.85), "mdre", (90.0, 135.0)),
        _mi("mi_dim40_shift_bdre", 40, 20, -1.0, 1.0, (), "bdre", (None, 50.0)),
        _mi("mi_dim160_sym", 160, 40, 0.0, 0.0, (0.25, 0.5, 0.75), "mdre", None, True),
        _mi("mi_dim160_shift", 160, 40, -0.5, 0.6, (0.15, 0.35, 0.5, 0.75, 0.95), "mdre", None, True),
        _mi("mi_dim320_sym", 320, 80, 0.0, 0.0, (0.25, 0.5, 0.75), "mdre", None, True),
        _mi("mi_dim320_shift", 320, 80, -0.5, 0.5, (0.15, 0.35, 0.5, 0.75, 0.95), "mdre", None, True),
        ExperimentConfig(
            name="robust_tn",
            task="robustness",
            p=tp,
            q=tq,
            auxiliary=Overlapping(tm),
            n_per_class=100_000,
            n_eval=100_000,
            n_seeds=3,
            # bounds are truth +- 5, filled in by the runner from the oracle
            method_options={"bound_halfwidth": 5.0},
        ),
        *_robustness_rows(),
        *_diagnostics(),
    ]
    return {c.name: c for c in presets}


_PRESETS = None


def presets():
    global _PRESETS
    if _PRESETS is None:
        _PRESETS = _build()
    return _PRESETS


def get_preset(name):
    table = presets()
    if name not in table:
        raise KeyError(f"unknown preset {name!r}; known: {', '.join(sorted(table))}")
    return table[name]


BENCH_TASKS = ("kl_1d", "mi_highdim", "robustness")


def bench_names():
    """Presets run by ``bench all``: every non-extended KL/MI preset."""
    return [n for n, c in presets().items() if not c.extended and c.task in BENCH_TASKS]
