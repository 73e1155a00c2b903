import csv
import json
import re
from dataclasses import replace

import numpy as np
import pytest

from mdre import distributions as dist
from mdre import training
from mdre.auxiliary import Overlapping
from mdre.harness import diagnostics as diag
from mdre.harness import presets, runner
from mdre.harness.cli import main
from mdre.harness.config import ConfigError, ExperimentConfig, dump_config, load_config
from mdre.hmc import HmcConfig


def small_cfg(**kw):
    base = ExperimentConfig(
        name="small",
        task="kl_1d",
        p=dist.normal(-1.0, 0.5),
        q=dist.normal(1.0, 0.5),
        # a Gaussian auxiliary keeps every true log-ratio quadratic
        auxiliary=Overlapping(dist.normal(0.0, 2.0)),
        n_per_class=2000,
        n_eval=2000,
    )
    return replace(base, **kw)


@pytest.fixture
def cfg_path(tmp_path):
    path = tmp_path / "cfg.json"
    dump_config(small_cfg(), path)
    return path


@pytest.mark.parametrize("name", sorted(presets.presets()))
def test_preset_config_round_trip(name, tmp_path):
    cfg = presets.get_preset(name)
    path = tmp_path / "c.json"
    dump_config(cfg, path)
    back = load_config(path)
    assert back.to_dict() == json.loads(path.read_text())
    assert back.config_hash() == cfg.config_hash()


def test_config_hash_ignores_seed_only():
    cfg = small_cfg()
    assert cfg.with_seed(5).config_hash() == cfg.config_hash()
    assert replace(cfg, n_per_class=3000).config_hash() != cfg.config_hash()


def test_config_validation():
    with pytest.raises(ConfigError):
        small_cfg(task="nope")
    with pytest.raises(ConfigError):
        small_cfg(n_per_class=10)
    with pytest.raises(ConfigError):
        small_cfg(method="tre")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"name": "x", "task": "kl_1d"})


def test_bench_presets_are_not_extended():
    names = presets.bench_names()
    assert "table1_row1" in names and "mi_dim40_sym" in names
    assert not any(presets.get_preset(n).extended for n in names)
    with pytest.raises(KeyError):
        presets.get_preset("missing")


def test_subseed_streams_are_distinct_and_stable():
    assert runner.subseed(0, 1) == runner.subseed(0, 1)
    assert len({runner.subseed(s, k) for s in range(3) for k in range(6)}) == 18


def test_run_is_reproducible():
    cfg = small_cfg()
    a, b = runner.run(cfg, 3), runner.run(cfg, 3)
    assert a.estimate == b.estimate
    assert abs(a.estimate - dist.gaussian_kl(cfg.p, cfg.q)) < 0.5


def test_stage_error_names_stage():
    cfg = small_cfg(p=dist.TruncatedNormal(0, 1, -1, 1), q=dist.TruncatedNormal(0, 1, -1, 1))
    with pytest.raises(runner.StageError) as info:
        runner.fit_method(replace(cfg, method="tre", method_options={"alphas": [2.0]}), *runner.draw_training_data(cfg, 0), 0)
    assert info.value.stage == "fit"


def test_record_row_format():
    rec = runner.ResultRecord("abc", 1, "mdre", "kl_1d", 200.2708312, 203.123456789, 0.0123456789, 1.5, "x=1")
    assert rec.row() == ["abc", "1", "mdre", "kl_1d", "200.271", "203.123", "0.0123457", "1.5", "x=1"]
    assert replace(rec, bounds=(None, 60.0)).within_bounds() is False
    assert replace(rec, bounds=(190.0, None)).within_bounds() is True


def test_mean_record():
    recs = [runner.ResultRecord("h", s, "mdre", "kl_1d", 1.0, v, 0.1, 1.0, name="n") for s, v in enumerate([1.0, 2.0, 3.0])]
    agg = runner.mean_record(recs)
    assert agg.estimate == 2.0 and agg.stderr == pytest.approx(1 / 3**0.5)
    assert agg.runtime_s == 3.0


SIG6 = re.compile(r"^-?(\d+(\.\d*)?|\.\d+)(e[+-]\d+)?$|^(nan|inf|-inf)$")


def test_cli_kl_csv(cfg_path, tmp_path, capsys):
    out = tmp_path / "r.csv"
    assert main(["kl", "--config", str(cfg_path), "--seed", "2", "--out", str(out)]) == 0
    rows = list(csv.reader(out.open()))
    assert rows[0] == list(runner.CSV_COLUMNS)
    assert len(rows) == 2
    row = dict(zip(rows[0], rows[1]))
    assert row["seed"] == "2" and row["method"] == "mdre"
    for col in ("true_value", "estimate", "stderr", "runtime_s"):
        assert SIG6.match(row[col])
        digits = re.sub(r"e.*$", "", row[col]).replace("-", "").replace(".", "").lstrip("0")
        assert len(digits) <= 6


def test_cli_json_format(cfg_path, tmp_path):
    out = tmp_path / "r.json"
    assert main(["kl", "--config", str(cfg_path), "--format", "json", "--out", str(out)]) == 0
    items = json.loads(out.read_text())
    assert set(runner.CSV_COLUMNS) <= set(items[0])


def test_cli_bench_exit_codes(tmp_path):
    ok = tmp_path / "ok.json"
    dump_config(small_cfg(bounds=(0.0, 100.0)), ok)
    assert main(["bench", str(ok), "--out", str(tmp_path / "a.csv")]) == 0
    bad = tmp_path / "bad.json"
    dump_config(small_cfg(bounds=(500.0, None)), bad)
    assert main(["bench", str(bad), "--out", str(tmp_path / "b.csv")]) == 2


def test_cli_errors_exit_one(tmp_path):
    assert main(["kl", "--config", str(tmp_path / "missing.json")]) == 1
    assert main(["kl"]) == 1
    assert main(["bench", "no_such_preset"]) == 1


def test_cli_sample_and_fit(cfg_path, tmp_path):
    out = tmp_path / "s.csv"
    assert main(["sample", "--config", str(cfg_path), "--n", "5", "--which", "m", "--out", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 6
    fit = tmp_path / "f.json"
    assert main(["fit", "--config", str(cfg_path), "--out", str(fit)]) == 0
    doc = json.loads(fit.read_text())
    est = training.FittedEstimator.from_dict(doc["fit"])
    assert est.scores.n_classes == 3


def test_cli_diagnose_rnd(tmp_path):
    out = tmp_path / "r.csv"
    assert main(["diagnose", "rnd", "--preset", "rnd_nested", "--out", str(out)]) == 0
    row = dict(zip(*csv.reader(out.open())))
    assert row["violations"] == "0"


def test_cli_hmc_small(tmp_path):
    cfg = replace(
        presets.get_preset("hmc"),
        n_per_class=200,
        n_eval=200,
        hmc=HmcConfig(step_size=0.05, leapfrog_steps=10, n_samples=30, burn_in=10),
        eval_grid=[-1.0, 0.0, 1.0],
    )
    path = tmp_path / "h.json"
    dump_config(cfg, path)
    out = tmp_path / "h.csv"
    assert main(["hmc", "--config", str(path), "--out", str(out)]) == 0
    rows = list(csv.reader(out.open()))
    assert rows[0] == ["x", "posterior_mean", "posterior_std", "point_estimate", "true_log_ratio"]
    assert len(rows) == 4


def test_shift_diagnostic_small():
    cfg = replace(presets.get_preset("shift"), n_per_class=3000, n_eval=500)
    rep = diag.shift_diagnostic(cfg)
    readouts = {r for r, _ in rep.errors}
    assert readouts == {"tre_link0", "tre_link1", "tre_link2", "tre_link3", "tre_chain", "mdre_aux", "mdre_waymarks"}
    assert {s for _, s in rep.errors} == {"p", "m1", "m2", "m3", "q", "aux"}
    assert len(rep.link_own_errors) == 4
    assert len(rep.rows[0]) == len(diag.SCATTER_COLUMNS)


def test_linear_mix_spec_matches_samples():
    p, q = dist.normal(-1.0, 0.1), dist.normal(1.0, 0.2)
    m = diag.linear_mix_spec(p, q, 0.25)
    assert float(m.mean[0]) == pytest.approx(-0.5)
    assert m.cov.value == pytest.approx(0.75**2 * 0.01 + 0.25**2 * 0.04)


def test_accuracy_band_verdicts():
    rng = np.random.default_rng(0)
    far = [rng.normal(-10, 1, 2000), rng.normal(10, 1, 2000)]
    fit = training.fit_bdre(*far, training.OptimizerConfig(validation_fraction=0.25))
    assert diag.accuracy_band(fit).verdict == "too_easy"
    mid = [rng.normal(-0.5, 1, 4000), rng.normal(0.5, 1, 4000)]
    fit = training.fit_bdre(*mid, training.OptimizerConfig(validation_fraction=0.25))
    assert diag.accuracy_band(fit).verdict == "in_band"
    with pytest.raises(ValueError):
        diag.accuracy_band(training.fit_bdre(*mid))


def test_accuracy_band_identical_classes_not_too_easy():
    rng = np.random.default_rng(1)
    same = [rng.normal(0, 1, 4000), rng.normal(0, 1, 4000), rng.normal(0, 1, 4000)]
    fit = training.fit_multiclass(same, opt=training.OptimizerConfig(validation_fraction=0.25))
    band = diag.accuracy_band(fit)
    assert band.verdict != "too_easy"
    assert band.accuracies.mean() < 0.5


def test_rnd_diagnostic_flags_escape():
    rep = diag.rnd_diagnostic(
        dist.TruncatedNormal(0, 1, -1, 1), dist.TruncatedNormal(0, 1, -1, 1), dist.TruncatedNormal(0, 1, -2, 2), n=2000
    )
    assert rep.infinite > 0 and rep.p_subset_m
