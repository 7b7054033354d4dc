import math

import numpy as np
import pytest
from scipy import stats

from plantedlab import (ConfigurationError, ExperimentConfig, Sweep, TemplateFamily, emit_report,
                        estimate_risk, make_family, read_report, run_sweep)
from plantedlab.harness import (COLUMNS, half_width, parse_report, recipe_templates,
                                report_rows)
from plantedlab.theory import energy, smooth_signal_check


def always(value):
    def test(obs, family):
        return value
    test.__name__ = f"always{value}"
    return test


def _config(**kw):
    base = dict(n=20, k=4, m=1, placement="con", tests=("mean-scan",),
                recipe={"name": "homogeneous", "kind": "mean", "amplitude": 1.0}, trials=20)
    base.update(kw)
    return ExperimentConfig(**base)


def test_constant_tests():
    rep = estimate_risk(_config(tests=(always(0), always(1)), trials=100))
    zero, one = rep["always0"], rep["always1"]
    assert (zero.type_i, zero.type_ii, zero.risk) == (0.0, 1.0, 1.0)
    assert (one.type_i, one.type_ii, one.risk) == (1.0, 0.0, 1.0)
    assert zero.h0_trials == zero.h1_trials == 100


def test_homogeneous_scan_power():
    cfg = _config(n=100, k=10, recipe={"name": "homogeneous", "kind": "mean", "amplitude": 2.0},
                  trials=200)
    assert estimate_risk(cfg)["mean-scan"].risk <= 0.05


def test_config_validation():
    with pytest.raises(ConfigurationError):
        _config(trials=0)
    with pytest.raises(ConfigurationError):
        _config(tests=())
    with pytest.raises(ConfigurationError):
        Sweep("energy", ())
    with pytest.raises(ConfigurationError):
        Sweep("colour", (1,))
    with pytest.raises(ConfigurationError):
        _config(family=TemplateFamily("mean", np.ones((1, 4, 4))))


def test_recipes_shapes_and_smoothness():
    for name, smooth in [("homogeneous", True), ("gradient", True), ("random-smooth", True),
                         ("spike", False)]:
        shapes = recipe_templates(name, 6, 3, seed=1)
        assert shapes.shape == (3, 6, 6) and shapes.max() == 1.0
        report = smooth_signal_check(TemplateFamily("mean", shapes))
        assert report.non_spiky is smooth, name
    with pytest.raises(ConfigurationError):
        recipe_templates("plaid", 3, 1)


def test_make_family_energy_target():
    fam = make_family("gradient", "mean", 5, 2, energy=37.0)
    assert energy(fam)[0] == pytest.approx(37.0, rel=1e-12)
    var = make_family("homogeneous", "variance", 4, 1, amplitude=0.5)
    assert var.theta0 == 0.5 and np.all(var.templates == 0.5)
    with pytest.raises(ConfigurationError):
        make_family("homogeneous", "variance", 4, 1, energy=100.0)
    with pytest.raises(ConfigurationError):
        make_family("homogeneous", "mean", 4, 1)


def test_half_width_rules():
    assert half_width(50, 100) == pytest.approx(1.959963984540054 * 0.05)
    lo = stats.beta.ppf(0.025, 2, 99)
    hi = stats.beta.ppf(0.975, 3, 98)
    assert half_width(2, 100) == pytest.approx(max(0.02 - lo, hi - 0.02))
    assert half_width(0, 100) == pytest.approx(1 - 0.025 ** (1 / 100))


def test_trial_failure_reports_index():
    def boom(obs, family):
        if obs.hypothesis.value == "H1":
            raise ConfigurationError("bad")
        return 0
    with pytest.raises(ConfigurationError, match="trial 0 under H1"):
        estimate_risk(_config(tests=(boom,), trials=3))


def test_reproducible_and_thread_independent():
    cfg = _config(tests=("mean-scan", "sum"), trials=30, master_seed=5)
    a = estimate_risk(cfg)
    assert a == estimate_risk(cfg)
    assert a == estimate_risk(cfg, threads=3)


def test_single_point_sweep_matches_estimate():
    cfg = _config(trials=25)
    points = run_sweep(cfg)
    assert len(points) == 1
    rows = report_rows(points)
    rep = estimate_risk(cfg)["mean-scan"]
    assert (rows[0].type_i, rows[0].type_ii, rows[0].risk) == (rep.type_i, rep.type_ii, rep.risk)
    assert rows[0].sweep_param is None


def test_energy_sweep_monotone():
    n, k = 200, 8
    tau2 = 4.5 * math.log(n)
    cfg = ExperimentConfig(n=n, k=k, m=1, placement="con", tests=("mean-scan",),
                           recipe={"name": "homogeneous", "kind": "mean", "energy": 1.0},
                           trials=200, master_seed=3, sweep=Sweep("energy", (0.25 * tau2, 4 * tau2)))
    low, high = run_sweep(cfg)
    assert high.report["mean-scan"].risk < low.report["mean-scan"].risk


def test_lambda_crossover():
    n, k = 256, 16
    lam = 4 * math.sqrt(math.log(n / k) / k)
    cfg = ExperimentConfig(n=n, k=k, m=1, placement="con", tests=("mean-scan",),
                           recipe={"name": "homogeneous", "kind": "mean", "amplitude": 1.0},
                           trials=200, master_seed=1, sweep=Sweep("amplitude", (lam,)))
    (point,) = run_sweep(cfg)
    assert point.report["mean-scan"].risk <= 0.05


def test_sweep_over_dimensions_attaches_bounds():
    cfg = _config(trials=5, sweep=Sweep("n", (12, 20)), placement="circ")
    points = run_sweep(cfg)
    assert [p.report.n for p in points] == [12, 20]
    assert all(p.bounds is not None for p in points)
    inline = _config(recipe=None, family=make_family("gradient", "mean", 4, 1, amplitude=1.0),
                     trials=5, sweep=Sweep("energy", (3.0, 9.0)))
    points = run_sweep(inline)
    assert points[1].bounds.energy == pytest.approx(9.0)


def test_bounds_absent_when_inapplicable():
    points = run_sweep(_config(n=6, k=4, trials=3))
    row = report_rows(points)[0]
    assert row.theta_star is None and row.lb_circ_satisfied is None


def test_emit_empty_and_single(tmp_path):
    assert emit_report([], tmp_path / "e.csv") == ",".join(COLUMNS) + "\n"
    text = emit_report(run_sweep(_config(trials=4)))
    assert len(text.splitlines()) == 2


@pytest.mark.parametrize("fmt", ["csv", "json"])
def test_report_roundtrip(tmp_path, fmt):
    cfg = _config(tests=("mean-scan", "sum"), trials=7, sweep=Sweep("delta", (0.1, 0.7)))
    points = run_sweep(cfg)
    path = tmp_path / f"r.{fmt}"
    emit_report(points, path, fmt)
    assert read_report(path) == report_rows(points)
    assert parse_report(emit_report(points, format=fmt), fmt) == report_rows(points)


def test_unwritable_path(tmp_path):
    with pytest.raises(OSError):
        emit_report([], tmp_path / "missing" / "r.csv")


def test_config_json_roundtrip():
    cfg = _config(sweep=Sweep("energy", (1.0, 2.0)), master_seed=9)
    assert ExperimentConfig.from_json(cfg.to_json()) == cfg
    inline = _config(recipe=None, family=TemplateFamily("mean", np.ones((1, 4, 4))))
    assert ExperimentConfig.from_json(inline.to_json()).family == inline.family


def test_sum_interval_coverage():
    # H0 false-alarm rate of the sum test is the normal tail at tau / n
    n, k = 12, 3
    fam = TemplateFamily("mean", np.full((1, k, k), 2.0))
    truth = stats.norm.sf(fam.mu_det / 2 / n)
    covered = 0
    for seed in range(100):
        cfg = ExperimentConfig(n=n, k=k, m=1, placement="con", tests=("sum",), family=fam,
                               trials=200, master_seed=seed)
        r = estimate_risk(cfg)["sum"]
        covered += abs(r.type_i - truth) <= r.type_i_half_width
    assert covered >= 90
